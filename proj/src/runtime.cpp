// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/runtime.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <cstdlib>

#ifndef DERMTRACE_SOURCE_DIR
#define DERMTRACE_SOURCE_DIR "."
#endif

namespace dermtrace {

std::filesystem::path default_config_path()
{
    if (const char* env = std::getenv("DERMTRACE_CONFIG"); env && *env)
        return env;
    return std::filesystem::path(DERMTRACE_SOURCE_DIR) / "config" / "default.json";
}

json read_json_file(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw ConfigError(path.string() + " is not valid JSON");
    return doc;
}

std::vector<std::string> read_concept_vocabulary(const std::filesystem::path& path)
{
    auto doc = read_json_file(path);
    const json& arr = doc.is_object() && doc.contains("concepts") ? doc["concepts"] : doc;
    try {
        return arr.get<std::vector<std::string>>();
    } catch (const json::exception&) {
        throw ConfigError(path.string() + ": concept vocabulary must be a list of strings");
    }
}

namespace {

const json& section(const json& config, const char* key)
{
    static const json empty = json::object();
    if (!config.contains(key))
        return empty;
    if (!config[key].is_object())
        throw ConfigError(std::string("config section '") + key + "' must be an object");
    return config[key];
}

std::optional<std::filesystem::path> path_value(const json& sec, const char* key, const std::filesystem::path& base)
{
    if (!sec.contains(key) || sec[key].is_null())
        return std::nullopt;
    std::filesystem::path p = sec[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
}

std::filesystem::path required_path(const json& sec, const char* sec_name, const char* key,
                                    const std::filesystem::path& base)
{
    auto p = path_value(sec, key, base);
    if (!p)
        throw ConfigError(std::string("config key '") + sec_name + "." + key + "' is required");
    return *p;
}

RemoteEndpoint endpoint_from(const json& remote_defaults, const json& spec)
{
    json merged = remote_defaults;
    for (auto it = spec.begin(); it != spec.end(); ++it)
        merged[it.key()] = it.value();
    auto ep = RemoteEndpoint::from_json(merged);
    if (!ep.configured())
        throw ConfigError("remote endpoint is missing its url");
    return ep;
}

std::set<ToolId> tool_set(const json& arr)
{
    std::set<ToolId> out;
    for (const auto& name : arr)
        out.insert(tool_from_string(name.get<std::string>()));
    return out;
}

} // namespace

Runtime build_runtime(const json& config, const std::filesystem::path& base_dir)
{
    Runtime rt;
    rt.config = config;
    const auto& remote = section(config, "remote");

    const auto& onto_sec = section(config, "ontology");
    rt.fuzzy_threshold = onto_sec.value("fuzzy_threshold", default_fuzzy_threshold);
    if (auto p = path_value(onto_sec, "taxonomy", base_dir))
        rt.ontology = std::make_shared<const OntologyIndex>(OntologyIndex::load(*p));

    const auto& vocab_sec = section(config, "vocabulary");
    if (auto p = path_value(vocab_sec, "concepts", base_dir))
        rt.concept_vocabulary = read_concept_vocabulary(*p);

    const auto& orch = section(config, "orchestrator");
    rt.orchestrator.k_max = orch.value("k_max", rt.orchestrator.k_max);
    rt.orchestrator.parallelism_limit = orch.value("parallelism_limit", rt.orchestrator.parallelism_limit);
    rt.orchestrator.call_timeout =
        std::chrono::milliseconds(static_cast<long long>(orch.value("call_timeout_s", 60.0) * 1000.0));
    rt.orchestrator.planner_attempts = orch.value("planner_attempts", rt.orchestrator.planner_attempts);
    rt.orchestrator.critic = orch.value("critic", true);
    rt.orchestrator.ablation = orch.value("ablation", false);
    if (orch.contains("enabled_tools"))
        rt.orchestrator.enabled_tools = tool_set(orch["enabled_tools"]);
    rt.orchestrator.thresholds = CriticThresholds::from_json(section(config, "critic"));
    rt.orchestrator.validate();

    const auto& case_sec = section(config, "case_retrieval");
    auto case_dim = case_sec.value("dimension", default_case_dimension);
    rt.defaults.case_k = case_sec.value("k", default_case_k);
    if (rt.defaults.case_k < 1)
        throw ConfigError("case_retrieval.k must be at least 1");
    if (auto dir = path_value(case_sec, "index_dir", base_dir); dir && std::filesystem::exists(*dir)) {
        rt.cases = std::make_shared<const CaseStore>(CaseStore::load(*dir));
    } else if (auto corpus = path_value(case_sec, "corpus", base_dir)) {
        auto records = read_case_corpus(*corpus);
        rt.cases = std::make_shared<const CaseStore>(
            ingest_cases(records, case_dim, case_sec.value("validate_paths", true) ? rt.ontology.get() : nullptr).store);
    }

    const auto& guide_sec = section(config, "guideline_retrieval");
    auto guide_dim = guide_sec.value("dimension", default_guideline_dimension);
    std::shared_ptr<EmbeddingProvider> embedder;
    const auto& emb_sec = section(guide_sec, "embedder");
    if (emb_sec.value("kind", std::string("hash")) == "remote")
        embedder = std::make_shared<RemoteEmbedder>(endpoint_from(remote, section(emb_sec, "endpoint")), guide_dim);
    else
        embedder = std::make_shared<HashEmbedder>(guide_dim);
    std::shared_ptr<RerankProvider> reranker;
    const auto& rr_sec = section(guide_sec, "reranker");
    if (rr_sec.value("kind", std::string("jaccard")) == "remote")
        reranker = std::make_shared<RemoteReranker>(endpoint_from(remote, section(rr_sec, "endpoint")));
    else
        reranker = std::make_shared<JaccardReranker>();
    GuidelinePipelineConfig pipeline;
    pipeline.dense_k = guide_sec.value("dense_k", pipeline.dense_k);
    pipeline.keyword_k = guide_sec.value("keyword_k", pipeline.keyword_k);
    pipeline.fused_top_n = guide_sec.value("fused_top_n", pipeline.fused_top_n);
    pipeline.rerank_top_m = guide_sec.value("rerank_top_m", pipeline.rerank_top_m);
    pipeline.k_rrf = guide_sec.value("k_rrf", pipeline.k_rrf);
    Bm25Params bm25;
    const auto& bm_sec = section(guide_sec, "bm25");
    bm25.k1 = bm_sec.value("k1", bm25.k1);
    bm25.b = bm_sec.value("b", bm25.b);
    if (auto p = path_value(guide_sec, "stopwords", base_dir))
        rt.stopwords = std::make_shared<const StopWordList>(StopWordList::load(*p));
    else
        rt.stopwords = std::make_shared<const StopWordList>();
    if (auto dir = path_value(guide_sec, "index_dir", base_dir); dir && std::filesystem::exists(*dir)) {
        rt.guidelines = std::make_shared<const GuidelineIndex>(GuidelineIndex::load(*dir));
    } else if (auto corpus = path_value(guide_sec, "corpus", base_dir)) {
        rt.guidelines = std::make_shared<const GuidelineIndex>(
            GuidelineIndex::build(read_guideline_corpus(*corpus), *embedder, bm25));
    }
    if (rt.guidelines && rt.guidelines->dimension() != embedder->dimension())
        throw ConfigError("guideline index dimension " + std::to_string(rt.guidelines->dimension())
                          + " differs from the embedder dimension " + std::to_string(embedder->dimension()));

    if (rt.ontology)
        rt.defaults.candidates = rt.ontology->leaf_names();
    if (config.contains("candidates"))
        rt.defaults.candidates = config["candidates"].get<std::vector<std::string>>();
    rt.defaults.features = rt.concept_vocabulary;

    const auto& tools = section(config, "tools");
    auto mode = tools.value("mode", std::string("fixture"));
    auto threshold = tools.value("concept_threshold", default_concept_threshold);
    std::shared_ptr<Classifier> classifier;
    std::shared_ptr<Annotator> annotator;
    std::shared_ptr<VqaBackend> dermo;
    std::shared_ptr<VqaBackend> qwen;
    std::shared_ptr<ImageEmbedder> image_encoder;
    if (mode == "fixture") {
        auto store = std::make_shared<const FixtureStore>(
            FixtureStore::load(required_path(tools, "tools", "fixtures", base_dir)));
        classifier = std::make_shared<FixtureClassifier>(store);
        annotator = std::make_shared<FixtureAnnotator>(store);
        dermo = std::make_shared<FixtureVqa>(store, ToolId::dermo_gpt);
        qwen = std::make_shared<FixtureVqa>(store, ToolId::qwen_vl);
        if (auto p = path_value(tools, "image_embeddings", base_dir))
            image_encoder = FixtureImageEmbedder::load(*p);
    } else if (mode == "remote") {
        const auto& eps = section(tools, "endpoints");
        auto ep = [&](const char* name) { return endpoint_from(remote, section(eps, name)); };
        classifier = std::make_shared<RemoteClassifier>(ep("panderm"));
        annotator = std::make_shared<RemoteAnnotator>(ep("make"));
        dermo = std::make_shared<RemoteVqa>(ep("dermo_gpt"));
        qwen = std::make_shared<RemoteVqa>(ep("qwen_vl"));
        image_encoder = std::make_shared<RemoteImageEmbedder>(ep("image_embedder"), case_dim);
    } else {
        throw ConfigError("tools.mode must be 'fixture' or 'remote', got '" + mode + "'");
    }

    auto reg = [&](ToolId id, std::shared_ptr<Tool> impl) {
        rt.registry.register_tool(ToolDescriptor::standard(id), std::move(impl));
    };
    reg(ToolId::panderm, std::make_shared<ClassifierTool>(classifier));
    reg(ToolId::make, std::make_shared<AnnotatorTool>(annotator, threshold));
    reg(ToolId::dermo_gpt, std::make_shared<VqaTool>(dermo));
    reg(ToolId::qwen_vl, std::make_shared<VqaTool>(qwen));
    if (rt.cases && image_encoder)
        reg(ToolId::case_rag, std::make_shared<CaseRagTool>(rt.cases, image_encoder, rt.defaults.case_k, rt.ontology));
    if (rt.guidelines)
        reg(ToolId::guideline_rag,
            std::make_shared<GuidelineRagTool>(rt.guidelines, rt.stopwords, embedder, reranker, pipeline));
    if (rt.ontology)
        reg(ToolId::ontology, std::make_shared<OntologyTool>(rt.ontology, rt.fuzzy_threshold));

    const auto& plan_sec = section(config, "planner");
    auto kind = plan_sec.value("kind", std::string("rule_based"));
    if (kind == "rule_based")
        rt.planner = std::make_shared<RuleBasedPlanner>(rt.ontology);
    else if (kind == "remote")
        rt.planner = std::make_shared<RemotePlanner>(endpoint_from(remote, section(plan_sec, "endpoint")),
                                                     PromptTemplates::from_json(section(plan_sec, "templates")));
    else
        throw ConfigError("planner.kind must be 'rule_based' or 'remote', got '" + kind + "'");

    const auto& eval = section(config, "eval");
    rt.eval.f1_policy = absent_policy_from_string(eval.value("f1_absent_labels", std::string("exclude")));
    rt.eval.exclude_failures = eval.value("exclude_failures", false);
    rt.eval.workers = std::max<std::size_t>(1, eval.value("workers", std::size_t{1}));
    return rt;
}

Runtime load_runtime(const std::filesystem::path& config_path)
{
    auto doc = read_json_file(config_path);
    auto base = config_path.has_parent_path() ? config_path.parent_path() : std::filesystem::path(".");
    return build_runtime(doc, base);
}

RunHooks Runtime::hooks(std::ostream* trace) const
{
    RunHooks h;
    h.ontology = ontology.get();
    h.defaults = defaults;
    h.trace = trace;
    return h;
}

Response Runtime::ask(const Query& query, const OrchestratorConfig& config, std::ostream* trace) const
{
    return run(query, config, *planner, registry, hooks(trace));
}

} // namespace dermtrace
