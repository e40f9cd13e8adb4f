// SPDX-License-Identifier: Apache-2.0
// Command-line front end: ask, eval, ablate, ingest-cases, ingest-guidelines,
// ontology.

#include "dermtrace/error.hpp"
#include "dermtrace/eval.hpp"
#include "dermtrace/runtime.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace dermtrace;

namespace {

std::set<ToolId> parse_disabled(const std::vector<std::string>& names)
{
    std::set<ToolId> out;
    for (const auto& n : names)
        out.insert(tool_from_string(n));
    return out;
}

int cmd_ask(const std::string& config, const std::string& image, const std::string& question,
            const std::string& trace_path, const std::vector<std::string>& disabled)
{
    auto rt = load_runtime(config);
    auto cfg = rt.orchestrator;
    for (auto t : parse_disabled(disabled))
        cfg.enabled_tools.erase(t);
    if (!disabled.empty())
        cfg.ablation = true;
    std::error_code ec;
    Query q{image, question, std::filesystem::is_regular_file(image, ec)};
    std::ostringstream trace;
    Response r;
    try {
        r = rt.ask(q, cfg, &trace);
    } catch (const OrchestrationError& e) {
        if (!trace_path.empty())
            write_file(trace_path, trace.str());
        throw;
    }
    if (!trace_path.empty())
        write_file(trace_path, trace.str());
    std::cout << r.answer;
    if (!r.answer.empty() && r.answer.back() != '\n')
        std::cout << '\n';
    std::cout << "rounds: " << r.rounds_used << "\nstatus: " << to_string(r.status) << '\n';
    for (const auto& c : r.citations)
        std::cout << "cite: " << c << '\n';
    return r.status == RunStatus::success ? 0 : 3;
}

int cmd_eval(const std::string& config, const std::string& manifest, const std::string& task_name,
             const std::vector<std::string>& disabled, bool strict, const std::string& trace_dir,
             const std::string& report_path, std::size_t workers)
{
    auto rt = load_runtime(config);
    if (workers)
        rt.eval.workers = workers;
    auto task = task_from_string(task_name);
    auto records = read_manifest(manifest, task);
    EvalOptions opts;
    opts.disabled = parse_disabled(disabled);
    opts.strict = strict;
    if (!trace_dir.empty())
        opts.trace_dir = trace_dir;
    auto result = run_eval(records, task, rt, opts);
    auto doc = result.report.to_json();
    json recs = json::array();
    for (const auto& r : result.records) {
        json j{{"rounds_used", r.rounds_used}, {"status", to_string(r.status)}};
        if (!r.error.empty())
            j["error"] = r.error;
        recs.push_back(std::move(j));
    }
    doc["records"] = recs;
    if (!report_path.empty())
        write_file(report_path, doc.dump(2) + "\n");
    std::cout << result.report.to_json().dump() << '\n';
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& manifest, const std::string& task_name,
               const std::string& tool, bool strict, const std::string& trace_dir)
{
    auto rt = load_runtime(config);
    auto task = task_from_string(task_name);
    auto records = read_manifest(manifest, task);
    std::optional<std::filesystem::path> dir;
    if (!trace_dir.empty())
        dir = trace_dir;
    auto report = ablate(records, task, rt, tool, strict, dir);
    std::cout << report.to_json().dump() << '\n';
    return 0;
}

int cmd_ingest_cases(const std::string& in, const std::string& out, std::size_t dim, const std::string& taxonomy)
{
    std::optional<OntologyIndex> onto;
    if (!taxonomy.empty())
        onto = OntologyIndex::load(taxonomy);
    auto records = read_case_corpus(in);
    auto ingest = ingest_cases(records, dim, onto ? &*onto : nullptr);
    std::filesystem::create_directories(out);
    ingest.store.save(out, sha256_hex(read_file(in)));
    std::cout << json{{"cases", ingest.store.size()}, {"duplicate_warnings", ingest.duplicate_warnings}}.dump()
              << '\n';
    return 0;
}

int cmd_ingest_guidelines(const std::string& in, const std::string& out, std::size_t dim)
{
    HashEmbedder embedder(dim);
    auto index = GuidelineIndex::build(read_guideline_corpus(in), embedder);
    std::filesystem::create_directories(out);
    index.save(out, sha256_hex(read_file(in)));
    std::cout << json{{"chunks", index.size()}, {"dimension", index.dimension()}}.dump() << '\n';
    return 0;
}

int cmd_ontology(const std::string& config, const std::string& taxonomy, const std::string& mode,
                 const std::string& name)
{
    std::filesystem::path path = taxonomy;
    double threshold = default_fuzzy_threshold;
    if (path.empty()) {
        auto doc = read_json_file(config);
        auto onto = doc.value("ontology", json::object());
        threshold = onto.value("fuzzy_threshold", threshold);
        path = onto.value("taxonomy", std::string());
        if (path.empty())
            throw ConfigError("no taxonomy configured");
        if (path.is_relative())
            path = std::filesystem::path(config).parent_path() / path;
    }
    auto index = OntologyIndex::load(path);
    auto answer = query_ontology(ontology_mode_from_string(mode), name, index, threshold);
    std::cout << answer.to_json().dump() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Evidence-grounded dermatology image analysis"};
    app.require_subcommand(1);
    std::string config = default_config_path().string();
    app.add_option("--config", config, "Configuration file")->check(CLI::ExistingFile);

    std::string image, question, trace;
    std::vector<std::string> disabled;
    auto* ask = app.add_subcommand("ask", "Answer one question about one image");
    ask->add_option("--image", image, "Image path or fixture reference")->required();
    ask->add_option("--question", question, "Question text")->required();
    ask->add_option("--trace", trace, "Write the run trace here");
    ask->add_option("--disable", disabled, "Tool to leave out (repeatable)");

    std::string manifest, task, trace_dir, report;
    bool strict = false;
    std::size_t workers = 0;
    auto* eval = app.add_subcommand("eval", "Score a manifest");
    eval->add_option("--manifest", manifest, "Manifest file")->required()->check(CLI::ExistingFile);
    eval->add_option("--task", task, "diagnosis | concept | caption")->required();
    eval->add_option("--disable", disabled, "Tool to leave out (repeatable)");
    eval->add_flag("--strict", strict, "Refuse to disable a required tool");
    eval->add_option("--trace-dir", trace_dir, "Directory for per-record traces");
    eval->add_option("--report", report, "Write the full report here");
    eval->add_option("--workers", workers, "Records evaluated concurrently");

    std::string tool;
    auto* abl = app.add_subcommand("ablate", "Compare the full system with one tool left out");
    abl->add_option("--manifest", manifest, "Manifest file")->required()->check(CLI::ExistingFile);
    abl->add_option("--task", task, "diagnosis | concept | caption")->required();
    abl->add_option("--tool", tool, "Tool to leave out, or 'none'")->required();
    abl->add_flag("--strict", strict, "Refuse to disable a required tool");
    abl->add_option("--trace-dir", trace_dir, "Directory for per-record traces");

    std::string in, out, taxonomy;
    std::size_t case_dim = default_case_dimension;
    auto* icases = app.add_subcommand("ingest-cases", "Build a case store directory");
    icases->add_option("--in", in, "Case corpus (JSONL)")->required()->check(CLI::ExistingFile);
    icases->add_option("--out", out, "Output directory")->required();
    icases->add_option("--dimension", case_dim, "Embedding dimension");
    icases->add_option("--taxonomy", taxonomy, "Validate category paths against this taxonomy");

    std::size_t guide_dim = default_guideline_dimension;
    auto* iguide = app.add_subcommand("ingest-guidelines", "Build a guideline index directory");
    iguide->add_option("--in", in, "Guideline corpus (JSONL)")->required()->check(CLI::ExistingFile);
    iguide->add_option("--out", out, "Output directory")->required();
    iguide->add_option("--dimension", guide_dim, "Embedding dimension");

    std::string mode, name;
    auto* onto = app.add_subcommand("ontology", "Query the taxonomy");
    onto->add_option("--mode", mode, "hierarchy | children | siblings | search")->required();
    onto->add_option("--name", name, "Disease name")->required();
    onto->add_option("--taxonomy", taxonomy, "Taxonomy file (defaults to the configured one)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ask)
            return cmd_ask(config, image, question, trace, disabled);
        if (*eval)
            return cmd_eval(config, manifest, task, disabled, strict, trace_dir, report, workers);
        if (*abl)
            return cmd_ablate(config, manifest, task, tool, strict, trace_dir);
        if (*icases)
            return cmd_ingest_cases(in, out, case_dim, taxonomy);
        if (*iguide)
            return cmd_ingest_guidelines(in, out, guide_dim);
        if (*onto)
            return cmd_ontology(config, taxonomy, mode, name);
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what();
        if (!e.nearest().empty())
            std::cerr << " (nearest: " << join(e.nearest(), ", ") << ")";
        std::cerr << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
