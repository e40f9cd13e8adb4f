// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/eval.hpp"

#include "dermtrace/error.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace dermtrace {

namespace {

void check_gold(const json& gold, TaskType task)
{
    switch (task) {
    case TaskType::diagnosis:
    case TaskType::captioning:
        if (!gold.is_string() || trim(gold.get<std::string>()).empty())
            throw ValidationError("gold must be a non-empty string for " + std::string(to_string(task)));
        return;
    case TaskType::concept_annotation:
        if (!gold.is_array() || !std::all_of(gold.begin(), gold.end(), [](const json& g) { return g.is_string(); }))
            throw ValidationError("gold must be a list of concept names");
        return;
    case TaskType::general_vqa:
        if (!gold.is_string())
            throw ValidationError("gold must be a string");
        return;
    }
}

} // namespace

std::vector<EvalRecord> parse_manifest(std::string_view text, TaskType task, const std::string& origin)
{
    std::vector<EvalRecord> out;
    for_each_jsonl_text(text, origin, [&](std::size_t line, const json& rec) {
        try {
            if (!rec.is_object())
                throw ValidationError("record is not an object");
            EvalRecord r;
            r.image_ref = rec.at("image_ref").get<std::string>();
            r.question = rec.at("question").get<std::string>();
            r.gold = rec.at("gold");
            if (r.image_ref.empty() || trim(r.question).empty())
                throw ValidationError("image_ref and question must be non-empty");
            check_gold(r.gold, task);
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(origin + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        } catch (const ValidationError& e) {
            throw ParseError(origin + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return out;
}

std::vector<EvalRecord> read_manifest(const std::filesystem::path& path, TaskType task)
{
    return parse_manifest(read_file(path), task, path.string());
}

std::string extract_diagnosis(std::string_view answer)
{
    static constexpr std::string_view tag = "diagnosis:";
    std::string found;
    std::size_t pos = 0;
    while (pos <= answer.size()) {
        auto nl = answer.find('\n', pos);
        auto line = trim(answer.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
        if (casefold(line).rfind(tag, 0) == 0)
            found = trim(std::string_view(line).substr(tag.size()));
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
    return found;
}

std::set<std::string> extract_concepts(const EvidenceChain& chain)
{
    std::set<std::string> out;
    const auto* item = chain.latest(ToolId::make);
    if (!item || !item->result.contains("present"))
        return out;
    for (const auto& c : item->result["present"])
        out.insert(casefold(trim(c.get<std::string>())));
    return out;
}

std::string trace_file_name(std::size_t index, const std::string& image_ref)
{
    std::string safe;
    for (char c : image_ref) {
        auto u = static_cast<unsigned char>(c);
        safe.push_back((std::isalnum(u) || c == '-' || c == '_') ? c : '_');
    }
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%03zu-", index);
    return prefix + safe + ".jsonl";
}

namespace {

struct RecordRun {
    RecordOutcome outcome;
    EvidenceChain chain;
};

RecordRun run_record(const EvalRecord& rec, std::size_t index, const Runtime& rt, const OrchestratorConfig& cfg,
                     const EvalOptions& options)
{
    RecordRun out;
    std::ostringstream trace;
    try {
        Query q{rec.image_ref, rec.question, false};
        auto response = rt.ask(q, cfg, &trace);
        out.outcome.answer = response.answer;
        out.outcome.rounds_used = response.rounds_used;
        out.outcome.status = response.status;
        out.chain = std::move(response.evidence);
    } catch (const OrchestrationError& e) {
        out.outcome.status = RunStatus::error;
        out.outcome.error = e.what();
        out.outcome.rounds_used = e.rounds_used();
        out.chain = e.partial_chain();
        trace << json{{"event", "final"}, {"status", "error"}, {"error", e.what()}}.dump() << '\n';
    }
    if (options.trace_dir)
        write_file(*options.trace_dir / trace_file_name(index, rec.image_ref), trace.str());
    return out;
}

} // namespace

EvalResult run_eval(const std::vector<EvalRecord>& records, TaskType task, const Runtime& runtime,
                    const EvalOptions& options)
{
    if (records.empty())
        throw ContractViolation("manifest has no records");
    auto cfg = runtime.orchestrator;
    if (!options.disabled.empty()) {
        auto required = scope_for(task).required_tools;
        for (auto t : options.disabled) {
            if (options.strict && required.count(t))
                throw ConfigError("cannot disable '" + std::string(to_string(t)) + "': it is required for "
                                  + std::string(to_string(task)) + " in strict mode");
            cfg.enabled_tools.erase(t);
        }
        cfg.ablation = true;
    }
    cfg.validate();
    if (options.trace_dir)
        std::filesystem::create_directories(*options.trace_dir);

    std::vector<RecordRun> runs(records.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1))
            runs[i] = run_record(records[i], i, runtime, cfg, options);
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(runtime.eval.workers, records.size()); ++w)
            pool.emplace_back(worker);
    }

    EvalResult result;
    auto& rep = result.report;
    rep.task_type = task;
    auto include = [&](const RecordRun& r) {
        return !(runtime.eval.exclude_failures && r.outcome.status == RunStatus::error);
    };
    for (const auto& r : runs) {
        if (r.outcome.status == RunStatus::error)
            ++rep.failures;
        result.records.push_back(r.outcome);
    }

    switch (task) {
    case TaskType::diagnosis: {
        rep.metric = "accuracy";
        std::vector<std::string> pred, gold;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (!include(runs[i]))
                continue;
            pred.push_back(extract_diagnosis(runs[i].outcome.answer));
            gold.push_back(records[i].gold.get<std::string>());
        }
        rep.n = gold.size();
        if (!gold.empty()) {
            const auto* onto = runtime.ontology.get();
            rep.value = metric_accuracy(pred, gold, [onto](std::string_view s) { return normalize_label(s, onto); });
        }
        break;
    }
    case TaskType::concept_annotation: {
        rep.metric = "f1_macro";
        std::vector<std::string> vocab;
        for (const auto& v : runtime.concept_vocabulary)
            vocab.push_back(casefold(trim(v)));
        std::vector<std::set<std::string>> pred, gold;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (!include(runs[i]))
                continue;
            pred.push_back(extract_concepts(runs[i].chain));
            std::set<std::string> g;
            for (const auto& c : records[i].gold)
                g.insert(casefold(trim(c.get<std::string>())));
            gold.push_back(std::move(g));
        }
        rep.n = gold.size();
        auto f1 = metric_f1_macro(pred, gold, vocab, runtime.eval.f1_policy);
        rep.value = f1.macro;
        rep.per_class = f1.per_label;
        break;
    }
    case TaskType::captioning:
    case TaskType::general_vqa: {
        rep.metric = "rouge_l";
        double sum = 0.0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (!include(runs[i]))
                continue;
            ++rep.n;
            if (tokenize(runs[i].outcome.answer).empty())
                continue;
            sum += metric_rouge_l(runs[i].outcome.answer, records[i].gold.get<std::string>());
        }
        rep.value = rep.n ? sum / static_cast<double>(rep.n) : 0.0;
        break;
    }
    }
    return result;
}

json AblationReport::to_json() const
{
    return json{{"disabled", disabled ? json(to_string(*disabled)) : json(nullptr)},
                {"full", full.to_json()},
                {"ablated", ablated.to_json()},
                {"delta", delta}};
}

AblationReport ablate(const std::vector<EvalRecord>& records, TaskType task, const Runtime& runtime,
                      std::string_view tool, bool strict, const std::optional<std::filesystem::path>& trace_dir)
{
    AblationReport out;
    if (casefold(tool) != "none")
        out.disabled = tool_from_string(tool);
    if (out.disabled && !runtime.registry.contains(*out.disabled))
        throw ConfigError("tool '" + std::string(tool) + "' is not registered");

    EvalOptions full_opts;
    EvalOptions ablated_opts;
    ablated_opts.strict = strict;
    if (out.disabled)
        ablated_opts.disabled.insert(*out.disabled);
    if (trace_dir) {
        full_opts.trace_dir = *trace_dir / "full";
        ablated_opts.trace_dir = *trace_dir / "ablated";
    }
    out.full = run_eval(records, task, runtime, full_opts).report;
    out.ablated = run_eval(records, task, runtime, ablated_opts).report;
    out.delta = out.ablated.value - out.full.value;
    return out;
}

} // namespace dermtrace
