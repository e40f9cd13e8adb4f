// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dermtrace/evidence.hpp"
#include "dermtrace/runtime.hpp"
#include "dermtrace/tools.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dttest {

using namespace dermtrace;

inline std::filesystem::path source_dir()
{
    return DERMTRACE_TEST_SOURCE_DIR;
}

inline std::filesystem::path data_path(const std::string& rel)
{
    return source_dir() / "data" / rel;
}

/// The runtime described by config/default.json, loaded once.
inline const Runtime& shipped()
{
    static const Runtime rt = load_runtime(source_dir() / "config" / "default.json");
    return rt;
}

inline EvidenceItem item(ToolId tool, Params params, json result, std::optional<double> conf = std::nullopt,
                         std::vector<std::string> sources = {}, int round = 0)
{
    EvidenceItem e;
    e.tool = tool;
    e.params = std::move(params);
    e.result = std::move(result);
    e.confidence = conf;
    e.sources = std::move(sources);
    e.round = round;
    return e;
}

inline EvidenceItem panderm_item(const std::string& label, double score, int round = 0,
                                 std::vector<std::string> candidates = {})
{
    return item(ToolId::panderm, json{{"candidates", candidates.empty() ? std::vector<std::string>{label} : candidates}},
                json{{"predictions", json::array({json{{"label", label}, {"score", score}}})}}, score, {}, round);
}

inline EvidenceItem case_item(const std::vector<std::pair<std::string, double>>& neighbours, int round = 0)
{
    json ns = json::array();
    std::vector<std::string> ids;
    double best = 0.0;
    for (std::size_t i = 0; i < neighbours.size(); ++i) {
        auto id = "c" + std::to_string(i);
        ns.push_back(json{{"id", id}, {"label", neighbours[i].first}, {"similarity", neighbours[i].second}});
        ids.push_back(id);
        best = std::max(best, neighbours[i].second);
    }
    auto majority = majority_label(neighbours, [](std::string_view s) { return casefold(trim(s)); });
    return item(ToolId::case_rag, json{{"k", static_cast<int>(neighbours.size())}},
                json{{"neighbors", ns}, {"majority_label", majority}}, best, ids, round);
}

inline EvidenceItem guideline_item(const std::string& query, double sim, int round = 0)
{
    return item(ToolId::guideline_rag, json{{"query", query}}, json{{"passages", json::array()}}, sim,
                {"https://guidelines.example.org/x"}, round);
}

inline EvidenceChain chain_of(std::vector<EvidenceItem> items)
{
    EvidenceChain c;
    for (auto& i : items)
        c = append_evidence(std::move(c), std::move(i));
    return c;
}

/// Tool whose behaviour is a lambda.
class LambdaTool final : public Tool {
public:
    explicit LambdaTool(std::function<ToolOutput(const ToolRequest&)> fn) : fn_(std::move(fn)) {}
    ToolOutput invoke(const ToolRequest& r) override { return fn_(r); }

private:
    std::function<ToolOutput(const ToolRequest&)> fn_;
};

inline std::string random_word(std::mt19937_64& rng)
{
    static const std::vector<std::string> words{"eczema", "melanoma", "plaque", "scale", "GA", "Nevus",
                                                "ünïcode", "a\"quote", "tab\there", "x"};
    return words[rng() % words.size()];
}

/// A random valid chain of `n` items with non-decreasing rounds.
inline EvidenceChain random_chain(std::mt19937_64& rng, std::size_t n)
{
    EvidenceChain c;
    int round = 0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng() % 4 == 0)
            ++round;
        auto tool = all_tools[rng() % all_tools.size()];
        EvidenceItem e;
        e.tool = tool;
        e.round = round;
        if (rng() % 6 == 0) {
            e = EvidenceItem::failure(tool, json{{"q", random_word(rng)}}, round, "timeout", "late");
        } else {
            e.params = json{{"name", random_word(rng)}, {"n", static_cast<int>(rng() % 100)}};
            e.result = json{{"text", random_word(rng)},
                            {"score", unit(rng)},
                            {"list", json::array({random_word(rng), unit(rng), nullptr, true})}};
            if (produces_confidence(tool) || rng() % 2)
                e.confidence = unit(rng);
            if (is_retrieval(tool) || rng() % 3 == 0)
                e.sources = {"src-" + std::to_string(rng() % 1000), random_word(rng)};
        }
        c = append_evidence(std::move(c), std::move(e));
    }
    return c;
}

} // namespace dttest
