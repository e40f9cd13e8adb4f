// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/critic.hpp"

#include "dermtrace/case_store.hpp"
#include "dermtrace/error.hpp"

#include <algorithm>

namespace dermtrace {

void CriticThresholds::validate() const
{
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(panderm_min_conf))
        throw ConfigError("panderm_min_conf must lie in [0,1], got " + std::to_string(panderm_min_conf));
    if (!unit(rag_min_sim))
        throw ConfigError("rag_min_sim must lie in [0,1], got " + std::to_string(rag_min_sim));
}

CriticThresholds CriticThresholds::from_json(const json& j)
{
    CriticThresholds t;
    t.panderm_min_conf = j.value("panderm_min_conf", t.panderm_min_conf);
    t.rag_min_sim = j.value("rag_min_sim", t.rag_min_sim);
    t.validate();
    return t;
}

ToolCall CallDefaults::call_for(ToolId tool, const std::optional<std::string>& disease) const
{
    ToolCall call{tool, json::object()};
    switch (tool) {
    case ToolId::panderm: call.params["candidates"] = candidates; break;
    case ToolId::make: call.params["features"] = features; break;
    case ToolId::dermo_gpt:
    case ToolId::qwen_vl: call.params["question"] = question; break;
    case ToolId::case_rag: call.params["k"] = case_k; break;
    case ToolId::guideline_rag: call.params["query"] = disease ? *disease : question; break;
    case ToolId::ontology:
        call.params["mode"] = "hierarchy";
        call.params["name"] = disease ? *disease : question;
        break;
    }
    return call;
}

json CriticVerdict::to_json(int k) const
{
    json fb = json::array();
    for (const auto& f : feedback)
        fb.push_back(f.to_json());
    return json{{"event", "critic"}, {"k", k},       {"f_conf", f_conf},
                {"f_cov", f_cov},    {"f_con", f_con}, {"feedback", std::move(fb)}};
}

bool check_confidence(const EvidenceChain& chain, const TaskScope& scope, const CriticThresholds& thresholds)
{
    bool low = false;
    for (const auto& item : chain) {
        if (item.failed() || !item.confidence)
            continue;
        if (item.tool == ToolId::panderm && *item.confidence < thresholds.panderm_min_conf)
            low = true;
        if ((item.tool == ToolId::case_rag || item.tool == ToolId::guideline_rag)
            && *item.confidence < thresholds.rag_min_sim)
            low = true;
    }
    if (!low)
        return false;
    return std::any_of(scope.actionable_tools.begin(), scope.actionable_tools.end(),
                       [&](ToolId t) { return !chain.invoked(t); });
}

bool check_coverage(const TaskScope& scope, const EvidenceChain& chain)
{
    return std::any_of(scope.required_tools.begin(), scope.required_tools.end(),
                       [&](ToolId t) { return !chain.invoked(t); });
}

std::string normalize_label(std::string_view label, const OntologyIndex* ontology)
{
    if (ontology)
        return ontology->canonical(label);
    return casefold(trim(label));
}

namespace {

std::optional<std::string> classifier_top(const EvidenceItem& item, const OntologyIndex* ontology)
{
    const auto& preds = item.result.contains("predictions") ? item.result["predictions"] : item.result;
    if (!preds.is_array() || preds.empty() || !preds[0].contains("label"))
        return std::nullopt;
    return normalize_label(preds[0]["label"].get<std::string>(), ontology);
}

std::optional<std::string> case_majority(const EvidenceItem& item, const OntologyIndex* ontology)
{
    if (!item.result.is_object() || !item.result.contains("neighbors"))
        return std::nullopt;
    std::vector<std::pair<std::string, double>> labelled;
    for (const auto& n : item.result["neighbors"])
        labelled.emplace_back(n.at("label").get<std::string>(), n.at("similarity").get<double>());
    if (labelled.empty())
        return std::nullopt;
    return majority_label(labelled, [&](std::string_view s) { return normalize_label(s, ontology); });
}

} // namespace

std::optional<ConflictPair> find_disagreement(const EvidenceChain& chain, const OntologyIndex* ontology)
{
    const auto* cls = chain.latest(ToolId::panderm);
    const auto* cases = chain.latest(ToolId::case_rag);
    if (!cls || !cases)
        return std::nullopt;
    auto p = classifier_top(*cls, ontology);
    auto c = case_majority(*cases, ontology);
    if (!p || !c || *p == *c)
        return std::nullopt;
    return ConflictPair{*p, *c};
}

bool conflict_addressed(const EvidenceChain& chain, const ConflictPair& pair)
{
    for (const auto& item : chain) {
        if (item.tool != ToolId::guideline_rag || item.failed() || !item.params.contains("query"))
            continue;
        auto query = normalize_label(item.params["query"].get<std::string>(), nullptr);
        if (query.find(pair.classifier_label) != std::string::npos
            && query.find(pair.case_label) != std::string::npos)
            return true;
    }
    return false;
}

bool detect_conflicts(const EvidenceChain& chain, const OntologyIndex* ontology)
{
    auto pair = find_disagreement(chain, ontology);
    return pair && !conflict_addressed(chain, *pair);
}

namespace {

bool usable(const ToolCall& call, const EvidenceChain& chain, const TaskScope& scope)
{
    return scope.is_actionable(call.tool) && !chain.has_call(call);
}

std::string tool_list(const std::vector<ToolId>& tools)
{
    std::vector<std::string> names;
    for (auto t : tools)
        names.emplace_back(to_string(t));
    return join(names, ", ");
}

} // namespace

std::vector<Feedback> make_feedback(bool f_conf, bool f_cov, bool f_con, const EvidenceChain& chain,
                                    const TaskScope& scope, const CallDefaults& defaults,
                                    const OntologyIndex* ontology, int round)
{
    if (!f_conf && !f_cov && !f_con)
        throw ContractViolation("make_feedback requires at least one raised gate");
    std::vector<Feedback> out;
    const auto* cls = chain.latest(ToolId::panderm);
    auto top = cls ? classifier_top(*cls, ontology) : std::nullopt;

    if (f_conf) {
        Feedback fb;
        fb.gate = Gate::confidence;
        fb.round = round;
        for (auto t : scope.actionable_tools) {
            if (chain.invoked(t))
                continue;
            auto call = defaults.call_for(t, top);
            fb.message = "Low-confidence evidence; consult " + std::string(to_string(t)) + " for corroboration.";
            if (usable(call, chain, scope))
                fb.suggested_calls.push_back(std::move(call));
            break;
        }
        if (fb.message.empty())
            fb.message = "Low-confidence evidence.";
        out.push_back(std::move(fb));
    }

    if (f_cov) {
        Feedback fb;
        fb.gate = Gate::coverage;
        fb.round = round;
        std::vector<ToolId> missing;
        for (auto t : scope.actionable_tools) {
            if (scope.required_tools.count(t) && !chain.invoked(t))
                missing.push_back(t);
        }
        for (auto t : scope.required_tools) {
            if (!chain.invoked(t) && std::find(missing.begin(), missing.end(), t) == missing.end())
                missing.push_back(t);
        }
        fb.message = "Required tools not yet invoked: " + tool_list(missing) + ".";
        for (auto t : missing) {
            auto call = defaults.call_for(t, top);
            if (usable(call, chain, scope))
                fb.suggested_calls.push_back(std::move(call));
        }
        out.push_back(std::move(fb));
    }

    if (f_con) {
        Feedback fb;
        fb.gate = Gate::conflict;
        fb.round = round;
        fb.reinject_image = true;
        auto pair = find_disagreement(chain, ontology);
        if (pair) {
            std::vector<std::string> labels{pair->classifier_label, pair->case_label};
            std::sort(labels.begin(), labels.end());
            fb.message = "Classifier predicts '" + pair->classifier_label + "' but retrieved cases indicate '"
                       + pair->case_label + "'; re-examine the image and verify the differential.";
            ToolCall refined{ToolId::panderm, json{{"candidates", labels}}};
            ToolCall lookup{ToolId::guideline_rag, json{{"query", labels[0] + " vs " + labels[1] + " differential"}}};
            for (auto& call : {refined, lookup}) {
                if (usable(call, chain, scope))
                    fb.suggested_calls.push_back(call);
            }
        } else {
            fb.message = "Conflicting evidence; re-examine the image.";
        }
        out.push_back(std::move(fb));
    }
    return out;
}

CriticVerdict evaluate(const EvidenceChain& chain, const TaskScope& scope, const CriticThresholds& thresholds,
                       const OntologyIndex* ontology, const CallDefaults& defaults, int round)
{
    CriticVerdict v;
    v.f_conf = check_confidence(chain, scope, thresholds);
    v.f_cov = check_coverage(scope, chain);
    v.f_con = detect_conflicts(chain, ontology);
    if (v.any())
        v.feedback = make_feedback(v.f_conf, v.f_cov, v.f_con, chain, scope, defaults, ontology, round);
    return v;
}

} // namespace dermtrace
