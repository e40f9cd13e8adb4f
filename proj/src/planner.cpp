// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/planner.hpp"

#include "dermtrace/case_store.hpp"
#include "dermtrace/error.hpp"
#include "dermtrace/tools.hpp"

#include <algorithm>
#include <cstdio>

namespace dermtrace {

std::vector<ToolCall> initial_calls(TaskType task, const CallDefaults& defaults)
{
    switch (task) {
    case TaskType::diagnosis:
        return {defaults.call_for(ToolId::panderm), defaults.call_for(ToolId::case_rag),
                defaults.call_for(ToolId::dermo_gpt)};
    case TaskType::concept_annotation:
        return {defaults.call_for(ToolId::make), defaults.call_for(ToolId::dermo_gpt)};
    case TaskType::captioning:
        return {ToolCall{ToolId::dermo_gpt, json{{"question", "describe the lesion"}}},
                defaults.call_for(ToolId::panderm), defaults.call_for(ToolId::make),
                defaults.call_for(ToolId::case_rag)};
    case TaskType::general_vqa:
        return {defaults.call_for(ToolId::qwen_vl)};
    }
    return {};
}

std::vector<ToolCall> dedupe_calls(std::vector<ToolCall> calls, const EvidenceChain& chain, const TaskScope& scope)
{
    std::vector<ToolCall> out;
    for (auto& call : calls) {
        if (!scope.is_actionable(call.tool) || chain.has_call(call))
            continue;
        if (std::find(out.begin(), out.end(), call) != out.end())
            continue;
        out.push_back(std::move(call));
    }
    return out;
}

namespace {

int latest_feedback_round(const std::vector<Feedback>& feedback)
{
    int r = -1;
    for (const auto& f : feedback)
        r = std::max(r, f.round);
    return r;
}

std::vector<ToolCall> suggested_calls(const std::vector<Feedback>& feedback)
{
    auto latest = latest_feedback_round(feedback);
    std::vector<ToolCall> calls;
    for (const auto& f : feedback) {
        if (f.round != latest)
            continue;
        calls.insert(calls.end(), f.suggested_calls.begin(), f.suggested_calls.end());
    }
    return calls;
}

std::string format_conf(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string one_line(std::string s)
{
    std::replace(s.begin(), s.end(), '\n', ' ');
    return trim(s);
}

std::string string_or_text(const json& result)
{
    if (result.is_string())
        return result.get<std::string>();
    if (result.is_object() && result.contains("text") && result["text"].is_string())
        return result["text"].get<std::string>();
    return result.dump();
}

std::optional<std::string> finding(const EvidenceItem& item)
{
    const auto& r = item.result;
    switch (item.tool) {
    case ToolId::panderm:
        if (r.contains("predictions") && !r["predictions"].empty())
            return r["predictions"][0].at("label").get<std::string>();
        return std::nullopt;
    case ToolId::make: {
        std::vector<std::string> present;
        if (r.contains("present"))
            present = r["present"].get<std::vector<std::string>>();
        return present.empty() ? std::string("no concepts present") : join(present, ", ");
    }
    case ToolId::dermo_gpt:
    case ToolId::qwen_vl: return one_line(string_or_text(r));
    case ToolId::case_rag:
        if (r.contains("majority_label"))
            return r["majority_label"].get<std::string>();
        return std::nullopt;
    case ToolId::guideline_rag: {
        if (!r.contains("passages") || r["passages"].empty())
            return std::nullopt;
        const auto& top = r["passages"][0];
        auto names = top.value("disease_names", std::vector<std::string>{});
        auto section = top.value("section", std::string{});
        return names.empty() ? section : join(names, ", ") + " - " + section;
    }
    case ToolId::ontology:
        for (const char* key : {"path", "nodes"}) {
            if (r.contains(key))
                return join(r[key].get<std::vector<std::string>>(), key == std::string("path") ? " > " : ", ");
        }
        if (r.contains("matches")) {
            std::vector<std::string> names;
            for (const auto& m : r["matches"])
                names.push_back(m.at("name").get<std::string>());
            return join(names, ", ");
        }
        return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

std::optional<Plan> RuleBasedPlanner::plan(const PlannerContext& ctx)
{
    std::vector<ToolCall> calls;
    if (ctx.round == 0 && ctx.feedback.empty()) {
        calls = dedupe_calls(initial_calls(ctx.scope.task_type, ctx.defaults), ctx.chain, ctx.scope);
        if (calls.empty()) {
            if (ctx.scope.actionable_tools.empty())
                throw PlannerError("no actionable tool is available for task '"
                                   + std::string(to_string(ctx.scope.task_type)) + "'");
            calls = dedupe_calls({ctx.defaults.call_for(ctx.scope.actionable_tools.front())}, ctx.chain, ctx.scope);
        }
    } else {
        calls = dedupe_calls(suggested_calls(ctx.feedback), ctx.chain, ctx.scope);
    }
    if (calls.empty())
        return std::nullopt;
    return Plan{ctx.round, std::move(calls)};
}

std::string RuleBasedPlanner::synthesize(const EvidenceChain& chain, const Query&, const TaskScope&)
{
    if (chain.empty())
        throw SynthesisError("cannot synthesise an answer from an empty evidence chain");
    const auto* onto = ontology_.get();
    std::string out;
    std::optional<std::pair<std::string, double>> diagnosis;
    for (auto tool : all_tools) {
        const auto* item = chain.latest(tool);
        if (!item)
            continue;
        auto text = finding(*item);
        if (!text)
            continue;
        out += std::string(to_string(tool)) + ": " + *text;
        if (item->confidence)
            out += " (" + format_conf(*item->confidence) + ")";
        out += '\n';
        if ((tool == ToolId::panderm || tool == ToolId::case_rag) && item->confidence) {
            auto label = normalize_label(*text, onto);
            if (!diagnosis || *item->confidence > diagnosis->second)
                diagnosis = std::make_pair(label, *item->confidence);
        }
    }
    if (out.empty())
        out = "No tool produced usable evidence.\n";
    if (diagnosis)
        out += "Diagnosis: " + diagnosis->first + '\n';
    return out;
}

Plan parse_plan_document(std::string_view raw)
{
    if (trim(raw).empty())
        throw ContractViolation("plan document is empty");
    auto block = find_json_block(raw, [](const json& j) {
        if (!j.is_array() || j.empty())
            return false;
        return std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_object() && e.contains("tool"); });
    });
    if (!block)
        throw ParseError("no plan array found in model output", std::string(raw));
    Plan plan;
    for (const auto& entry : *block)
        plan.calls.push_back(ToolCall::from_json(entry));
    return plan;
}

std::string serialize_plan(const Plan& plan)
{
    json arr = json::array();
    for (const auto& call : plan.calls)
        arr.push_back(call.to_json());
    return arr.dump();
}

PromptTemplates PromptTemplates::defaults()
{
    PromptTemplates t;
    t.system = "You coordinate dermatology analysis tools. Available tools:\n{tools}\n"
               "Reply to planning requests with a JSON array of {\"tool\": name, \"params\": {...}} objects.";
    t.plan = "Task: {task}\nQuestion: {question}\nEvidence so far (JSON lines):\n{evidence}\n"
             "Critic feedback:\n{feedback}\nPlan the next tool calls.";
    t.synthesis = "Task: {task}\nQuestion: {question}\nEvidence (JSON lines):\n{evidence}\n"
                  "Write an answer grounded only in this evidence. End with a line 'Diagnosis: <label>' "
                  "when the evidence supports one.";
    return t;
}

PromptTemplates PromptTemplates::from_json(const json& j)
{
    auto t = defaults();
    t.system = j.value("system", t.system);
    t.plan = j.value("plan", t.plan);
    t.synthesis = j.value("synthesis", t.synthesis);
    return t;
}

std::string render_template(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& vars)
{
    std::string out;
    for (std::size_t i = 0; i < tmpl.size();) {
        bool replaced = false;
        if (tmpl[i] == '{') {
            for (const auto& [name, value] : vars) {
                auto token = "{" + name + "}";
                if (tmpl.compare(i, token.size(), token) == 0) {
                    out += value;
                    i += token.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced)
            out += tmpl[i++];
    }
    return out;
}

namespace {

std::string tool_catalogue(const TaskScope& scope)
{
    std::string out;
    for (auto t : scope.actionable_tools) {
        auto d = ToolDescriptor::standard(t);
        std::vector<std::string> params;
        for (const auto& p : d.param_schema)
            params.push_back(p.name + (p.required ? "" : "?"));
        out += "- " + std::string(to_string(t)) + "(" + join(params, ", ") + "): " + d.description + '\n';
    }
    return out;
}

std::string feedback_text(const std::vector<Feedback>& feedback)
{
    std::string out;
    for (const auto& f : feedback)
        out += f.to_json().dump() + '\n';
    return out.empty() ? "(none)\n" : out;
}

} // namespace

std::string RemotePlanner::ask(const std::string& user, const std::optional<std::string>& image)
{
    try {
        return remote_chat({{"user", user}}, image, endpoint_, transport_, sleep_);
    } catch (const TransportError& e) {
        throw PlannerError(std::string("planner endpoint failed (") + to_string(e.category()) + "): " + e.what());
    }
}

std::optional<Plan> RemotePlanner::plan(const PlannerContext& ctx)
{
    auto task = std::string(to_string(ctx.scope.task_type));
    auto system = render_template(templates_.system, {{"tools", tool_catalogue(ctx.scope)}});
    auto user = render_template(templates_.plan, {{"task", task},
                                                  {"question", ctx.query.question},
                                                  {"evidence", serialize_trace(ctx.chain)},
                                                  {"feedback", feedback_text(ctx.feedback)}});
    std::string raw;
    try {
        raw = remote_chat({{"system", system}, {"user", user}}, ctx.image_payload, endpoint_, transport_, sleep_);
    } catch (const TransportError& e) {
        throw PlannerError(std::string("planner endpoint failed (") + to_string(e.category()) + "): " + e.what());
    }
    auto parsed = parse_plan_document(raw);
    auto calls = parsed.calls;
    auto suggested = suggested_calls(ctx.feedback);
    calls.insert(calls.end(), suggested.begin(), suggested.end());
    calls = dedupe_calls(std::move(calls), ctx.chain, ctx.scope);
    if (calls.empty())
        return std::nullopt;
    return Plan{ctx.round, std::move(calls)};
}

std::string RemotePlanner::synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope)
{
    if (chain.empty())
        throw SynthesisError("cannot synthesise an answer from an empty evidence chain");
    auto user = render_template(templates_.synthesis, {{"task", std::string(to_string(scope.task_type))},
                                                       {"question", query.question},
                                                       {"evidence", serialize_trace(chain)}});
    try {
        return ask(user, std::nullopt);
    } catch (const PlannerError& e) {
        throw SynthesisError(e.what());
    }
}

} // namespace dermtrace
