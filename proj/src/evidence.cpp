// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/evidence.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <filesystem>
#include <unordered_set>

namespace dermtrace {

std::string_view to_string(ToolId id) noexcept
{
    switch (id) {
    case ToolId::panderm: return "panderm";
    case ToolId::make: return "make";
    case ToolId::dermo_gpt: return "dermo_gpt";
    case ToolId::qwen_vl: return "qwen_vl";
    case ToolId::case_rag: return "case_rag";
    case ToolId::guideline_rag: return "guideline_rag";
    case ToolId::ontology: return "ontology";
    }
    return "?";
}

std::optional<ToolId> parse_tool_id(std::string_view name) noexcept
{
    for (auto id : all_tools) {
        if (to_string(id) == name)
            return id;
    }
    return std::nullopt;
}

ToolId tool_from_string(std::string_view name)
{
    if (auto id = parse_tool_id(name))
        return *id;
    throw ValidationError("unknown tool_id '" + std::string(name) + "'");
}

bool produces_confidence(ToolId id) noexcept
{
    return id == ToolId::panderm || id == ToolId::case_rag || id == ToolId::guideline_rag;
}

bool is_retrieval(ToolId id) noexcept
{
    return id == ToolId::case_rag || id == ToolId::guideline_rag;
}

std::string_view to_string(TaskType t) noexcept
{
    switch (t) {
    case TaskType::diagnosis: return "diagnosis";
    case TaskType::concept_annotation: return "concept_annotation";
    case TaskType::captioning: return "captioning";
    case TaskType::general_vqa: return "general_vqa";
    }
    return "?";
}

TaskType task_from_string(std::string_view name)
{
    if (name == "diagnosis")
        return TaskType::diagnosis;
    if (name == "concept_annotation" || name == "concept")
        return TaskType::concept_annotation;
    if (name == "captioning" || name == "caption")
        return TaskType::captioning;
    if (name == "general_vqa" || name == "vqa")
        return TaskType::general_vqa;
    throw ValidationError("unknown task type '" + std::string(name) + "'");
}

Params canonicalize_params(const Params& params)
{
    if (params.is_string())
        return casefold(params.get_ref<const std::string&>());
    if (params.is_object()) {
        Params out = json::object();
        for (const auto& [k, v] : params.items())
            out[k] = canonicalize_params(v);
        return out;
    }
    if (params.is_array()) {
        Params out = json::array();
        for (const auto& v : params)
            out.push_back(canonicalize_params(v));
        std::sort(out.begin(), out.end());
        return out;
    }
    return params;
}

bool params_equal(const Params& a, const Params& b)
{
    return canonicalize_params(a) == canonicalize_params(b);
}

const std::vector<ParamSpec>& param_schema(ToolId id)
{
    static const std::vector<ParamSpec> panderm{{"candidates", ParamType::string_list, true}};
    static const std::vector<ParamSpec> make{{"features", ParamType::string_list, true}};
    static const std::vector<ParamSpec> vqa{{"question", ParamType::string, true}};
    static const std::vector<ParamSpec> case_rag{{"k", ParamType::integer, false}};
    static const std::vector<ParamSpec> guideline{{"query", ParamType::string, true}};
    static const std::vector<ParamSpec> ontology{{"mode", ParamType::string, true},
                                                 {"name", ParamType::string, true}};
    switch (id) {
    case ToolId::panderm: return panderm;
    case ToolId::make: return make;
    case ToolId::dermo_gpt:
    case ToolId::qwen_vl: return vqa;
    case ToolId::case_rag: return case_rag;
    case ToolId::guideline_rag: return guideline;
    case ToolId::ontology: return ontology;
    }
    return vqa;
}

namespace {

bool matches_type(const json& v, ParamType type)
{
    switch (type) {
    case ParamType::string: return v.is_string() && !trim(v.get_ref<const std::string&>()).empty();
    case ParamType::integer: return v.is_number_integer();
    case ParamType::string_list:
        return v.is_array() && !v.empty()
            && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    }
    return false;
}

const char* type_name(ParamType type)
{
    switch (type) {
    case ParamType::string: return "non-empty string";
    case ParamType::integer: return "integer";
    case ParamType::string_list: return "non-empty list of strings";
    }
    return "?";
}

} // namespace

void validate_params(ToolId id, const Params& params)
{
    auto tool = std::string(to_string(id));
    if (!params.is_object())
        throw ValidationError(tool + ": params must be an object");
    const auto& schema = param_schema(id);
    for (const auto& [key, value] : params.items()) {
        auto it = std::find_if(schema.begin(), schema.end(), [&](const ParamSpec& s) { return s.name == key; });
        if (it == schema.end())
            throw ValidationError(tool + ": unknown parameter '" + key + "'");
        if (!matches_type(value, it->type))
            throw ValidationError(tool + ": parameter '" + key + "' must be a " + type_name(it->type));
    }
    for (const auto& spec : schema) {
        if (spec.required && !params.contains(spec.name))
            throw ValidationError(tool + ": missing required parameter '" + spec.name + "'");
    }
    if (id == ToolId::case_rag && params.contains("k") && params["k"].get<long long>() < 1)
        throw ValidationError("case_rag: parameter 'k' must be positive");
    if (id == ToolId::ontology) {
        const auto& mode = params["mode"].get_ref<const std::string&>();
        if (mode != "hierarchy" && mode != "children" && mode != "siblings" && mode != "search")
            throw ValidationError("ontology: unknown mode '" + mode + "'");
    }
}

void Query::validate() const
{
    if (trim(question).empty())
        throw ContractViolation("query question must be non-empty");
    if (attach_image) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(image_ref, ec))
            throw ContractViolation("image '" + image_ref + "' is not a readable file");
    }
}

std::string Query::load_image() const
{
    return read_file(image_ref);
}

bool TaskScope::is_actionable(ToolId id) const
{
    return std::find(actionable_tools.begin(), actionable_tools.end(), id) != actionable_tools.end();
}

json ToolCall::to_json() const
{
    return json{{"tool", to_string(tool)}, {"params", params}};
}

ToolCall ToolCall::from_json(const json& j)
{
    if (!j.is_object() || !j.contains("tool") || !j["tool"].is_string())
        throw ValidationError("tool call must be an object with a string 'tool' field");
    ToolCall call;
    call.tool = tool_from_string(j["tool"].get<std::string>());
    call.params = j.value("params", json::object());
    validate_params(call.tool, call.params);
    return call;
}

bool EvidenceItem::failed() const
{
    return result.is_object() && result.contains("error");
}

EvidenceItem EvidenceItem::failure(ToolId tool, Params params, int round, std::string_view kind,
                                   std::string_view message)
{
    EvidenceItem item;
    item.tool = tool;
    item.params = std::move(params);
    item.round = round;
    item.result = json{{"error", {{"kind", kind}, {"message", message}}}};
    return item;
}

void validate_item(const EvidenceItem& item)
{
    auto tool = std::string(to_string(item.tool));
    if (item.round < 0)
        throw ValidationError(tool + ": negative round");
    if (item.confidence && !(*item.confidence >= 0.0 && *item.confidence <= 1.0))
        throw ValidationError(tool + ": confidence outside [0,1]");
    if (item.failed())
        return;
    if (produces_confidence(item.tool) && !item.confidence)
        throw ValidationError(tool + ": confidence is required for this tool");
    if (is_retrieval(item.tool) && item.sources.empty())
        throw ValidationError(tool + ": retrieval evidence must name its sources");
}

bool EvidenceChain::invoked(ToolId id) const
{
    return latest(id) != nullptr;
}

const EvidenceItem* EvidenceChain::latest(ToolId id) const
{
    for (auto it = items_.rbegin(); it != items_.rend(); ++it) {
        if (it->tool == id && !it->failed())
            return &*it;
    }
    return nullptr;
}

bool EvidenceChain::has_call(const ToolCall& call) const
{
    auto canon = canonicalize_params(call.params);
    return std::any_of(items_.begin(), items_.end(), [&](const EvidenceItem& item) {
        return item.tool == call.tool && !item.failed() && canonicalize_params(item.params) == canon;
    });
}

EvidenceChain append_evidence(EvidenceChain chain, EvidenceItem item)
{
    validate_item(item);
    if (!chain.items_.empty() && item.round < chain.items_.back().round)
        throw EvidenceError("evidence item from round " + std::to_string(item.round)
                            + " appended after round " + std::to_string(chain.items_.back().round));
    item.seq = chain.items_.size();
    chain.items_.push_back(std::move(item));
    return chain;
}

std::string_view to_string(Gate g) noexcept
{
    switch (g) {
    case Gate::confidence: return "confidence";
    case Gate::coverage: return "coverage";
    case Gate::conflict: return "conflict";
    }
    return "?";
}

json Feedback::to_json() const
{
    json calls = json::array();
    for (const auto& c : suggested_calls)
        calls.push_back(c.to_json());
    return json{{"gate", to_string(gate)},
                {"message", message},
                {"suggested_calls", calls},
                {"reinject_image", reinject_image},
                {"round", round}};
}

Feedback Feedback::from_json(const json& j)
{
    Feedback fb;
    auto gate = j.at("gate").get<std::string>();
    if (gate == "confidence")
        fb.gate = Gate::confidence;
    else if (gate == "coverage")
        fb.gate = Gate::coverage;
    else if (gate == "conflict")
        fb.gate = Gate::conflict;
    else
        throw ValidationError("unknown gate '" + gate + "'");
    fb.message = j.value("message", "");
    for (const auto& c : j.value("suggested_calls", json::array()))
        fb.suggested_calls.push_back(ToolCall::from_json(c));
    fb.reinject_image = j.value("reinject_image", false);
    fb.round = j.value("round", 0);
    return fb;
}

std::string_view to_string(RunStatus s) noexcept
{
    switch (s) {
    case RunStatus::success: return "success";
    case RunStatus::partial: return "partial";
    case RunStatus::error: return "error";
    }
    return "?";
}

std::vector<std::string> harvest_citations(const EvidenceChain& chain)
{
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& item : chain) {
        for (const auto& s : item.sources) {
            if (seen.insert(s).second)
                out.push_back(s);
        }
    }
    return out;
}

std::string serialize_item(const EvidenceItem& item)
{
    // Fields are written in contract order rather than json's sorted order.
    std::string line = "{\"seq\":" + std::to_string(item.seq) + ",\"round\":" + std::to_string(item.round)
                     + ",\"tool_id\":" + json(to_string(item.tool)).dump() + ",\"params\":" + item.params.dump()
                     + ",\"result\":" + item.result.dump();
    if (item.confidence)
        line += ",\"confidence\":" + json(*item.confidence).dump();
    line += ",\"sources\":" + json(item.sources).dump() + "}";
    return line;
}

std::string serialize_trace(const EvidenceChain& chain)
{
    std::string out;
    for (const auto& item : chain) {
        out += serialize_item(item);
        out += '\n';
    }
    return out;
}

EvidenceChain parse_trace(std::string_view text)
{
    EvidenceChain chain;
    for_each_jsonl_text(text, "trace", [&](std::size_t line, const json& rec) {
        if (!rec.is_object())
            throw ParseError("trace:" + std::to_string(line) + ": record is not an object", rec.dump());
        if (rec.contains("event"))
            return;
        try {
            EvidenceItem item;
            auto seq = rec.at("seq").get<std::uint64_t>();
            item.round = rec.at("round").get<int>();
            item.tool = tool_from_string(rec.at("tool_id").get<std::string>());
            item.params = rec.at("params");
            item.result = rec.at("result");
            if (rec.contains("confidence"))
                item.confidence = rec["confidence"].get<double>();
            item.sources = rec.at("sources").get<std::vector<std::string>>();
            if (seq != chain.size())
                throw ParseError("trace:" + std::to_string(line) + ": sequence number " + std::to_string(seq)
                                     + " out of order",
                                 rec.dump());
            chain = append_evidence(std::move(chain), std::move(item));
        } catch (const json::exception& e) {
            throw ParseError("trace:" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return chain;
}

} // namespace dermtrace
