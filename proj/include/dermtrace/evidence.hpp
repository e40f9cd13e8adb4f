// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Shared domain types: queries, task scopes, tool calls, plans, evidence
/// items, the append-only evidence chain, critic feedback and responses.
///
/// Trace file format (one JSON object per line):
///   {"seq":N,"round":K,"tool_id":"...","params":{...},"result":...,
///    "confidence":X,"sources":[...]}
/// `confidence` is omitted when absent. Lines carrying an "event" key are
/// control markers (round boundaries, critic verdicts) and are skipped when a
/// chain is rebuilt from a trace.

#include "dermtrace/text.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dermtrace {

enum class ToolId : std::uint8_t { panderm, make, dermo_gpt, qwen_vl, case_rag, guideline_rag, ontology };

inline constexpr std::array<ToolId, 7> all_tools{ToolId::panderm,  ToolId::make,          ToolId::dermo_gpt,
                                                 ToolId::qwen_vl,  ToolId::case_rag,      ToolId::guideline_rag,
                                                 ToolId::ontology};

std::string_view to_string(ToolId id) noexcept;
std::optional<ToolId> parse_tool_id(std::string_view name) noexcept;
/// Like parse_tool_id but raises ValidationError naming the offender.
ToolId tool_from_string(std::string_view name);

/// Tools whose evidence must carry a unit-interval confidence.
bool produces_confidence(ToolId id) noexcept;
bool is_retrieval(ToolId id) noexcept;

enum class TaskType : std::uint8_t { diagnosis, concept_annotation, captioning, general_vqa };

std::string_view to_string(TaskType t) noexcept;
/// Accepts the canonical names and the short CLI forms "concept" / "caption".
TaskType task_from_string(std::string_view name);

using Params = json;

/// Canonical form used for equality and fixture keys: object keys sorted,
/// string values casefolded, array elements sorted. Applied recursively.
Params canonicalize_params(const Params& params);
bool params_equal(const Params& a, const Params& b);

enum class ParamType : std::uint8_t { string, string_list, integer };

struct ParamSpec {
    std::string name;
    ParamType type;
    bool required;
};

const std::vector<ParamSpec>& param_schema(ToolId id);

/// Raises ValidationError on unknown keys, missing required keys or type
/// mismatches.
void validate_params(ToolId id, const Params& params);

struct Query {
    std::string image_ref;
    std::string question;
    bool attach_image = false;

    void validate() const;
    /// Reads the image bytes. Only meaningful when attach_image is set.
    std::string load_image() const;
};

struct TaskScope {
    TaskType task_type = TaskType::general_vqa;
    std::set<ToolId> required_tools;
    std::vector<ToolId> actionable_tools;

    bool is_actionable(ToolId id) const;
};

struct ToolCall {
    ToolId tool = ToolId::panderm;
    Params params = json::object();

    json to_json() const;
    static ToolCall from_json(const json& j);

    friend bool operator==(const ToolCall& a, const ToolCall& b)
    {
        return a.tool == b.tool && params_equal(a.params, b.params);
    }
};

struct Plan {
    int round = 0;
    std::vector<ToolCall> calls;
};

struct EvidenceItem {
    std::uint64_t seq = 0;
    int round = 0;
    ToolId tool = ToolId::panderm;
    Params params = json::object();
    json result;
    std::optional<double> confidence;
    std::vector<std::string> sources;

    /// Failed calls carry {"error": {"kind": ..., "message": ...}} as result.
    bool failed() const;

    static EvidenceItem failure(ToolId tool, Params params, int round, std::string_view kind,
                                std::string_view message);

    friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

/// Raises ValidationError when the item breaks its type invariants.
void validate_item(const EvidenceItem& item);

class EvidenceChain {
public:
    EvidenceChain() = default;

    std::span<const EvidenceItem> items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    const EvidenceItem& operator[](std::size_t i) const { return items_[i]; }
    auto begin() const noexcept { return items_.begin(); }
    auto end() const noexcept { return items_.end(); }

    /// A tool counts as invoked once it has produced at least one successful item.
    bool invoked(ToolId id) const;
    /// Latest successful item for the tool, or nullptr.
    const EvidenceItem* latest(ToolId id) const;
    /// True if a successful item already exists for this exact (tool, params).
    bool has_call(const ToolCall& call) const;

    friend bool operator==(const EvidenceChain&, const EvidenceChain&) = default;

private:
    friend EvidenceChain append_evidence(EvidenceChain chain, EvidenceItem item);
    std::vector<EvidenceItem> items_;
};

/// Returns `chain` extended by `item`. The item's seq is set to its position;
/// its round may not precede the last item's round.
[[nodiscard]] EvidenceChain append_evidence(EvidenceChain chain, EvidenceItem item);

enum class Gate : std::uint8_t { confidence, coverage, conflict };

std::string_view to_string(Gate g) noexcept;

struct Feedback {
    Gate gate = Gate::confidence;
    std::string message;
    std::vector<ToolCall> suggested_calls;
    bool reinject_image = false;
    /// Round whose verdict produced this entry.
    int round = 0;

    json to_json() const;
    static Feedback from_json(const json& j);

    friend bool operator==(const Feedback&, const Feedback&) = default;
};

enum class RunStatus : std::uint8_t { success, partial, error };

std::string_view to_string(RunStatus s) noexcept;

struct Response {
    std::string answer;
    EvidenceChain evidence;
    int rounds_used = 0;
    std::vector<std::string> citations;
    RunStatus status = RunStatus::success;
};

/// Unique provenance strings in order of first appearance.
std::vector<std::string> harvest_citations(const EvidenceChain& chain);

std::string serialize_item(const EvidenceItem& item);
std::string serialize_trace(const EvidenceChain& chain);
EvidenceChain parse_trace(std::string_view text);

} // namespace dermtrace
