// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Planning back ends: a deterministic rule-based planner and an adapter for
/// a remote chat model. Plans travel as a JSON array of {tool, params}
/// objects; the parser tolerates prose and code fences around the array.

#include "dermtrace/critic.hpp"
#include "dermtrace/evidence.hpp"
#include "dermtrace/ontology.hpp"
#include "dermtrace/remote.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dermtrace {

struct PlannerContext {
    TaskScope scope;
    EvidenceChain chain;
    std::vector<Feedback> feedback;
    Query query;
    /// Present on round 0 and whenever feedback asked for the image again.
    std::optional<std::string> image_payload;
    int round = 0;
    CallDefaults defaults;
};

class Planner {
public:
    virtual ~Planner() = default;
    /// nullopt when nothing new is worth calling.
    virtual std::optional<Plan> plan(const PlannerContext& ctx) = 0;
    virtual std::string synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope) = 0;
};

/// First-round calls for the task type, before scope filtering.
std::vector<ToolCall> initial_calls(TaskType task, const CallDefaults& defaults);

/// Drops calls to tools outside the scope and calls already answered
/// successfully, then repeated calls within the list.
std::vector<ToolCall> dedupe_calls(std::vector<ToolCall> calls, const EvidenceChain& chain, const TaskScope& scope);

class RuleBasedPlanner final : public Planner {
public:
    explicit RuleBasedPlanner(std::shared_ptr<const OntologyIndex> ontology = nullptr)
        : ontology_(std::move(ontology)) {}

    std::optional<Plan> plan(const PlannerContext& ctx) override;

    /// One line per tool with successful evidence, in tool order:
    /// "<tool>: <finding> (<confidence>)", the confidence omitted for tools
    /// without one, then "Diagnosis: <label>" when a classifier or case
    /// label is available.
    std::string synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope) override;

private:
    std::shared_ptr<const OntologyIndex> ontology_;
};

/// Raises ParseError carrying `raw` when no plan array is found and
/// ValidationError naming an unknown tool.
Plan parse_plan_document(std::string_view raw);
std::string serialize_plan(const Plan& plan);

struct PromptTemplates {
    std::string system;
    std::string plan;
    std::string synthesis;

    /// Placeholders: {task}, {question}, {tools}, {evidence}, {feedback}.
    static PromptTemplates defaults();
    static PromptTemplates from_json(const json& j);
};

std::string render_template(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& vars);

class RemotePlanner final : public Planner {
public:
    RemotePlanner(RemoteEndpoint endpoint, PromptTemplates templates = PromptTemplates::defaults(),
                  HttpTransport& transport = default_transport(), Sleeper sleep = real_sleep)
        : endpoint_(std::move(endpoint)), templates_(std::move(templates)), transport_(transport),
          sleep_(std::move(sleep))
    {
    }

    std::optional<Plan> plan(const PlannerContext& ctx) override;
    std::string synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope) override;

private:
    std::string ask(const std::string& user, const std::optional<std::string>& image);

    RemoteEndpoint endpoint_;
    PromptTemplates templates_;
    HttpTransport& transport_;
    Sleeper sleep_;
};

} // namespace dermtrace
