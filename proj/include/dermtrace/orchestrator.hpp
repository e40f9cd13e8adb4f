// SPDX-License-Identifier: Apache-2.0
#pragma once

/// The plan / execute / reflect loop.
///
/// Each round the planner proposes calls, the calls run concurrently, and the
/// critic audits the whole chain. A raised gate sends its feedback into the
/// next round while the retry counter is below k_max, so a run never exceeds
/// k_max + 1 rounds. The trace receives, per round, a round_start marker, the
/// round's evidence items in plan order, a round_end marker and the critic
/// verdict; a final marker closes the run.

#include "dermtrace/critic.hpp"
#include "dermtrace/error.hpp"
#include "dermtrace/evidence.hpp"
#include "dermtrace/planner.hpp"
#include "dermtrace/tools.hpp"

#include <chrono>
#include <functional>
#include <iosfwd>
#include <set>

namespace dermtrace {

/// Keyword rules over the casefolded question, first match wins; general
/// VQA otherwise. Raises ContractViolation for an empty question.
TaskScope analyze_task(const Query& query);

/// Full scope for a task type before any tool is disabled.
TaskScope scope_for(TaskType task);

/// Removes tools outside `available` from both the actionable list and the
/// requirement set.
TaskScope restrict_scope(TaskScope scope, const std::set<ToolId>& available);

struct OrchestratorConfig {
    int k_max = 2;
    std::set<ToolId> enabled_tools{all_tools.begin(), all_tools.end()};
    CriticThresholds thresholds;
    std::size_t parallelism_limit = 4;
    std::chrono::milliseconds call_timeout{60'000};
    /// Allows required tools to be disabled.
    bool ablation = false;
    /// Planner invocations per round before the run is abandoned.
    int planner_attempts = 2;
    /// With the critic off every run stops after its first round.
    bool critic = true;

    /// Raises ConfigError. Without ablation every tool some task requires
    /// must be enabled.
    void validate() const;
};

enum class RunPhase : std::uint8_t { analyzing, planning, executing, reflecting, synthesizing, done };

std::string_view to_string(RunPhase p) noexcept;

class OrchestrationError : public Error {
public:
    OrchestrationError(const std::string& what, EvidenceChain partial, int rounds)
        : Error(what), partial_(std::move(partial)), rounds_(rounds) {}

    const EvidenceChain& partial_chain() const noexcept { return partial_; }
    int rounds_used() const noexcept { return rounds_; }

private:
    EvidenceChain partial_;
    int rounds_;
};

/// Replaces the critic, mainly for tests.
using Reflector = std::function<CriticVerdict(const EvidenceChain&, const TaskScope&, int k)>;

struct RunHooks {
    const OntologyIndex* ontology = nullptr;
    /// The question is filled in from the query.
    CallDefaults defaults;
    std::ostream* trace = nullptr;
    Reflector reflector;
    std::function<void(RunPhase)> on_phase;
};

/// Runs every call of `plan` with at most `parallelism_limit` in flight and
/// appends one item per call in plan order. Failures and timeouts become
/// failed items.
EvidenceChain execute_round(const Plan& plan, const ToolRegistry& registry, EvidenceChain chain,
                            const ImageInput& image, std::size_t parallelism_limit,
                            std::chrono::milliseconds call_timeout);

Response synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope, Planner& planner);

Response run(const Query& query, const OrchestratorConfig& config, Planner& planner, const ToolRegistry& registry,
             const RunHooks& hooks = {});

} // namespace dermtrace
