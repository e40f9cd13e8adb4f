// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <future>
#include <ostream>
#include <thread>

namespace dermtrace {

namespace {

struct TaskRule {
    TaskType task;
    std::vector<std::string_view> keywords;
};

const std::vector<TaskRule>& task_rules()
{
    static const std::vector<TaskRule> rules{
        {TaskType::diagnosis, {"diagnos", "what disease", "what condition", "identify"}},
        {TaskType::concept_annotation, {"concept", "feature", "dermoscopic structure", "annotate"}},
        {TaskType::captioning, {"caption", "describe", "report"}},
    };
    return rules;
}

} // namespace

TaskScope scope_for(TaskType task)
{
    using T = ToolId;
    TaskScope s;
    s.task_type = task;
    switch (task) {
    case TaskType::diagnosis:
        s.actionable_tools = {T::panderm, T::case_rag, T::dermo_gpt, T::guideline_rag, T::ontology};
        s.required_tools = {T::panderm, T::case_rag};
        break;
    case TaskType::concept_annotation:
        s.actionable_tools = {T::make, T::dermo_gpt, T::qwen_vl};
        s.required_tools = {T::make};
        break;
    case TaskType::captioning:
        s.actionable_tools = {T::dermo_gpt, T::panderm, T::make, T::case_rag, T::guideline_rag, T::ontology};
        s.required_tools = {T::dermo_gpt, T::panderm};
        break;
    case TaskType::general_vqa:
        s.actionable_tools = {T::qwen_vl, T::dermo_gpt};
        break;
    }
    return s;
}

TaskScope analyze_task(const Query& query)
{
    if (trim(query.question).empty())
        throw ContractViolation("query question must be non-empty");
    auto q = casefold(query.question);
    for (const auto& rule : task_rules()) {
        for (auto kw : rule.keywords) {
            if (q.find(kw) != std::string::npos)
                return scope_for(rule.task);
        }
    }
    return scope_for(TaskType::general_vqa);
}

TaskScope restrict_scope(TaskScope scope, const std::set<ToolId>& available)
{
    std::erase_if(scope.actionable_tools, [&](ToolId t) { return !available.count(t); });
    std::erase_if(scope.required_tools, [&](ToolId t) { return !available.count(t); });
    return scope;
}

void OrchestratorConfig::validate() const
{
    if (k_max < 0)
        throw ConfigError("k_max must be non-negative");
    if (enabled_tools.empty())
        throw ConfigError("enabled_tools must not be empty");
    if (parallelism_limit == 0)
        throw ConfigError("parallelism_limit must be positive");
    if (call_timeout.count() <= 0)
        throw ConfigError("call_timeout must be positive");
    if (planner_attempts < 1)
        throw ConfigError("planner_attempts must be at least 1");
    thresholds.validate();
    if (ablation)
        return;
    for (auto task : {TaskType::diagnosis, TaskType::concept_annotation, TaskType::captioning, TaskType::general_vqa}) {
        for (auto t : scope_for(task).required_tools) {
            if (!enabled_tools.count(t))
                throw ConfigError("tool '" + std::string(to_string(t)) + "' is required for "
                                  + std::string(to_string(task)) + " but disabled; enable ablation mode to allow it");
        }
    }
}

std::string_view to_string(RunPhase p) noexcept
{
    switch (p) {
    case RunPhase::analyzing: return "analyzing";
    case RunPhase::planning: return "planning";
    case RunPhase::executing: return "executing";
    case RunPhase::reflecting: return "reflecting";
    case RunPhase::synthesizing: return "synthesizing";
    case RunPhase::done: return "done";
    }
    return "unknown";
}

namespace {

EvidenceItem invoke_one(const ToolCall& call, std::shared_ptr<Tool> impl, const ImageInput& image, int round)
{
    try {
        auto out = impl->invoke(ToolRequest{image, call.params});
        EvidenceItem item;
        item.tool = call.tool;
        item.params = call.params;
        item.round = round;
        item.result = std::move(out.result);
        item.confidence = out.confidence;
        item.sources = std::move(out.sources);
        try {
            validate_item(item);
        } catch (const ValidationError& e) {
            return EvidenceItem::failure(call.tool, call.params, round, "invalid_output", e.what());
        }
        return item;
    } catch (const UnknownInputError& e) {
        return EvidenceItem::failure(call.tool, call.params, round, "unknown_input", e.what());
    } catch (const TransportError& e) {
        return EvidenceItem::failure(call.tool, call.params, round, "transport", e.what());
    } catch (const NotFoundError& e) {
        return EvidenceItem::failure(call.tool, call.params, round, "not_found", e.what());
    } catch (const std::exception& e) {
        return EvidenceItem::failure(call.tool, call.params, round, "error", e.what());
    }
}

EvidenceItem run_with_timeout(const ToolCall& call, std::shared_ptr<Tool> impl, const ImageInput& image, int round,
                              std::chrono::milliseconds timeout)
{
    auto promise = std::make_shared<std::promise<EvidenceItem>>();
    auto future = promise->get_future();
    // The runner owns copies of everything it touches so that it can outlive
    // this round when it overruns the deadline.
    std::thread([promise, call, impl = std::move(impl), image, round]() mutable {
        promise->set_value(invoke_one(call, std::move(impl), image, round));
    }).detach();
    if (future.wait_for(timeout) == std::future_status::ready)
        return future.get();
    return EvidenceItem::failure(call.tool, call.params, round, "timeout",
                                 "call exceeded " + std::to_string(timeout.count()) + " ms");
}

} // namespace

EvidenceChain execute_round(const Plan& plan, const ToolRegistry& registry, EvidenceChain chain,
                            const ImageInput& image, std::size_t parallelism_limit,
                            std::chrono::milliseconds call_timeout)
{
    if (plan.calls.empty())
        throw ContractViolation("plan for round " + std::to_string(plan.round) + " has no calls");
    if (parallelism_limit == 0)
        throw ContractViolation("parallelism_limit must be positive");

    std::vector<std::shared_ptr<Tool>> impls;
    for (const auto& call : plan.calls)
        impls.push_back(registry.tool(call.tool));

    std::vector<EvidenceItem> slots(plan.calls.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next.fetch_add(1); i < plan.calls.size(); i = next.fetch_add(1)) {
            const auto& call = plan.calls[i];
            try {
                validate_params(call.tool, call.params);
            } catch (const ValidationError& e) {
                slots[i] = EvidenceItem::failure(call.tool, call.params, plan.round, "invalid_params", e.what());
                continue;
            }
            slots[i] = run_with_timeout(call, impls[i], image, plan.round, call_timeout);
        }
    };
    auto n_workers = std::min(parallelism_limit, plan.calls.size());
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < n_workers; ++w)
            workers.emplace_back(worker);
    }
    for (auto& item : slots)
        chain = append_evidence(std::move(chain), std::move(item));
    return chain;
}

Response synthesize(const EvidenceChain& chain, const Query& query, const TaskScope& scope, Planner& planner)
{
    if (chain.empty())
        throw SynthesisError("cannot synthesise an answer from an empty evidence chain");
    Response r;
    r.answer = planner.synthesize(chain, query, scope);
    r.evidence = chain;
    r.citations = harvest_citations(chain);
    return r;
}

namespace {

void emit(std::ostream* trace, const json& event)
{
    if (trace)
        *trace << event.dump() << '\n';
}

std::optional<Plan> plan_with_retries(Planner& planner, const PlannerContext& ctx, int attempts,
                                      const EvidenceChain& chain, int rounds)
{
    std::string last_error;
    for (int i = 0; i < attempts; ++i) {
        try {
            return planner.plan(ctx);
        } catch (const PlannerError& e) {
            last_error = e.what();
        } catch (const ParseError& e) {
            last_error = e.what();
        } catch (const ValidationError& e) {
            last_error = e.what();
        }
    }
    throw OrchestrationError("planning failed in round " + std::to_string(ctx.round) + " after "
                                 + std::to_string(attempts) + " attempt(s): " + last_error,
                             chain, rounds);
}

} // namespace

Response run(const Query& query, const OrchestratorConfig& config, Planner& planner, const ToolRegistry& registry,
             const RunHooks& hooks)
{
    auto phase = [&](RunPhase p) {
        if (hooks.on_phase)
            hooks.on_phase(p);
    };
    phase(RunPhase::analyzing);
    config.validate();
    query.validate();

    std::set<ToolId> available;
    for (auto t : config.enabled_tools) {
        if (registry.contains(t))
            available.insert(t);
    }
    auto full = analyze_task(query);
    if (!config.ablation) {
        for (auto t : full.required_tools) {
            if (!available.count(t))
                throw ConfigError("required tool '" + std::string(to_string(t)) + "' is not registered and enabled");
        }
    }
    auto scope = restrict_scope(full, available);

    auto defaults = hooks.defaults;
    defaults.question = query.question;

    ImageInput image{query.image_ref, nullptr};
    if (query.attach_image)
        image.bytes = std::make_shared<const std::string>(query.load_image());

    emit(hooks.trace, json{{"event", "task"},
                           {"task_type", to_string(scope.task_type)},
                           {"image_ref", query.image_ref},
                           {"question", query.question}});

    EvidenceChain chain;
    std::vector<Feedback> feedback;
    int k = 0;
    int rounds = 0;
    bool show_image = true;
    bool exhausted = false;
    CriticVerdict verdict;

    for (;;) {
        phase(RunPhase::planning);
        PlannerContext ctx{scope, chain, feedback, query, std::nullopt, k, defaults};
        if (show_image && image.bytes)
            ctx.image_payload = *image.bytes;
        auto plan = plan_with_retries(planner, ctx, config.planner_attempts, chain, rounds);
        if (plan) {
            plan->round = k;
            std::erase_if(plan->calls, [&](const ToolCall& c) { return !available.count(c.tool); });
        }
        if (!plan || plan->calls.empty()) {
            exhausted = true;
            break;
        }

        phase(RunPhase::executing);
        emit(hooks.trace, json{{"event", "round_start"}, {"k", k}, {"image", show_image}});
        auto before = chain.size();
        chain = execute_round(*plan, registry, std::move(chain), image, config.parallelism_limit,
                              config.call_timeout);
        ++rounds;
        if (hooks.trace) {
            for (auto i = before; i < chain.size(); ++i)
                *hooks.trace << serialize_item(chain[i]) << '\n';
        }
        emit(hooks.trace, json{{"event", "round_end"}, {"k", k}});

        phase(RunPhase::reflecting);
        if (hooks.reflector)
            verdict = hooks.reflector(chain, scope, k);
        else if (config.critic)
            verdict = evaluate(chain, scope, config.thresholds, hooks.ontology, defaults, k);
        emit(hooks.trace, verdict.to_json(k));
        if (!verdict.any() || k >= config.k_max)
            break;
        feedback.insert(feedback.end(), verdict.feedback.begin(), verdict.feedback.end());
        show_image = std::any_of(verdict.feedback.begin(), verdict.feedback.end(),
                                 [](const Feedback& f) { return f.reinject_image; });
        ++k;
    }

    phase(RunPhase::synthesizing);
    if (chain.empty())
        throw OrchestrationError("no tool was called, nothing to synthesise", chain, rounds);
    Response response;
    try {
        response = synthesize(chain, query, scope, planner);
    } catch (const SynthesisError& e) {
        throw OrchestrationError(std::string("synthesis failed: ") + e.what(), chain, rounds);
    }
    response.rounds_used = rounds;
    bool any_success = std::any_of(chain.begin(), chain.end(), [](const EvidenceItem& i) { return !i.failed(); });
    response.status = (verdict.any() || exhausted || !any_success) ? RunStatus::partial : RunStatus::success;
    emit(hooks.trace, json{{"event", "final"},
                           {"rounds_used", rounds},
                           {"status", to_string(response.status)},
                           {"answer", response.answer},
                           {"citations", response.citations}});
    phase(RunPhase::done);
    return response;
}

} // namespace dermtrace
