// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "dermtrace/critic.hpp"
#include "dermtrace/error.hpp"
#include "dermtrace/orchestrator.hpp"

#include <gtest/gtest.h>

using namespace dermtrace;
using namespace dttest;

namespace {

TaskScope narrow_scope(std::vector<ToolId> actionable, std::set<ToolId> required = {})
{
    return TaskScope{TaskType::diagnosis, std::move(required), std::move(actionable)};
}

const OntologyIndex* onto()
{
    return shipped().ontology.get();
}

CallDefaults defaults()
{
    CallDefaults d;
    d.question = "What disease is this?";
    d.candidates = {"eczema", "granuloma annulare", "melanoma"};
    d.features = {"scale", "erythema"};
    return d;
}

EvidenceChain dorsal_hand_round0()
{
    return chain_of({panderm_item("Eczema", 1.00),
                     case_item({{"Granuloma Annulare", 0.86},
                                {"Granuloma Annulare", 0.81},
                                {"Granuloma Annulare", 0.77},
                                {"Granuloma Annulare", 0.74}})});
}

} // namespace

TEST(Confidence, LowClassifierWithUninvokedToolFlags)
{
    auto chain = chain_of({panderm_item("eczema", 0.89)});
    EXPECT_TRUE(check_confidence(chain, scope_for(TaskType::diagnosis), CriticThresholds{}));
}

TEST(Confidence, AllAboveThresholdPasses)
{
    auto chain = chain_of({panderm_item("eczema", 0.95), case_item({{"eczema", 0.85}})});
    EXPECT_FALSE(check_confidence(chain, narrow_scope({ToolId::panderm, ToolId::case_rag}), CriticThresholds{}));
}

TEST(Confidence, LowButNothingLeftToCall)
{
    auto chain = chain_of({panderm_item("eczema", 0.50), case_item({{"eczema", 0.85}})});
    EXPECT_FALSE(check_confidence(chain, narrow_scope({ToolId::panderm, ToolId::case_rag}), CriticThresholds{}));
}

TEST(Confidence, ExactBoundaries)
{
    auto scope = scope_for(TaskType::diagnosis);
    CriticThresholds t;
    EXPECT_TRUE(check_confidence(chain_of({panderm_item("x", 0.89)}), scope, t));
    EXPECT_FALSE(check_confidence(chain_of({panderm_item("x", 0.90)}), scope, t));
    EXPECT_TRUE(check_confidence(chain_of({panderm_item("x", 0.95), case_item({{"x", 0.79}})}), scope, t));
    EXPECT_FALSE(check_confidence(chain_of({panderm_item("x", 0.95), case_item({{"x", 0.80}})}), scope, t));
    EXPECT_TRUE(check_confidence(chain_of({guideline_item("x", 0.79)}), scope, t));
    EXPECT_FALSE(check_confidence(chain_of({guideline_item("x", 0.80)}), scope, t));
}

TEST(Confidence, FreeTextToolsNeverFlag)
{
    auto chain = chain_of({item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}}, 0.1)});
    EXPECT_FALSE(check_confidence(chain, scope_for(TaskType::diagnosis), CriticThresholds{}));
}

TEST(Confidence, FailedItemsAreIgnored)
{
    auto chain = chain_of({EvidenceItem::failure(ToolId::panderm, json::object(), 0, "timeout", "late")});
    EXPECT_FALSE(check_confidence(chain, scope_for(TaskType::diagnosis), CriticThresholds{}));
}

TEST(Confidence, ThresholdMonotonicity)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto scope = scope_for(TaskType::diagnosis);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<EvidenceItem> items;
        auto n = 1 + rng() % 4;
        for (std::size_t i = 0; i < n; ++i) {
            switch (rng() % 3) {
            case 0: items.push_back(panderm_item("a", u(rng))); break;
            case 1: items.push_back(case_item({{"a", u(rng)}})); break;
            default: items.push_back(guideline_item("a", u(rng))); break;
            }
        }
        auto chain = chain_of(items);
        double lo = u(rng);
        double hi = lo + (1.0 - lo) * u(rng);
        CriticThresholds a{lo, 0.8};
        CriticThresholds b{hi, 0.8};
        if (check_confidence(chain, scope, a))
            ASSERT_TRUE(check_confidence(chain, scope, b)) << lo << " -> " << hi;
    }
}

TEST(Thresholds, OutOfRangeIsAConfigError)
{
    EXPECT_THROW((CriticThresholds{1.5, 0.8}.validate()), ConfigError);
    EXPECT_THROW((CriticThresholds{0.9, -0.1}.validate()), ConfigError);
    EXPECT_THROW(CriticThresholds::from_json(json{{"rag_min_sim", 2}}), ConfigError);
    auto t = CriticThresholds::from_json(json::object());
    EXPECT_EQ(t.panderm_min_conf, 0.90);
    EXPECT_EQ(t.rag_min_sim, 0.80);
}

TEST(Coverage, VqaAloneIsNotEnoughForDiagnosis)
{
    auto chain = chain_of({item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}})});
    EXPECT_TRUE(check_coverage(scope_for(TaskType::diagnosis), chain));
}

TEST(Coverage, ClassifierAndCasesCoverDiagnosis)
{
    auto chain = chain_of({panderm_item("a", 0.9), case_item({{"a", 0.9}})});
    EXPECT_FALSE(check_coverage(scope_for(TaskType::diagnosis), chain));
}

TEST(Coverage, AblatedToolIsNotRequired)
{
    std::set<ToolId> available{all_tools.begin(), all_tools.end()};
    available.erase(ToolId::case_rag);
    auto scope = restrict_scope(scope_for(TaskType::diagnosis), available);
    EXPECT_FALSE(check_coverage(scope, chain_of({panderm_item("a", 0.9)})));
}

TEST(Coverage, FailedCallDoesNotCover)
{
    auto chain = chain_of({panderm_item("a", 0.9),
                           EvidenceItem::failure(ToolId::case_rag, json{{"k", 4}}, 0, "transport", "down")});
    EXPECT_TRUE(check_coverage(scope_for(TaskType::diagnosis), chain));
}

TEST(Conflict, DorsalHandDisagreementIsFlagged)
{
    EXPECT_TRUE(detect_conflicts(dorsal_hand_round0(), onto()));
    EXPECT_TRUE(detect_conflicts(dorsal_hand_round0(), nullptr));
}

TEST(Conflict, CaseFoldingIsNotAConflict)
{
    auto chain = chain_of({panderm_item("melanoma", 0.95), case_item({{"Melanoma", 0.9}})});
    EXPECT_FALSE(detect_conflicts(chain, nullptr));
}

TEST(Conflict, AliasIsNotAConflict)
{
    auto chain = chain_of({panderm_item("granuloma annulare", 0.95), case_item({{"GA", 0.9}, {"GA", 0.8}})});
    EXPECT_FALSE(detect_conflicts(chain, onto()));
    EXPECT_TRUE(detect_conflicts(chain, nullptr));
}

TEST(Conflict, PriorGuidelineQueryNamingBothAcceptsIt)
{
    auto chain = append_evidence(dorsal_hand_round0(), guideline_item("granuloma annulare vs eczema differential", 0.9, 1));
    EXPECT_FALSE(detect_conflicts(chain, onto()));
}

TEST(Conflict, QueryNamingOnlyOneLabelDoesNotSettleIt)
{
    auto chain = append_evidence(dorsal_hand_round0(), guideline_item("eczema features", 0.9, 1));
    EXPECT_TRUE(detect_conflicts(chain, onto()));
}

TEST(Conflict, MissingSideMeansNoConflict)
{
    EXPECT_FALSE(detect_conflicts(chain_of({panderm_item("eczema", 1.0)}), onto()));
    EXPECT_FALSE(detect_conflicts(chain_of({case_item({{"ga", 0.9}})}), onto()));
}

TEST(Conflict, LatestItemsAreCompared)
{
    auto chain = append_evidence(dorsal_hand_round0(), panderm_item("granuloma annulare", 1.0, 1, {"eczema", "granuloma annulare"}));
    EXPECT_FALSE(detect_conflicts(chain, onto()));
}

TEST(Conflict, MajorityTieGoesToHigherMeanSimilarity)
{
    auto chain = chain_of({panderm_item("b", 0.95), case_item({{"a", 0.9}, {"b", 0.8}, {"a", 0.9}, {"b", 0.8}})});
    auto pair = find_disagreement(chain, nullptr);
    ASSERT_TRUE(pair);
    EXPECT_EQ(pair->case_label, "a");
}

TEST(Conflict, SymmetricUnderSwappingSources)
{
    std::mt19937_64 rng(5);
    const std::vector<std::string> labels{"eczema", "GA", "granuloma annulare", "Melanoma", "melanoma ", "psoriasis"};
    for (int trial = 0; trial < 500; ++trial) {
        auto a = labels[rng() % labels.size()];
        auto b = labels[rng() % labels.size()];
        std::vector<EvidenceItem> extra;
        if (rng() % 2)
            extra.push_back(guideline_item(labels[rng() % labels.size()] + " vs " + labels[rng() % labels.size()], 0.9));
        auto build = [&](const std::string& p, const std::string& c) {
            std::vector<EvidenceItem> items{panderm_item(p, 0.9), case_item({{c, 0.9}})};
            items.insert(items.end(), extra.begin(), extra.end());
            return chain_of(items);
        };
        for (const auto* o : {onto(), static_cast<const OntologyIndex*>(nullptr)})
            ASSERT_EQ(detect_conflicts(build(a, b), o), detect_conflicts(build(b, a), o)) << a << " / " << b;
    }
}

TEST(Conflict, AcceptanceIsMonotone)
{
    std::mt19937_64 rng(9);
    auto chain = append_evidence(dorsal_hand_round0(), guideline_item("eczema vs granuloma annulare differential", 0.9, 1));
    for (int i = 0; i < 200; ++i) {
        int round = chain[chain.size() - 1].round + static_cast<int>(rng() % 2);
        switch (rng() % 3) {
        case 0: chain = append_evidence(chain, guideline_item(random_word(rng), 0.5, round)); break;
        case 1: chain = append_evidence(chain, item(ToolId::dermo_gpt, json{{"question", random_word(rng)}},
                                                    json{{"text", "x"}}, std::nullopt, {}, round));
            break;
        default: chain = append_evidence(chain, EvidenceItem::failure(ToolId::case_rag, json::object(), round, "timeout", ""));
        }
        ASSERT_FALSE(detect_conflicts(chain, onto()));
    }
}

TEST(Feedback, ConflictOnDorsalHand)
{
    auto scope = scope_for(TaskType::captioning);
    auto fb = make_feedback(false, false, true, dorsal_hand_round0(), scope, defaults(), onto(), 0);
    ASSERT_EQ(fb.size(), 1u);
    EXPECT_EQ(fb[0].gate, Gate::conflict);
    EXPECT_TRUE(fb[0].reinject_image);
    ASSERT_EQ(fb[0].suggested_calls.size(), 2u);
    const auto& refined = fb[0].suggested_calls[0];
    EXPECT_EQ(refined.tool, ToolId::panderm);
    auto cands = refined.params["candidates"].get<std::vector<std::string>>();
    EXPECT_NE(std::find(cands.begin(), cands.end(), "eczema"), cands.end());
    EXPECT_NE(std::find(cands.begin(), cands.end(), "granuloma annulare"), cands.end());
    const auto& lookup = fb[0].suggested_calls[1];
    EXPECT_EQ(lookup.tool, ToolId::guideline_rag);
    EXPECT_NE(lookup.params["query"].get<std::string>().find("granuloma annulare"), std::string::npos);
}

TEST(Feedback, CoverageSuggestsMissingTool)
{
    TaskScope scope{TaskType::concept_annotation, {ToolId::make}, {ToolId::make, ToolId::dermo_gpt}};
    auto chain = chain_of({item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}})});
    auto fb = make_feedback(false, true, false, chain, scope, defaults(), nullptr, 0);
    ASSERT_EQ(fb.size(), 1u);
    EXPECT_EQ(fb[0].gate, Gate::coverage);
    ASSERT_EQ(fb[0].suggested_calls.size(), 1u);
    EXPECT_EQ(fb[0].suggested_calls[0].tool, ToolId::make);
    EXPECT_EQ(fb[0].suggested_calls[0].params["features"], json({"scale", "erythema"}));
}

TEST(Feedback, ConfidenceSuggestsFirstUninvokedActionableTool)
{
    auto chain = chain_of({panderm_item("eczema", 0.5), case_item({{"eczema", 0.9}})});
    auto fb = make_feedback(true, false, false, chain, scope_for(TaskType::diagnosis), defaults(), nullptr, 0);
    ASSERT_EQ(fb.size(), 1u);
    ASSERT_EQ(fb[0].suggested_calls.size(), 1u);
    EXPECT_EQ(fb[0].suggested_calls[0].tool, ToolId::dermo_gpt);
    EXPECT_FALSE(fb[0].reinject_image);
}

TEST(Feedback, GuidelineSuggestionUsesClassifierLabel)
{
    auto chain = chain_of({panderm_item("eczema", 0.5), case_item({{"eczema", 0.9}}),
                           item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}})});
    auto fb = make_feedback(true, false, false, chain, scope_for(TaskType::diagnosis), defaults(), nullptr, 0);
    ASSERT_EQ(fb[0].suggested_calls.size(), 1u);
    EXPECT_EQ(fb[0].suggested_calls[0], (ToolCall{ToolId::guideline_rag, json{{"query", "eczema"}}}));
}

TEST(Feedback, NoFlagsIsAContractViolation)
{
    EXPECT_THROW(make_feedback(false, false, false, dorsal_hand_round0(), scope_for(TaskType::diagnosis), defaults(), nullptr, 0),
                 ContractViolation);
}

TEST(Feedback, SuggestionsNeverRepeatSuccessfulCalls)
{
    auto chain = append_evidence(dorsal_hand_round0(), panderm_item("eczema", 0.6, 1, {"eczema", "granuloma annulare"}));
    auto fb = make_feedback(false, false, true, chain, scope_for(TaskType::captioning), defaults(), onto(), 1);
    for (const auto& c : fb[0].suggested_calls)
        EXPECT_FALSE(chain.has_call(c));
}

TEST(Verdict, FeedbackPresentIffSomeFlag)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> labels{"eczema", "granuloma annulare", "GA"};
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<EvidenceItem> items;
        if (rng() % 2)
            items.push_back(panderm_item(labels[rng() % 3], u(rng)));
        if (rng() % 2)
            items.push_back(case_item({{labels[rng() % 3], u(rng)}}));
        if (rng() % 2)
            items.push_back(guideline_item(labels[rng() % 3], u(rng)));
        auto chain = chain_of(items);
        auto scope = scope_for(static_cast<TaskType>(rng() % 4));
        auto v = evaluate(chain, scope, CriticThresholds{}, onto(), defaults(), 0);
        ASSERT_EQ(v.any(), !v.feedback.empty());
        for (const auto& f : v.feedback) {
            bool raised = (f.gate == Gate::confidence && v.f_conf) || (f.gate == Gate::coverage && v.f_cov)
                       || (f.gate == Gate::conflict && v.f_con);
            ASSERT_TRUE(raised);
        }
        auto again = evaluate(chain, scope, CriticThresholds{}, onto(), defaults(), 0);
        ASSERT_EQ(v.to_json(0).dump(), again.to_json(0).dump());
    }
}

TEST(Verdict, TraceLineShape)
{
    auto v = evaluate(dorsal_hand_round0(), scope_for(TaskType::captioning), CriticThresholds{}, onto(), defaults(), 0);
    auto j = v.to_json(0);
    EXPECT_EQ(j["event"], "critic");
    EXPECT_EQ(j["k"], 0);
    EXPECT_FALSE(j["f_conf"].get<bool>());
    EXPECT_TRUE(j["f_cov"].get<bool>());
    EXPECT_TRUE(j["f_con"].get<bool>());
    EXPECT_EQ(j["feedback"].size(), 2u);
}

TEST(Normalize, CasefoldTrimAndAliases)
{
    EXPECT_EQ(normalize_label("  Melanoma ", nullptr), "melanoma");
    EXPECT_EQ(normalize_label("GA", onto()), "granuloma annulare");
    EXPECT_EQ(normalize_label("Shingles", onto()), "herpes zoster");
    EXPECT_EQ(normalize_label("unknown thing", onto()), "unknown thing");
}
