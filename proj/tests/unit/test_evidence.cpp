// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "dermtrace/error.hpp"

#include <gtest/gtest.h>

using namespace dermtrace;
using namespace dttest;

TEST(AppendEvidence, EmptyChainPlusClassifierItem)
{
    auto c = append_evidence(EvidenceChain{}, panderm_item("melanoma", 0.95));
    EXPECT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].seq, 0u);
}

TEST(AppendEvidence, FourthItemLeavesPrefixUntouched)
{
    auto c = chain_of({panderm_item("eczema", 1.0), case_item({{"ga", 0.8}}),
                       item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}})});
    auto before = std::vector<EvidenceItem>(c.begin(), c.end());
    auto g = item(ToolId::guideline_rag, json{{"query", "ga"}}, json::object(), 0.9, {"u1", "u2"});
    auto d = append_evidence(c, g);
    ASSERT_EQ(d.size(), 4u);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_EQ(d[i], before[i]);
    EXPECT_EQ(d[3].sources.size(), 2u);
}

TEST(AppendEvidence, ScoredItemWithoutConfidenceIsRejected)
{
    auto bad = panderm_item("eczema", 1.0);
    bad.confidence.reset();
    EXPECT_THROW((void)append_evidence(EvidenceChain{}, bad), ValidationError);
}

TEST(AppendEvidence, RetrievalItemNeedsSources)
{
    auto bad = item(ToolId::case_rag, json::object(), json::object(), 0.5, {});
    EXPECT_THROW((void)append_evidence(EvidenceChain{}, bad), ValidationError);
}

TEST(AppendEvidence, ConfidenceOutsideUnitInterval)
{
    auto bad = panderm_item("eczema", 1.0);
    bad.confidence = 1.5;
    EXPECT_THROW((void)append_evidence(EvidenceChain{}, bad), ValidationError);
}

TEST(AppendEvidence, RoundsMayNotGoBackwards)
{
    auto c = chain_of({panderm_item("a", 0.9, 1)});
    EXPECT_THROW((void)append_evidence(c, panderm_item("b", 0.9, 0)), EvidenceError);
}

TEST(AppendEvidence, FailedItemsSkipScoredChecks)
{
    auto c = append_evidence(EvidenceChain{}, EvidenceItem::failure(ToolId::case_rag, json::object(), 0, "timeout", "x"));
    EXPECT_TRUE(c[0].failed());
    EXPECT_FALSE(c.invoked(ToolId::case_rag));
}

TEST(AppendEvidence, PrefixPropertyOverRandomSequences)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto full = random_chain(rng, 30);
        EvidenceChain grown;
        for (const auto& it : full) {
            auto prev = grown;
            grown = append_evidence(grown, it);
            ASSERT_EQ(grown.size(), prev.size() + 1);
            for (std::size_t i = 0; i < prev.size(); ++i)
                ASSERT_EQ(grown[i], prev[i]);
        }
    }
}

TEST(Chain, LatestAndHasCallIgnoreFailures)
{
    auto c = chain_of({panderm_item("a", 0.5, 0, {"a", "b"}),
                       EvidenceItem::failure(ToolId::panderm, json{{"candidates", {"c"}}}, 0, "error", "boom")});
    ASSERT_NE(c.latest(ToolId::panderm), nullptr);
    EXPECT_EQ(c.latest(ToolId::panderm)->seq, 0u);
    EXPECT_TRUE(c.has_call(ToolCall{ToolId::panderm, json{{"candidates", {"B", "a"}}}}));
    EXPECT_FALSE(c.has_call(ToolCall{ToolId::panderm, json{{"candidates", {"c"}}}}));
}

TEST(Params, CanonicalFormSortsAndFolds)
{
    json a{{"z", {"B", "a"}}, {"A", "Eczema"}};
    json b{{"A", "eczema"}, {"z", {"a", "b"}}};
    EXPECT_TRUE(params_equal(a, b));
    EXPECT_FALSE(params_equal(a, json{{"A", "eczema"}}));
}

TEST(Params, SchemaValidation)
{
    EXPECT_NO_THROW(validate_params(ToolId::panderm, json{{"candidates", {"a"}}}));
    EXPECT_THROW(validate_params(ToolId::panderm, json{{"candidates", "a"}}), ValidationError);
    EXPECT_THROW(validate_params(ToolId::panderm, json{{"bogus", 1}}), ValidationError);
    EXPECT_THROW(validate_params(ToolId::ontology, json{{"mode", "climb"}, {"name", "x"}}), ValidationError);
    EXPECT_THROW(validate_params(ToolId::case_rag, json{{"k", 0}}), ValidationError);
    EXPECT_NO_THROW(validate_params(ToolId::case_rag, json::object()));
}

TEST(ToolNames, RoundTripAndUnknown)
{
    for (auto t : all_tools)
        EXPECT_EQ(tool_from_string(to_string(t)), t);
    EXPECT_THROW(tool_from_string("gpt4"), ValidationError);
    EXPECT_FALSE(parse_tool_id("gpt4").has_value());
}

TEST(Trace, EmptyChainHasNoLines)
{
    EXPECT_EQ(serialize_trace(EvidenceChain{}), "");
}

TEST(Trace, TwoItemsTwoParseableLines)
{
    auto c = chain_of({panderm_item("eczema", 1.0), guideline_item("ga", 0.9)});
    auto text = serialize_trace(c);
    std::size_t lines = 0;
    std::size_t pos = 0;
    while ((pos = text.find('\n', pos)) != std::string::npos) {
        ++lines;
        ++pos;
    }
    EXPECT_EQ(lines, 2u);
    auto first = json::parse(text.substr(0, text.find('\n')));
    for (const char* key : {"seq", "round", "tool_id", "params", "result", "confidence", "sources"})
        EXPECT_TRUE(first.contains(key)) << key;
}

TEST(Trace, ConfidenceOmittedWhenAbsent)
{
    auto c = chain_of({item(ToolId::dermo_gpt, json{{"question", "q"}}, json{{"text", "t"}})});
    EXPECT_FALSE(json::parse(serialize_item(c[0])).contains("confidence"));
}

TEST(Trace, RoundTripFiftyItems)
{
    std::mt19937_64 rng(50);
    auto c = random_chain(rng, 50);
    EXPECT_EQ(parse_trace(serialize_trace(c)), c);
}

TEST(Trace, EventLinesAreSkipped)
{
    auto c = chain_of({panderm_item("eczema", 1.0)});
    auto text = std::string("{\"event\":\"round_start\",\"k\":0}\n") + serialize_trace(c) + "{\"event\":\"final\"}\n";
    EXPECT_EQ(parse_trace(text), c);
}

TEST(Trace, OutOfOrderSequenceIsRejected)
{
    auto line = json::parse(serialize_item(chain_of({panderm_item("a", 0.9)})[0]));
    line["seq"] = 3;
    EXPECT_THROW(parse_trace(line.dump() + "\n"), ParseError);
}

TEST(Trace, MalformedLineNamesItsNumber)
{
    try {
        parse_trace("{\"event\":\"x\"}\nnot json\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}

TEST(Citations, UniqueInFirstAppearanceOrder)
{
    auto c = chain_of({case_item({{"a", 0.9}, {"b", 0.8}}), guideline_item("q", 0.9), case_item({{"a", 0.9}})});
    auto cites = harvest_citations(c);
    EXPECT_EQ(cites, (std::vector<std::string>{"c0", "c1", "https://guidelines.example.org/x"}));
}

TEST(Citations, ClosureOverRandomChains)
{
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        auto c = random_chain(rng, 20);
        for (const auto& cite : harvest_citations(c)) {
            bool found = std::any_of(c.begin(), c.end(), [&](const EvidenceItem& i) {
                return std::find(i.sources.begin(), i.sources.end(), cite) != i.sources.end();
            });
            ASSERT_TRUE(found) << cite;
        }
    }
}

TEST(QueryType, EmptyQuestionIsAContractViolation)
{
    Query q{"img", "   ", false};
    EXPECT_THROW(q.validate(), ContractViolation);
}

TEST(Feedback, JsonRoundTrip)
{
    Feedback f{Gate::conflict, "msg", {ToolCall{ToolId::panderm, json{{"candidates", {"a", "b"}}}}}, true, 3};
    EXPECT_EQ(Feedback::from_json(f.to_json()), f);
}
