// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "dermtrace/error.hpp"
#include "dermtrace/guideline.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dermtrace;
using namespace dttest;

namespace {

GuidelineChunk chunk(std::string id, std::string text, std::vector<float> emb = {})
{
    auto url = "https://g.example/" + id;
    return GuidelineChunk{std::move(id), std::move(text), {}, "", std::move(url), std::move(emb)};
}

/// Returns the same vector for every text.
class FixedEmbedder final : public EmbeddingProvider {
public:
    explicit FixedEmbedder(std::vector<float> v) : v_(std::move(v)) {}
    std::size_t dimension() const override { return v_.size(); }
    std::vector<float> embed(std::string_view) override { return v_; }

private:
    std::vector<float> v_;
};

class DownReranker final : public RerankProvider {
public:
    double score(std::string_view, std::string_view) override
    {
        throw TransportError(TransportFailure::connection, "reranker offline");
    }
};

RankedList list_of(std::vector<std::string> ids, ListOrigin o = ListOrigin::dense)
{
    RankedList l{o, {}};
    double s = 1.0;
    for (auto& id : ids)
        l.entries.push_back({std::move(id), s -= 0.01});
    return l;
}

std::map<std::string, double> rrf_oracle(const std::vector<RankedList>& lists, int k)
{
    std::map<std::string, double> m;
    for (const auto& l : lists)
        for (std::size_t r = 0; r < l.entries.size(); ++r)
            m[l.entries[r].id] += 1.0 / (k + static_cast<double>(r) + 1.0);
    return m;
}

} // namespace

TEST(FilterQuery, DropsStopTerms)
{
    StopWordList stops({"what", "is", "the", "for"});
    EXPECT_EQ(filter_query("What is the treatment for granuloma annulare?", stops), "treatment granuloma annulare");
    EXPECT_EQ(filter_query("The", stops), "the");
    EXPECT_THROW(StopWordList({"Two words"}), ValidationError);
}

TEST(FilterQuery, Idempotent)
{
    const auto& stops = *shipped().stopwords;
    for (const char* q : {"What is the first-line treatment of psoriasis?", "eczema vs GA differential", "the of and",
                          "  Tinea   CORPORIS  "}) {
        auto once = filter_query(q, stops);
        EXPECT_EQ(filter_query(once, stops), once) << q;
    }
}

TEST(Dense, MatchesOracleAndIsClamped)
{
    std::mt19937_64 rng(31);
    std::normal_distribution<float> g;
    std::vector<GuidelineChunk> cs;
    for (int i = 0; i < 40; ++i) {
        std::vector<float> v(24);
        for (auto& x : v)
            x = g(rng);
        cs.push_back(chunk("g" + std::to_string(i), "text " + std::to_string(i), v));
    }
    HashEmbedder emb(24);
    auto idx = GuidelineIndex::build(cs, emb);
    std::vector<float> q(24);
    for (auto& x : q)
        x = g(rng);
    auto got = idx.dense_search_vector(q, 7);
    ASSERT_EQ(got.entries.size(), 7u);
    std::vector<std::pair<double, std::string>> want;
    for (const auto& c : cs)
        want.emplace_back(-cosine_similarity(q, c.embedding), c.id);
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(got.entries[i].id, want[i].second);
        EXPECT_NEAR(got.entries[i].score, -want[i].first, 1e-12);
        EXPECT_LE(got.entries[i].score, 1.0);
        EXPECT_GE(got.entries[i].score, -1.0);
    }
    EXPECT_THROW(idx.dense_search("x", emb, 0), ContractViolation);
}

TEST(Keyword, UniqueTermAbsentTermAndLength)
{
    HashEmbedder emb(32);
    auto idx = GuidelineIndex::build({chunk("a", "annular plaque on hand"), chunk("b", "scaly plaque elbow knee"),
                                      chunk("c", "plaque plaque with long additional words here and there")},
                                     emb);
    auto u = idx.keyword_search("annular", 5);
    ASSERT_EQ(u.entries.size(), 1u);
    EXPECT_EQ(u.entries[0].id, "a");
    EXPECT_TRUE(idx.keyword_search("zzzz", 5).entries.empty());

    auto idx2 = GuidelineIndex::build({chunk("long", "nodule with a very long description attached to it"),
                                       chunk("short", "nodule small"), chunk("other", "unrelated words")},
                                      emb);
    auto s = idx2.keyword_search("nodule", 5);
    ASSERT_EQ(s.entries.size(), 2u);
    EXPECT_EQ(s.entries[0].id, "short");
}

TEST(Bm25, MonotoneInTfDfAndLength)
{
    Bm25Params p;
    for (double tf = 1; tf < 20; ++tf)
        EXPECT_GT(bm25_term_score(tf + 1, 3, 100, 50, 40, p), bm25_term_score(tf, 3, 100, 50, 40, p));
    for (double df = 1; df < 99; ++df)
        EXPECT_GT(bm25_term_score(2, df, 100, 50, 40, p), bm25_term_score(2, df + 1, 100, 50, 40, p));
    for (double len = 5; len < 200; len += 5)
        EXPECT_GT(bm25_term_score(2, 3, 100, len, 40, p), bm25_term_score(2, 3, 100, len + 5, 40, p));
    EXPECT_GT(bm25_term_score(1, 100, 100, 40, 40, p), 0.0);
}

TEST(Rrf, WorkedExample)
{
    std::vector<RankedList> lists{list_of({"d", "x"}), list_of({"y", "z", "d"}, ListOrigin::keyword)};
    auto f = rrf_fuse(lists, 60, 10);
    auto it = std::find_if(f.entries.begin(), f.entries.end(), [](const RankedEntry& e) { return e.id == "d"; });
    ASSERT_NE(it, f.entries.end());
    EXPECT_NEAR(it->score, 1.0 / 61 + 1.0 / 63, 1e-15);
    EXPECT_EQ(f.entries.front().id, "d");
}

TEST(Rrf, SingleAndIdenticalLists)
{
    auto l = list_of({"a", "b", "c"});
    std::vector<RankedList> one{l};
    auto f1 = rrf_fuse(one, 60, 10);
    ASSERT_EQ(f1.entries.size(), 3u);
    EXPECT_EQ(f1.entries[0].id, "a");
    EXPECT_EQ(f1.entries[2].id, "c");
    std::vector<RankedList> two{l, l};
    auto f2 = rrf_fuse(two, 60, 10);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(f2.entries[i].score, 2 * f1.entries[i].score, 1e-15);
    EXPECT_THROW(rrf_fuse(std::span<const RankedList>{}, 60, 10), ContractViolation);
}

TEST(Rrf, OracleAndBoundOverRandomLists)
{
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<RankedList> lists;
        std::size_t n_lists = 1 + rng() % 4;
        for (std::size_t l = 0; l < n_lists; ++l) {
            std::vector<std::string> ids;
            std::size_t len = rng() % 15;
            for (std::size_t i = 0; i < len; ++i) {
                auto id = "d" + std::to_string(rng() % 25);
                if (std::find(ids.begin(), ids.end(), id) == ids.end())
                    ids.push_back(id);
            }
            lists.push_back(list_of(ids));
        }
        int k = 1 + static_cast<int>(rng() % 100);
        auto oracle = rrf_oracle(lists, k);
        auto fused = rrf_fuse(lists, k, 1000);
        ASSERT_EQ(fused.entries.size(), oracle.size());
        for (std::size_t i = 0; i < fused.entries.size(); ++i) {
            const auto& e = fused.entries[i];
            ASSERT_NEAR(e.score, oracle[e.id], 1e-12);
            ASSERT_LE(e.score, static_cast<double>(n_lists) / (k + 1) + 1e-15);
            if (i > 0)
                ASSERT_GE(fused.entries[i - 1].score, e.score);
        }
    }
}

TEST(Rerank, JaccardOrderAndSingle)
{
    JaccardReranker j;
    EXPECT_NEAR(j.score("a b", "b c"), 1.0 / 3.0, 1e-15);
    std::vector<GuidelineChunk> cs{chunk("x", "red scaly plaque"), chunk("y", "annular plaque hand")};
    auto r = rerank("annular plaque", cs, j, 5);
    ASSERT_EQ(r.ranked.size(), 2u);
    EXPECT_EQ(r.ranked[0].first.id, "y");
    EXPECT_FALSE(r.degraded);
    std::vector<GuidelineChunk> one{cs[0]};
    EXPECT_EQ(rerank("q", one, j, 5).ranked.size(), 1u);
    EXPECT_THROW(rerank("q", std::span<const GuidelineChunk>{}, j, 5), ContractViolation);
}

TEST(Rerank, ProviderDownKeepsFusedOrder)
{
    DownReranker down;
    std::vector<GuidelineChunk> cs{chunk("b", "t"), chunk("a", "t")};
    std::vector<double> fused{0.03, 0.02};
    auto r = rerank("q", cs, down, 5, fused);
    EXPECT_TRUE(r.degraded);
    EXPECT_EQ(r.ranked[0].first.id, "b");
    EXPECT_DOUBLE_EQ(r.ranked[0].second, 0.03);
}

TEST(Retrieve, ConfidenceIsTopDenseSimilarity)
{
    FixedEmbedder emb({1.0f, 0.0f});
    float s = static_cast<float>(std::sqrt(1 - 0.75 * 0.75));
    auto idx = GuidelineIndex::build({chunk("p", "psoriasis plaques", {0.75f, s}), chunk("q", "other", {0.5f, 0.866f})},
                                     emb);
    JaccardReranker j;
    auto item = retrieve_guidelines("psoriasis", idx, StopWordList{}, emb, j);
    EXPECT_NEAR(*item.confidence, 0.75, 1e-6);
    EXPECT_EQ(item.result["passages"][0]["id"], "p");
    EXPECT_EQ(item.sources.front(), "https://g.example/p");
}

TEST(Retrieve, DorsalHandDifferentialQuery)
{
    const auto& rt = shipped();
    auto out = rt.registry.dispatch(ToolCall{ToolId::guideline_rag,
                                             json{{"query", "eczema vs granuloma annulare differential"}}},
                                    ImageInput{"ga-dorsal-hand", nullptr});
    ASSERT_FALSE(out.result["passages"].empty());
    const auto& top = out.result["passages"][0];
    EXPECT_EQ(top["id"], "gl-ga-features");
    EXPECT_NE(top["section"].get<std::string>().find("Granuloma annulare"), std::string::npos);
    EXPECT_EQ(out.sources.front(), "https://guidelines.example.org/granuloma-annulare#clinical-features");
    EXPECT_GE(*out.confidence, 0.8);
}

TEST(Persistence, IndexSaveLoadGivesSameResults)
{
    const auto& rt = shipped();
    auto dir = std::filesystem::temp_directory_path() / "dermtrace-guideline-index";
    std::filesystem::remove_all(dir);
    rt.guidelines->save(dir, "h");
    auto back = GuidelineIndex::load(dir);
    ASSERT_EQ(back.size(), rt.guidelines->size());
    HashEmbedder emb(rt.guidelines->dimension());
    JaccardReranker j;
    for (const char* q : {"psoriasis treatment", "eczema vs granuloma annulare differential", "tinea"}) {
        auto a = retrieve_guidelines(q, *rt.guidelines, *rt.stopwords, emb, j);
        auto b = retrieve_guidelines(q, back, *rt.stopwords, emb, j);
        EXPECT_EQ(a.result, b.result) << q;
        EXPECT_EQ(a.confidence, b.confidence);
    }
    std::filesystem::remove_all(dir);
}

TEST(Ingest, DuplicateChunkIdsRejected)
{
    HashEmbedder emb(8);
    EXPECT_THROW(GuidelineIndex::build({chunk("a", "x"), chunk("a", "y")}, emb), IngestionError);
    EXPECT_THROW(GuidelineChunk::from_json(json{{"id", "a"}, {"text", ""}, {"source_url", "u"}}), IngestionError);
}
