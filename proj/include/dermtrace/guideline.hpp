// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Hybrid guideline retrieval: stop-word filtering, dense cosine search and
/// BM25 keyword search over the same chunks, reciprocal rank fusion, then
/// re-ranking by a pluggable relevance provider.

#include "dermtrace/evidence.hpp"
#include "dermtrace/remote.hpp"
#include "dermtrace/vector_index.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dermtrace {

inline constexpr std::size_t default_guideline_dimension = 4096;

struct GuidelineChunk {
    std::string id;
    std::string text;
    std::vector<std::string> disease_names;
    std::string section;
    std::string source_url;
    std::vector<float> embedding;

    static GuidelineChunk from_json(const json& j);
    json metadata_json() const;
};

std::vector<GuidelineChunk> read_guideline_corpus(const std::filesystem::path& path);

enum class ListOrigin : std::uint8_t { dense, keyword, fused };

struct RankedEntry {
    std::string id;
    double score = 0.0;

    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedList {
    ListOrigin origin = ListOrigin::dense;
    std::vector<RankedEntry> entries;
};

class StopWordList {
public:
    StopWordList() = default;
    /// Raises ValidationError for terms that are not lowercase single tokens.
    explicit StopWordList(std::set<std::string> terms);
    /// One term per line; '#' starts a comment.
    static StopWordList load(const std::filesystem::path& path);

    bool contains(std::string_view term) const { return terms_.count(std::string(term)) != 0; }
    std::size_t size() const noexcept { return terms_.size(); }

private:
    std::set<std::string> terms_;
};

/// Drops stop terms from the tokenised query. When every token is a stop term
/// the casefolded query is returned as is.
std::string filter_query(std::string_view query, const StopWordList& stops);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<float> embed(std::string_view text) = 0;
};

/// Offline embedder: each token adds 1 to bucket fnv1a(token) mod D, then
/// the vector is L2-normalised.
class HashEmbedder final : public EmbeddingProvider {
public:
    explicit HashEmbedder(std::size_t dimension = default_guideline_dimension) : dim_(dimension) {}
    std::size_t dimension() const override { return dim_; }
    std::vector<float> embed(std::string_view text) override;

private:
    std::size_t dim_;
};

/// Response content is a JSON array of floats.
class RemoteEmbedder final : public EmbeddingProvider {
public:
    RemoteEmbedder(RemoteEndpoint endpoint, std::size_t dimension, HttpTransport& transport = default_transport())
        : endpoint_(std::move(endpoint)), dim_(dimension), transport_(transport) {}
    std::size_t dimension() const override { return dim_; }
    std::vector<float> embed(std::string_view text) override;

private:
    RemoteEndpoint endpoint_;
    std::size_t dim_;
    HttpTransport& transport_;
};

class RerankProvider {
public:
    virtual ~RerankProvider() = default;
    virtual double score(std::string_view query, std::string_view document) = 0;
};

/// Deterministic stand-in for a cross-encoder: token-set Jaccard overlap.
class JaccardReranker final : public RerankProvider {
public:
    double score(std::string_view query, std::string_view document) override;
};

/// Binary relevance prompt; the response content is a probability in [0,1]
/// or the literal "yes"/"no".
class RemoteReranker final : public RerankProvider {
public:
    explicit RemoteReranker(RemoteEndpoint endpoint, HttpTransport& transport = default_transport())
        : endpoint_(std::move(endpoint)), transport_(transport) {}
    double score(std::string_view query, std::string_view document) override;

private:
    RemoteEndpoint endpoint_;
    HttpTransport& transport_;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// BM25 contribution of one term: idf * tf(k1+1) / (tf + k1(1 - b + b dl/avgdl))
/// with idf = ln(1 + (N - df + 0.5)/(df + 0.5)).
double bm25_term_score(double tf, double df, double n_docs, double doc_len, double avg_doc_len,
                       const Bm25Params& params);

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
};

/// Inverted index over text + disease_names + section.
class KeywordIndex {
public:
    KeywordIndex() = default;
    KeywordIndex(std::span<const GuidelineChunk> chunks, Bm25Params params);

    RankedList search(std::string_view query, std::size_t k) const;

    const Bm25Params& params() const noexcept { return params_; }
    std::size_t doc_count() const noexcept { return doc_len_.size(); }
    double avg_doc_len() const noexcept { return avg_len_; }

    json postings_json() const;
    static KeywordIndex from_parts(std::vector<std::string> ids, std::vector<std::uint32_t> doc_len,
                                   std::map<std::string, std::vector<Posting>> postings, Bm25Params params);
    const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_len_; }

private:
    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> doc_len_;
    double avg_len_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
};

std::vector<std::string> keyword_tokens(const GuidelineChunk& chunk);

/// Immutable after build; concurrent queries are safe.
class GuidelineIndex {
public:
    /// Missing embeddings are computed with `embedder`.
    static GuidelineIndex build(std::vector<GuidelineChunk> chunks, EmbeddingProvider& embedder,
                                Bm25Params params = {});

    std::size_t size() const noexcept { return chunks_.size(); }
    std::size_t dimension() const noexcept { return dense_.dimension(); }
    const GuidelineChunk& chunk(std::size_t i) const { return chunks_.at(i); }
    const GuidelineChunk* find(std::string_view id) const;
    const KeywordIndex& keyword() const noexcept { return keyword_; }

    RankedList dense_search(std::string_view query, EmbeddingProvider& embedder, std::size_t k) const;
    RankedList dense_search_vector(std::span<const float> query, std::size_t k) const;
    RankedList keyword_search(std::string_view query, std::size_t k) const;

    /// Directory layout: manifest.json, chunks.jsonl, vectors.bin, postings.jsonl.
    void save(const std::filesystem::path& dir, const std::string& corpus_hash = {}) const;
    static GuidelineIndex load(const std::filesystem::path& dir);

private:
    std::vector<GuidelineChunk> chunks_;
    std::unordered_map<std::string, std::size_t> by_id_;
    VectorIndex dense_;
    KeywordIndex keyword_;
};

inline constexpr int default_rrf_k = 60;

/// score(d) = sum over lists containing d of 1/(k_rrf + rank), rank from 1.
RankedList rrf_fuse(std::span<const RankedList> lists, int k_rrf, std::size_t top_n);

struct RerankResult {
    std::vector<std::pair<GuidelineChunk, double>> ranked;
    /// Set when the provider failed and the fused order was kept.
    bool degraded = false;
};

/// `fused_scores`, when given, supplies the relevance reported in degraded mode.
RerankResult rerank(std::string_view query, std::span<const GuidelineChunk> candidates, RerankProvider& reranker,
                    std::size_t top_m, std::span<const double> fused_scores = {});

struct GuidelinePipelineConfig {
    std::size_t dense_k = 20;
    std::size_t keyword_k = 20;
    std::size_t fused_top_n = 10;
    std::size_t rerank_top_m = 5;
    int k_rrf = default_rrf_k;
};

EvidenceItem retrieve_guidelines(std::string_view query, const GuidelineIndex& index, const StopWordList& stops,
                                 EmbeddingProvider& embedder, RerankProvider& reranker,
                                 const GuidelinePipelineConfig& config = {}, int round = 0);

} // namespace dermtrace
