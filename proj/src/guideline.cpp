// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/guideline.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <unordered_set>

namespace dermtrace {

GuidelineChunk GuidelineChunk::from_json(const json& j)
{
    GuidelineChunk c;
    c.id = j.at("id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.disease_names = j.value("disease_names", std::vector<std::string>{});
    c.section = j.value("section", "");
    c.source_url = j.value("source_url", "");
    if (j.contains("embedding") && !j["embedding"].is_null())
        c.embedding = j["embedding"].get<std::vector<float>>();
    if (trim(c.text).empty())
        throw IngestionError("guideline chunk '" + c.id + "': empty text");
    if (trim(c.source_url).empty())
        throw IngestionError("guideline chunk '" + c.id + "': empty source_url");
    return c;
}

json GuidelineChunk::metadata_json() const
{
    return json{{"id", id},
                {"text", text},
                {"disease_names", disease_names},
                {"section", section},
                {"source_url", source_url}};
}

std::vector<GuidelineChunk> read_guideline_corpus(const std::filesystem::path& path)
{
    std::vector<GuidelineChunk> out;
    for_each_jsonl(path, [&](std::size_t line, const json& rec) {
        try {
            out.push_back(GuidelineChunk::from_json(rec));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return out;
}

StopWordList::StopWordList(std::set<std::string> terms) : terms_(std::move(terms))
{
    for (const auto& t : terms_) {
        auto toks = tokenize(t);
        if (t.empty() || toks.size() != 1 || toks.front() != t)
            throw ValidationError("stop word '" + t + "' must be a single lowercase token");
    }
}

StopWordList StopWordList::load(const std::filesystem::path& path)
{
    std::set<std::string> terms;
    auto text = read_file(path);
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        auto term = trim(line);
        if (!term.empty())
            terms.insert(term);
        if (nl == std::string::npos)
            break;
        pos = nl + 1;
    }
    return StopWordList(std::move(terms));
}

std::string filter_query(std::string_view query, const StopWordList& stops)
{
    std::vector<std::string> kept;
    for (auto& tok : tokenize(query)) {
        if (!stops.contains(tok))
            kept.push_back(std::move(tok));
    }
    if (kept.empty())
        return casefold(query);
    return join(kept, " ");
}

std::vector<float> HashEmbedder::embed(std::string_view text)
{
    std::vector<float> v(dim_, 0.0f);
    for (const auto& tok : tokenize(text))
        v[fnv1a64(tok) % dim_] += 1.0f;
    double norm = 0.0;
    for (float x : v)
        norm += static_cast<double>(x) * x;
    if (norm > 0.0) {
        auto inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (float& x : v)
            x *= inv;
    }
    return v;
}

std::vector<float> RemoteEmbedder::embed(std::string_view text)
{
    auto content = remote_chat({{"user", std::string(text)}}, std::nullopt, endpoint_, transport_);
    std::vector<float> v;
    try {
        v = json::parse(content).get<std::vector<float>>();
    } catch (const json::exception&) {
        throw TransportError(TransportFailure::malformed, "embedding response is not an array of numbers");
    }
    if (v.size() != dim_)
        throw TransportError(TransportFailure::malformed, "embedding response has dimension "
                                                              + std::to_string(v.size()) + ", expected "
                                                              + std::to_string(dim_));
    return v;
}

double JaccardReranker::score(std::string_view query, std::string_view document)
{
    auto q = tokenize(query);
    auto d = tokenize(document);
    std::set<std::string> qs(q.begin(), q.end());
    std::set<std::string> ds(d.begin(), d.end());
    if (qs.empty() && ds.empty())
        return 0.0;
    std::size_t common = 0;
    for (const auto& t : qs)
        common += ds.count(t);
    return static_cast<double>(common) / static_cast<double>(qs.size() + ds.size() - common);
}

double RemoteReranker::score(std::string_view query, std::string_view document)
{
    std::vector<ChatMessage> msgs{
        {"system", "Decide whether the document answers the query. Reply with the probability that the answer is "
                   "\"yes\", or with \"yes\" or \"no\"."},
        {"user", "<Query>: " + std::string(query) + "\n<Document>: " + std::string(document)}};
    auto content = trim(remote_chat(msgs, std::nullopt, endpoint_, transport_));
    auto lowered = casefold(content);
    if (lowered == "yes")
        return 1.0;
    if (lowered == "no")
        return 0.0;
    try {
        auto j = json::parse(content);
        if (j.is_number()) {
            auto p = j.get<double>();
            if (p >= 0.0 && p <= 1.0)
                return p;
        }
    } catch (const json::exception&) {
    }
    throw TransportError(TransportFailure::malformed, "reranker response is not a relevance score");
}

double bm25_term_score(double tf, double df, double n_docs, double doc_len, double avg_doc_len,
                       const Bm25Params& params)
{
    if (tf <= 0.0)
        return 0.0;
    double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    double norm = params.k1 * (1.0 - params.b + params.b * (avg_doc_len > 0.0 ? doc_len / avg_doc_len : 1.0));
    return idf * tf * (params.k1 + 1.0) / (tf + norm);
}

std::vector<std::string> keyword_tokens(const GuidelineChunk& chunk)
{
    auto out = tokenize(chunk.text);
    for (const auto& d : chunk.disease_names) {
        auto t = tokenize(d);
        out.insert(out.end(), t.begin(), t.end());
    }
    auto s = tokenize(chunk.section);
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

KeywordIndex::KeywordIndex(std::span<const GuidelineChunk> chunks, Bm25Params params) : params_(params)
{
    std::uint64_t total = 0;
    for (std::uint32_t doc = 0; doc < chunks.size(); ++doc) {
        ids_.push_back(chunks[doc].id);
        auto toks = keyword_tokens(chunks[doc]);
        doc_len_.push_back(static_cast<std::uint32_t>(toks.size()));
        total += toks.size();
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : toks)
            ++tf[t];
        for (const auto& [term, n] : tf)
            postings_[term].push_back(Posting{doc, n});
    }
    avg_len_ = doc_len_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(doc_len_.size());
}

KeywordIndex KeywordIndex::from_parts(std::vector<std::string> ids, std::vector<std::uint32_t> doc_len,
                                      std::map<std::string, std::vector<Posting>> postings, Bm25Params params)
{
    KeywordIndex k;
    k.params_ = params;
    k.ids_ = std::move(ids);
    k.doc_len_ = std::move(doc_len);
    k.postings_ = std::move(postings);
    std::uint64_t total = 0;
    for (auto l : k.doc_len_)
        total += l;
    k.avg_len_ = k.doc_len_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(k.doc_len_.size());
    return k;
}

RankedList KeywordIndex::search(std::string_view query, std::size_t k) const
{
    RankedList out{ListOrigin::keyword, {}};
    auto toks = tokenize(query);
    std::set<std::string> terms(toks.begin(), toks.end());
    std::map<std::uint32_t, double> acc;
    auto n = static_cast<double>(doc_len_.size());
    for (const auto& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end())
            continue;
        auto df = static_cast<double>(it->second.size());
        for (const auto& p : it->second)
            acc[p.doc] += bm25_term_score(p.tf, df, n, doc_len_[p.doc], avg_len_, params_);
    }
    for (const auto& [doc, score] : acc)
        out.entries.push_back(RankedEntry{ids_[doc], score});
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    if (out.entries.size() > k)
        out.entries.resize(k);
    return out;
}

json KeywordIndex::postings_json() const
{
    json lines = json::array();
    for (const auto& [term, list] : postings_) {
        json p = json::array();
        for (const auto& e : list)
            p.push_back({e.doc, e.tf});
        lines.push_back({{"term", term}, {"postings", p}});
    }
    return lines;
}

GuidelineIndex GuidelineIndex::build(std::vector<GuidelineChunk> chunks, EmbeddingProvider& embedder,
                                     Bm25Params params)
{
    GuidelineIndex idx;
    idx.dense_ = VectorIndex(embedder.dimension());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        auto& c = chunks[i];
        if (!idx.by_id_.emplace(c.id, i).second)
            throw IngestionError("duplicate guideline chunk id '" + c.id + "'");
        if (c.embedding.empty())
            c.embedding = embedder.embed(c.text);
        if (c.embedding.size() != embedder.dimension())
            throw IngestionError("guideline chunk '" + c.id + "': embedding dimension "
                                 + std::to_string(c.embedding.size()) + " does not match "
                                 + std::to_string(embedder.dimension()));
        idx.dense_.add(c.id, c.embedding);
    }
    idx.keyword_ = KeywordIndex(chunks, params);
    idx.chunks_ = std::move(chunks);
    return idx;
}

const GuidelineChunk* GuidelineIndex::find(std::string_view id) const
{
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

RankedList GuidelineIndex::dense_search_vector(std::span<const float> query, std::size_t k) const
{
    RankedList out{ListOrigin::dense, {}};
    if (size() == 0)
        return out;
    for (const auto& n : dense_.search(query, k))
        out.entries.push_back(RankedEntry{dense_.id(n.row), n.similarity});
    return out;
}

RankedList GuidelineIndex::dense_search(std::string_view query, EmbeddingProvider& embedder, std::size_t k) const
{
    if (k == 0)
        throw ContractViolation("dense_search requires k >= 1");
    return dense_search_vector(embedder.embed(query), k);
}

RankedList GuidelineIndex::keyword_search(std::string_view query, std::size_t k) const
{
    return keyword_.search(query, k);
}

void GuidelineIndex::save(const std::filesystem::path& dir, const std::string& corpus_hash) const
{
    std::filesystem::create_directories(dir);
    std::string meta;
    std::vector<std::span<const float>> rows;
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        auto m = chunks_[i].metadata_json();
        m["doc_len"] = keyword_.doc_lengths()[i];
        meta += m.dump() + "\n";
        rows.push_back(dense_.row(i));
    }
    write_file(dir / "chunks.jsonl", meta);
    write_vector_file(dir / "vectors.bin", dimension(), rows);
    std::string postings;
    for (const auto& line : keyword_.postings_json())
        postings += line.dump() + "\n";
    write_file(dir / "postings.jsonl", postings);
    json manifest{{"format", "dermtrace-guidelines"},
                  {"version", 1},
                  {"dimension", dimension()},
                  {"chunk_count", chunks_.size()},
                  {"corpus_hash", corpus_hash},
                  {"bm25", {{"k1", keyword_.params().k1}, {"b", keyword_.params().b}}}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

GuidelineIndex GuidelineIndex::load(const std::filesystem::path& dir)
{
    auto manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("format", "") != "dermtrace-guidelines")
        throw ParseError(dir.string() + ": not a guideline index", manifest.dump());
    std::size_t dim = 0;
    auto rows = read_vector_file(dir / "vectors.bin", dim);
    if (dim != manifest.at("dimension").get<std::size_t>())
        throw ParseError(dir.string() + ": manifest dimension disagrees with vectors.bin", manifest.dump());

    GuidelineIndex idx;
    idx.dense_ = VectorIndex(dim);
    std::vector<std::string> ids;
    std::vector<std::uint32_t> doc_len;
    for_each_jsonl(dir / "chunks.jsonl", [&](std::size_t line, const json& rec) {
        auto c = GuidelineChunk::from_json(rec);
        if (idx.chunks_.size() >= rows.size())
            throw ParseError("chunks.jsonl:" + std::to_string(line) + ": more chunks than vectors", rec.dump());
        c.embedding = std::move(rows[idx.chunks_.size()]);
        idx.by_id_.emplace(c.id, idx.chunks_.size());
        idx.dense_.add(c.id, c.embedding);
        ids.push_back(c.id);
        doc_len.push_back(rec.at("doc_len").get<std::uint32_t>());
        idx.chunks_.push_back(std::move(c));
    });
    if (idx.chunks_.size() != rows.size())
        throw ParseError(dir.string() + ": chunk count disagrees with vectors.bin", {});
    std::map<std::string, std::vector<Posting>> postings;
    for_each_jsonl(dir / "postings.jsonl", [&](std::size_t, const json& rec) {
        auto& list = postings[rec.at("term").get<std::string>()];
        for (const auto& p : rec.at("postings"))
            list.push_back(Posting{p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
    });
    Bm25Params params{manifest["bm25"].value("k1", 1.2), manifest["bm25"].value("b", 0.75)};
    idx.keyword_ = KeywordIndex::from_parts(std::move(ids), std::move(doc_len), std::move(postings), params);
    return idx;
}

RankedList rrf_fuse(std::span<const RankedList> lists, int k_rrf, std::size_t top_n)
{
    if (lists.empty())
        throw ContractViolation("rrf_fuse requires at least one ranked list");
    std::unordered_map<std::string, double> fused;
    for (const auto& list : lists) {
        for (std::size_t r = 0; r < list.entries.size(); ++r)
            fused[list.entries[r].id] += 1.0 / (static_cast<double>(k_rrf) + static_cast<double>(r + 1));
    }
    RankedList out{ListOrigin::fused, {}};
    out.entries.reserve(fused.size());
    for (auto& [id, score] : fused)
        out.entries.push_back(RankedEntry{id, score});
    std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    if (out.entries.size() > top_n)
        out.entries.resize(top_n);
    return out;
}

RerankResult rerank(std::string_view query, std::span<const GuidelineChunk> candidates, RerankProvider& reranker,
                    std::size_t top_m, std::span<const double> fused_scores)
{
    if (candidates.empty())
        throw ContractViolation("rerank requires at least one candidate");
    RerankResult out;
    try {
        std::vector<std::pair<std::size_t, double>> scored;
        for (std::size_t i = 0; i < candidates.size(); ++i)
            scored.emplace_back(i, reranker.score(query, candidates[i].text));
        std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.second != b.second)
                return a.second > b.second;
            return candidates[a.first].id < candidates[b.first].id;
        });
        for (const auto& [i, s] : scored)
            out.ranked.emplace_back(candidates[i], s);
    } catch (const Error&) {
        out.ranked.clear();
        out.degraded = true;
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out.ranked.emplace_back(candidates[i], i < fused_scores.size() ? fused_scores[i] : 0.0);
    }
    if (out.ranked.size() > top_m)
        out.ranked.resize(top_m);
    return out;
}

EvidenceItem retrieve_guidelines(std::string_view query, const GuidelineIndex& index, const StopWordList& stops,
                                 EmbeddingProvider& embedder, RerankProvider& reranker,
                                 const GuidelinePipelineConfig& config, int round)
{
    auto filtered = filter_query(query, stops);

    auto dense_future = std::async(std::launch::async, [&] {
        return index.dense_search(filtered, embedder, config.dense_k);
    });
    auto keyword = index.keyword_search(filtered, config.keyword_k);
    auto dense = dense_future.get();

    std::vector<RankedList> lists{dense, keyword};
    auto fused = rrf_fuse(lists, config.k_rrf, config.fused_top_n);
    if (fused.entries.empty())
        throw EvidenceError("no guideline passage matched '" + filtered + "'");

    std::vector<GuidelineChunk> candidates;
    std::vector<double> fused_scores;
    for (const auto& e : fused.entries) {
        candidates.push_back(*index.find(e.id));
        fused_scores.push_back(e.score);
    }
    auto reranked = rerank(filtered, candidates, reranker, config.rerank_top_m, fused_scores);

    EvidenceItem item;
    item.tool = ToolId::guideline_rag;
    item.params = json{{"query", std::string(query)}};
    item.round = round;
    json passages = json::array();
    std::unordered_set<std::string> seen;
    for (const auto& [chunk, relevance] : reranked.ranked) {
        passages.push_back({{"id", chunk.id},
                            {"disease_names", chunk.disease_names},
                            {"section", chunk.section},
                            {"source_url", chunk.source_url},
                            {"text", chunk.text},
                            {"relevance", relevance}});
        if (seen.insert(chunk.source_url).second)
            item.sources.push_back(chunk.source_url);
    }
    item.result = json{{"filtered_query", filtered}, {"degraded", reranked.degraded}, {"passages", passages}};
    double top_dense = dense.entries.empty() ? 0.0 : dense.entries.front().score;
    item.confidence = std::clamp(top_dense, 0.0, 1.0);
    return item;
}

} // namespace dermtrace
