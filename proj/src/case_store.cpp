// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/case_store.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

namespace dermtrace {

CaseEntry CaseEntry::from_json(const json& j)
{
    CaseEntry e;
    e.id = j.at("id").get<std::string>();
    e.embedding = j.at("embedding").get<std::vector<float>>();
    e.disease_label = j.at("disease_label").get<std::string>();
    e.category_path = j.value("category_path", std::vector<std::string>{});
    e.description = j.value("description", "");
    return e;
}

json CaseEntry::metadata_json() const
{
    return json{{"id", id}, {"disease_label", disease_label}, {"category_path", category_path}, {"description", description}};
}

std::vector<CaseHit> CaseStore::search(std::span<const float> query, std::size_t k) const
{
    if (k == 0)
        throw ContractViolation("search_cases requires k >= 1");
    std::vector<CaseHit> hits;
    for (const auto& n : index_.search(query, k))
        hits.push_back(CaseHit{entries_[n.row], n.similarity});
    return hits;
}

namespace {

void check_category_path(const CaseEntry& e, const OntologyIndex& onto)
{
    if (e.category_path.empty())
        throw IngestionError("case '" + e.id + "': empty category_path");
    auto leaf = onto.find_name(e.category_path.back());
    if (!leaf)
        leaf = onto.find_alias(e.category_path.back());
    if (!leaf)
        throw IngestionError("case '" + e.id + "': '" + e.category_path.back() + "' is not in the taxonomy");
    auto path = onto.path_to(*leaf);
    std::vector<std::string> given;
    for (const auto& p : e.category_path)
        given.push_back(onto.canonical(p));
    std::vector<std::string> expected;
    for (const auto& p : path)
        expected.push_back(casefold(p));
    // The root may be omitted.
    bool ok = given == expected
           || (expected.size() > 1 && std::equal(given.begin(), given.end(), expected.begin() + 1, expected.end()));
    if (!ok)
        throw IngestionError("case '" + e.id + "': category_path is inconsistent with the taxonomy");
}

} // namespace

CaseIngest ingest_cases(std::span<const CaseEntry> records, std::size_t dimension, const OntologyIndex* ontology)
{
    CaseIngest out{CaseStore(dimension), 0};
    std::unordered_map<std::string, std::size_t> position;
    for (const auto& rec : records) {
        if (rec.id.empty())
            throw IngestionError("case record with empty id");
        if (rec.embedding.size() != dimension)
            throw IngestionError("case '" + rec.id + "': embedding dimension " + std::to_string(rec.embedding.size())
                                 + " does not match store dimension " + std::to_string(dimension));
        if (ontology)
            check_category_path(rec, *ontology);
        if (auto it = position.find(rec.id); it != position.end()) {
            ++out.duplicate_warnings;
            out.store.entries_[it->second] = rec;
            out.store.index_.replace(it->second, rec.embedding);
            continue;
        }
        position.emplace(rec.id, out.store.entries_.size());
        out.store.entries_.push_back(rec);
        out.store.index_.add(rec.id, rec.embedding);
    }
    return out;
}

std::vector<CaseEntry> read_case_corpus(const std::filesystem::path& path)
{
    std::vector<CaseEntry> out;
    for_each_jsonl(path, [&](std::size_t line, const json& rec) {
        try {
            out.push_back(CaseEntry::from_json(rec));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return out;
}

void CaseStore::save(const std::filesystem::path& dir, const std::string& corpus_hash) const
{
    std::filesystem::create_directories(dir);
    std::string meta;
    std::vector<std::span<const float>> rows;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        meta += entries_[i].metadata_json().dump() + "\n";
        rows.push_back(index_.row(i));
    }
    write_file(dir / "cases.jsonl", meta);
    write_vector_file(dir / "vectors.bin", dimension(), rows);
    json manifest{{"format", "dermtrace-cases"},
                  {"version", 1},
                  {"dimension", dimension()},
                  {"count", entries_.size()},
                  {"corpus_hash", corpus_hash}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

CaseStore CaseStore::load(const std::filesystem::path& dir)
{
    auto manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.value("format", "") != "dermtrace-cases")
        throw ParseError(dir.string() + ": not a case store", manifest.dump());
    std::size_t dim = 0;
    auto rows = read_vector_file(dir / "vectors.bin", dim);
    if (dim != manifest.at("dimension").get<std::size_t>())
        throw ParseError(dir.string() + ": manifest dimension disagrees with vectors.bin", manifest.dump());
    std::vector<CaseEntry> entries;
    for_each_jsonl(dir / "cases.jsonl", [&](std::size_t line, const json& rec) {
        if (entries.size() >= rows.size())
            throw ParseError("cases.jsonl:" + std::to_string(line) + ": more records than vectors", rec.dump());
        CaseEntry e;
        e.id = rec.at("id").get<std::string>();
        e.disease_label = rec.at("disease_label").get<std::string>();
        e.category_path = rec.value("category_path", std::vector<std::string>{});
        e.description = rec.value("description", "");
        e.embedding = std::move(rows[entries.size()]);
        entries.push_back(std::move(e));
    });
    if (entries.size() != rows.size())
        throw ParseError(dir.string() + ": record count disagrees with vectors.bin", {});
    return ingest_cases(entries, dim).store;
}

std::string majority_label(std::span<const std::pair<std::string, double>> labelled,
                           const std::function<std::string(std::string_view)>& normalize)
{
    struct Tally {
        std::size_t count = 0;
        double sum = 0.0;
    };
    std::map<std::string, Tally> tally;
    for (const auto& [label, sim] : labelled) {
        auto& t = tally[normalize(label)];
        ++t.count;
        t.sum += sim;
    }
    std::string best;
    Tally best_t;
    for (const auto& [label, t] : tally) {
        bool better = t.count > best_t.count
                   || (t.count == best_t.count && t.sum / static_cast<double>(t.count)
                                                      > best_t.sum / static_cast<double>(best_t.count));
        if (best.empty() || better) {
            best = label;
            best_t = t;
        }
    }
    return best;
}

EvidenceItem case_evidence(std::span<const CaseHit> results, Params params, int round, const OntologyIndex* ontology)
{
    if (results.empty())
        throw EvidenceError("case retrieval returned no neighbours");
    EvidenceItem item;
    item.tool = ToolId::case_rag;
    item.params = std::move(params);
    item.round = round;
    json neighbors = json::array();
    std::vector<std::pair<std::string, double>> labelled;
    double best = results.front().similarity;
    for (const auto& hit : results) {
        neighbors.push_back({{"id", hit.entry.id},
                             {"label", hit.entry.disease_label},
                             {"similarity", hit.similarity},
                             {"category_path", hit.entry.category_path},
                             {"description", hit.entry.description}});
        labelled.emplace_back(hit.entry.disease_label, hit.similarity);
        item.sources.push_back(hit.entry.id);
        best = std::max(best, hit.similarity);
    }
    auto normalize = [ontology](std::string_view s) { return ontology ? ontology->canonical(s) : casefold(trim(s)); };
    item.result = json{{"neighbors", neighbors}, {"majority_label", majority_label(labelled, normalize)}};
    item.confidence = std::clamp(best, 0.0, 1.0);
    return item;
}

} // namespace dermtrace
