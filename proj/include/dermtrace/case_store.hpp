// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dermtrace/evidence.hpp"
#include "dermtrace/ontology.hpp"
#include "dermtrace/vector_index.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dermtrace {

inline constexpr std::size_t default_case_dimension = 512;
inline constexpr int default_case_k = 4;

struct CaseEntry {
    std::string id;
    std::vector<float> embedding;
    std::string disease_label;
    std::vector<std::string> category_path;
    std::string description;

    static CaseEntry from_json(const json& j);
    /// Metadata only; embeddings live in the vector sidecar when persisted.
    json metadata_json() const;
};

struct CaseIngest;

struct CaseHit {
    CaseEntry entry;
    double similarity = 0.0;
};

/// Immutable after ingestion; concurrent searches are safe.
class CaseStore {
public:
    explicit CaseStore(std::size_t dimension = default_case_dimension) : index_(dimension) {}

    std::size_t dimension() const noexcept { return index_.dimension(); }
    std::size_t size() const noexcept { return entries_.size(); }
    const CaseEntry& entry(std::size_t i) const { return entries_.at(i); }

    std::vector<CaseHit> search(std::span<const float> query, std::size_t k) const;

    /// Directory layout: manifest.json, cases.jsonl, vectors.bin.
    void save(const std::filesystem::path& dir, const std::string& corpus_hash = {}) const;
    static CaseStore load(const std::filesystem::path& dir);

private:
    friend CaseIngest ingest_cases(std::span<const CaseEntry>, std::size_t, const OntologyIndex*);

    VectorIndex index_;
    std::vector<CaseEntry> entries_;
};

struct CaseIngest {
    CaseStore store;
    /// Number of records that overwrote an earlier record with the same id.
    std::size_t duplicate_warnings = 0;
};

/// Builds a store. Duplicate ids are last-write-wins. Passing an ontology
/// checks each category_path against the taxonomy.
CaseIngest ingest_cases(std::span<const CaseEntry> records, std::size_t dimension,
                        const OntologyIndex* ontology = nullptr);

/// Reads a JSONL corpus: {id, embedding, disease_label, category_path, description}.
std::vector<CaseEntry> read_case_corpus(const std::filesystem::path& path);

/// Majority label among labelled neighbours; ties go to the higher mean
/// similarity, then to the lexicographically smaller label. Labels are
/// normalised with `normalize` before counting.
std::string majority_label(std::span<const std::pair<std::string, double>> labelled,
                           const std::function<std::string(std::string_view)>& normalize);

/// Evidence for a case retrieval: confidence is the best similarity, sources
/// are the neighbour ids.
EvidenceItem case_evidence(std::span<const CaseHit> results, Params params = json::object(), int round = 0,
                           const OntologyIndex* ontology = nullptr);

} // namespace dermtrace
