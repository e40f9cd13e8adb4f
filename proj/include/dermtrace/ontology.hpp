// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Skin-disease taxonomy with fuzzy name resolution.
///
/// Taxonomy files are JSON (see docs/formats.md):
///   {"nodes": [{"id": "...", "name": "...", "aliases": [...], "children": [...]}]}
/// A child entry is either an inline node object or the id of a node declared
/// elsewhere in the file. The root is the only node without a parent.

#include "dermtrace/text.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dermtrace {

struct OntologyNode {
    std::string id;
    std::string name;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::vector<std::string> aliases;
};

struct FuzzyMatch {
    std::size_t node = 0;
    std::string name;
    double score = 0.0;

    friend bool operator==(const FuzzyMatch&, const FuzzyMatch&) = default;
};

/// Word-level padded trigrams of the casefolded string.
std::set<std::string> trigrams(std::string_view s);
/// Jaccard similarity of the two trigram sets; 1.0 for casefold-equal strings.
double trigram_similarity(std::string_view a, std::string_view b);

inline constexpr double default_fuzzy_threshold = 0.4;

class OntologyIndex {
public:
    static OntologyIndex from_json(const json& doc);
    static OntologyIndex load(const std::filesystem::path& path);

    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t root() const noexcept { return root_; }
    const OntologyNode& node(std::size_t i) const { return nodes_.at(i); }
    /// Longest root-to-leaf edge count.
    std::size_t depth() const noexcept { return depth_; }

    std::optional<std::size_t> find_name(std::string_view name) const;
    std::optional<std::size_t> find_alias(std::string_view alias) const;

    /// Casefolded, trimmed label mapped through names and aliases to the
    /// canonical casefolded node name; unknown labels come back casefolded.
    std::string canonical(std::string_view label) const;

    std::vector<FuzzyMatch> resolve_fuzzy(std::string_view d, double threshold = default_fuzzy_threshold) const;

    /// exact name, then alias, then best fuzzy match. Raises NotFoundError
    /// carrying the nearest names when nothing clears the threshold.
    FuzzyMatch resolve(std::string_view d, double threshold = default_fuzzy_threshold) const;

    std::vector<std::string> path_to(std::size_t node) const;
    std::vector<std::string> leaf_names() const;

private:
    std::vector<OntologyNode> nodes_;
    std::size_t root_ = 0;
    std::size_t depth_ = 0;
    std::unordered_map<std::string, std::size_t> by_name_;
    std::unordered_map<std::string, std::size_t> by_alias_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_trigram_;
};

enum class OntologyMode : std::uint8_t { hierarchy, children, siblings, search };

std::string_view to_string(OntologyMode m) noexcept;
OntologyMode ontology_mode_from_string(std::string_view s);

struct OntologyAnswer {
    OntologyMode mode = OntologyMode::hierarchy;
    /// Resolved node for hierarchy/children/siblings.
    FuzzyMatch resolved;
    /// hierarchy: root-to-node path; children/siblings: node names.
    std::vector<std::string> names;
    /// search: ranked fuzzy matches.
    std::vector<FuzzyMatch> matches;

    json to_json() const;
};

OntologyAnswer query_ontology(OntologyMode mode, std::string_view d, const OntologyIndex& index,
                              double threshold = default_fuzzy_threshold);

} // namespace dermtrace
