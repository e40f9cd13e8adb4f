// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/ontology.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <functional>

namespace dermtrace {

std::set<std::string> trigrams(std::string_view s)
{
    std::set<std::string> out;
    for (const auto& word : tokenize(s)) {
        std::string padded = "  " + word + " ";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
            out.insert(padded.substr(i, 3));
    }
    return out;
}

double trigram_similarity(std::string_view a, std::string_view b)
{
    auto ta = trigrams(a);
    auto tb = trigrams(b);
    if (ta.empty() && tb.empty())
        return casefold(trim(a)) == casefold(trim(b)) ? 1.0 : 0.0;
    std::size_t common = 0;
    for (const auto& t : ta)
        common += tb.count(t);
    auto uni = ta.size() + tb.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

namespace {

struct RawNode {
    std::string id;
    std::string name;
    std::vector<std::string> aliases;
    std::vector<std::string> child_ids;
};

void collect(const json& j, std::vector<RawNode>& out)
{
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
        throw StructuralError("taxonomy node must be an object with a string 'name'");
    RawNode raw;
    raw.name = trim(j["name"].get<std::string>());
    if (raw.name.empty())
        throw StructuralError("taxonomy node with empty name");
    raw.id = j.contains("id") ? j["id"].get<std::string>() : raw.name;
    if (j.contains("aliases"))
        raw.aliases = j["aliases"].get<std::vector<std::string>>();
    auto self = out.size();
    out.push_back(raw);
    if (j.contains("children")) {
        for (const auto& c : j["children"]) {
            if (c.is_string()) {
                out[self].child_ids.push_back(c.get<std::string>());
            } else {
                auto child_pos = out.size();
                collect(c, out);
                out[self].child_ids.push_back(out[child_pos].id);
            }
        }
    }
}

} // namespace

OntologyIndex OntologyIndex::from_json(const json& doc)
{
    std::vector<RawNode> raw;
    try {
        if (doc.is_object() && doc.contains("nodes")) {
            for (const auto& n : doc["nodes"])
                collect(n, raw);
        } else {
            collect(doc, raw);
        }
    } catch (const json::exception& e) {
        throw StructuralError(std::string("malformed taxonomy: ") + e.what());
    }
    if (raw.empty())
        throw StructuralError("taxonomy has no nodes");

    OntologyIndex idx;
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!by_id.emplace(raw[i].id, i).second)
            throw StructuralError("duplicate node id '" + raw[i].id + "'");
        auto key = casefold(raw[i].name);
        if (!idx.by_name_.emplace(key, i).second)
            throw StructuralError("duplicate canonical name '" + raw[i].name + "' (conflicts with '"
                                  + raw[idx.by_name_[key]].name + "')");
        idx.nodes_.push_back(OntologyNode{raw[i].id, raw[i].name, std::nullopt, {}, raw[i].aliases});
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        for (const auto& cid : raw[i].child_ids) {
            auto it = by_id.find(cid);
            if (it == by_id.end())
                throw StructuralError("node '" + raw[i].name + "' references unknown child '" + cid + "'");
            auto& child = idx.nodes_[it->second];
            if (child.parent)
                throw StructuralError("node '" + child.name + "' has more than one parent");
            if (it->second == i)
                throw StructuralError("cycle: node '" + child.name + "' is its own child");
            child.parent = i;
            idx.nodes_[i].children.push_back(it->second);
        }
    }
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < idx.nodes_.size(); ++i) {
        if (!idx.nodes_[i].parent)
            roots.push_back(i);
    }
    if (roots.empty())
        throw StructuralError("cycle: every node has a parent (starting at '" + idx.nodes_.front().name + "')");
    if (roots.size() > 1)
        throw StructuralError("multiple roots: '" + idx.nodes_[roots[0]].name + "' and '"
                              + idx.nodes_[roots[1]].name + "'");
    idx.root_ = roots.front();

    // Every node has at most one parent, so anything unreachable from the root
    // sits on a parent cycle.
    std::vector<bool> seen(idx.nodes_.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{idx.root_, 0}};
    while (!stack.empty()) {
        auto [n, d] = stack.back();
        stack.pop_back();
        seen[n] = true;
        idx.depth_ = std::max(idx.depth_, d);
        for (auto c : idx.nodes_[n].children)
            stack.emplace_back(c, d + 1);
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i])
            throw StructuralError("cycle: node '" + idx.nodes_[i].name + "' is not reachable from the root");
    }

    for (std::size_t i = 0; i < idx.nodes_.size(); ++i) {
        for (const auto& alias : idx.nodes_[i].aliases) {
            auto key = casefold(trim(alias));
            if (key.empty())
                throw StructuralError("node '" + idx.nodes_[i].name + "' has an empty alias");
            if (auto owner = idx.by_name_.find(key); owner != idx.by_name_.end()) {
                if (owner->second == i)
                    continue;
                throw StructuralError("alias '" + alias + "' of '" + idx.nodes_[i].name
                                      + "' collides with node name '" + idx.nodes_[owner->second].name + "'");
            }
            auto [it, fresh] = idx.by_alias_.emplace(key, i);
            if (!fresh && it->second != i)
                throw StructuralError("alias '" + alias + "' maps to both '" + idx.nodes_[it->second].name
                                      + "' and '" + idx.nodes_[i].name + "'");
        }
        std::set<std::string> grams = trigrams(idx.nodes_[i].name);
        for (const auto& alias : idx.nodes_[i].aliases) {
            auto g = trigrams(alias);
            grams.insert(g.begin(), g.end());
        }
        for (const auto& g : grams)
            idx.by_trigram_[g].push_back(i);
    }
    return idx;
}

OntologyIndex OntologyIndex::load(const std::filesystem::path& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw StructuralError(path.string() + ": " + e.what());
    }
    return from_json(doc);
}

std::optional<std::size_t> OntologyIndex::find_name(std::string_view name) const
{
    auto it = by_name_.find(casefold(trim(name)));
    if (it == by_name_.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::size_t> OntologyIndex::find_alias(std::string_view alias) const
{
    auto it = by_alias_.find(casefold(trim(alias)));
    if (it == by_alias_.end())
        return std::nullopt;
    return it->second;
}

std::string OntologyIndex::canonical(std::string_view label) const
{
    if (auto n = find_name(label))
        return casefold(nodes_[*n].name);
    if (auto n = find_alias(label))
        return casefold(nodes_[*n].name);
    return casefold(trim(label));
}

std::vector<FuzzyMatch> OntologyIndex::resolve_fuzzy(std::string_view d, double threshold) const
{
    std::set<std::size_t> candidates;
    if (threshold <= 0.0) {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            candidates.insert(i);
    } else {
        for (const auto& g : trigrams(d)) {
            if (auto it = by_trigram_.find(g); it != by_trigram_.end())
                candidates.insert(it->second.begin(), it->second.end());
        }
        // Strings without trigrams (punctuation only) can still be casefold-equal.
        if (auto n = find_name(d))
            candidates.insert(*n);
    }
    std::vector<FuzzyMatch> out;
    for (auto i : candidates) {
        double best = trigram_similarity(d, nodes_[i].name);
        for (const auto& alias : nodes_[i].aliases)
            best = std::max(best, trigram_similarity(d, alias));
        if (best >= threshold)
            out.push_back(FuzzyMatch{i, nodes_[i].name, best});
    }
    std::sort(out.begin(), out.end(), [](const FuzzyMatch& a, const FuzzyMatch& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.name < b.name;
    });
    return out;
}

FuzzyMatch OntologyIndex::resolve(std::string_view d, double threshold) const
{
    if (auto n = find_name(d))
        return FuzzyMatch{*n, nodes_[*n].name, 1.0};
    if (auto n = find_alias(d))
        return FuzzyMatch{*n, nodes_[*n].name, 1.0};
    auto matches = resolve_fuzzy(d, threshold);
    if (!matches.empty())
        return matches.front();
    std::vector<std::string> nearest;
    for (const auto& m : resolve_fuzzy(d, 1e-9)) {
        if (nearest.size() == 3)
            break;
        nearest.push_back(m.name);
    }
    throw NotFoundError("no taxonomy node matches '" + std::string(d) + "'", std::move(nearest));
}

std::vector<std::string> OntologyIndex::path_to(std::size_t node) const
{
    std::vector<std::string> path;
    std::optional<std::size_t> cur = node;
    while (cur) {
        path.push_back(nodes_.at(*cur).name);
        cur = nodes_[*cur].parent;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<std::string> OntologyIndex::leaf_names() const
{
    std::vector<std::string> out;
    for (const auto& n : nodes_) {
        if (n.children.empty())
            out.push_back(n.name);
    }
    return out;
}

std::string_view to_string(OntologyMode m) noexcept
{
    switch (m) {
    case OntologyMode::hierarchy: return "hierarchy";
    case OntologyMode::children: return "children";
    case OntologyMode::siblings: return "siblings";
    case OntologyMode::search: return "search";
    }
    return "?";
}

OntologyMode ontology_mode_from_string(std::string_view s)
{
    for (auto m : {OntologyMode::hierarchy, OntologyMode::children, OntologyMode::siblings, OntologyMode::search}) {
        if (to_string(m) == s)
            return m;
    }
    throw ValidationError("unknown ontology mode '" + std::string(s) + "'");
}

json OntologyAnswer::to_json() const
{
    json j{{"mode", to_string(mode)}};
    if (mode == OntologyMode::search) {
        json arr = json::array();
        for (const auto& m : matches)
            arr.push_back({{"name", m.name}, {"score", m.score}});
        j["matches"] = arr;
    } else {
        j["resolved"] = resolved.name;
        j["score"] = resolved.score;
        j[mode == OntologyMode::hierarchy ? "path" : "nodes"] = names;
    }
    return j;
}

OntologyAnswer query_ontology(OntologyMode mode, std::string_view d, const OntologyIndex& index, double threshold)
{
    OntologyAnswer ans;
    ans.mode = mode;
    if (mode == OntologyMode::search) {
        ans.matches = index.resolve_fuzzy(d, threshold);
        if (ans.matches.empty()) {
            // resolve() produces the not-found error with nearest candidates.
            index.resolve(d, threshold);
        }
        return ans;
    }
    ans.resolved = index.resolve(d, threshold);
    const auto& node = index.node(ans.resolved.node);
    switch (mode) {
    case OntologyMode::hierarchy: ans.names = index.path_to(ans.resolved.node); break;
    case OntologyMode::children:
        for (auto c : node.children)
            ans.names.push_back(index.node(c).name);
        break;
    case OntologyMode::siblings:
        if (node.parent) {
            for (auto c : index.node(*node.parent).children) {
                if (c != ans.resolved.node)
                    ans.names.push_back(index.node(c).name);
            }
        }
        break;
    case OntologyMode::search: break;
    }
    return ans;
}

} // namespace dermtrace
