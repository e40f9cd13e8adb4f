// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/metrics.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>

namespace dermtrace {

double metric_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                       const LabelNormalizer& normalize)
{
    if (predictions.size() != gold.size())
        throw MetricError("accuracy: " + std::to_string(predictions.size()) + " predictions for "
                          + std::to_string(gold.size()) + " gold labels");
    if (gold.empty())
        throw MetricError("accuracy: no samples");
    auto norm = [&](const std::string& s) { return normalize ? normalize(s) : casefold(trim(s)); };
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        hits += norm(predictions[i]) == norm(gold[i]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

AbsentLabelPolicy absent_policy_from_string(std::string_view s)
{
    if (s == "exclude")
        return AbsentLabelPolicy::exclude;
    if (s == "zero")
        return AbsentLabelPolicy::count_as_zero;
    if (s == "one")
        return AbsentLabelPolicy::count_as_one;
    throw ConfigError("unknown absent-label policy '" + std::string(s) + "' (expected exclude, zero or one)");
}

F1Breakdown metric_f1_macro(const std::vector<std::set<std::string>>& predictions,
                            const std::vector<std::set<std::string>>& gold, const std::vector<std::string>& vocabulary,
                            AbsentLabelPolicy policy)
{
    if (predictions.size() != gold.size())
        throw MetricError("f1: " + std::to_string(predictions.size()) + " prediction sets for "
                          + std::to_string(gold.size()) + " gold sets");
    std::set<std::string> vocab(vocabulary.begin(), vocabulary.end());
    struct Counts {
        std::size_t tp = 0, fp = 0, fn = 0;
    };
    std::map<std::string, Counts> counts;
    for (const auto& label : vocab)
        counts[label];
    auto check = [&](const std::set<std::string>& s) {
        for (const auto& label : s) {
            if (!vocab.count(label))
                throw MetricError("f1: label '" + label + "' is not in the vocabulary");
        }
    };
    for (std::size_t i = 0; i < gold.size(); ++i) {
        check(predictions[i]);
        check(gold[i]);
        for (const auto& label : predictions[i]) {
            if (gold[i].count(label))
                ++counts[label].tp;
            else
                ++counts[label].fp;
        }
        for (const auto& label : gold[i]) {
            if (!predictions[i].count(label))
                ++counts[label].fn;
        }
    }
    F1Breakdown out;
    double sum = 0.0;
    for (const auto& [label, c] : counts) {
        double f1;
        if (c.tp + c.fp + c.fn == 0) {
            if (policy == AbsentLabelPolicy::exclude)
                continue;
            f1 = policy == AbsentLabelPolicy::count_as_one ? 1.0 : 0.0;
        } else {
            f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
        }
        out.per_label[label] = f1;
        sum += f1;
    }
    out.macro = out.per_label.empty() ? 1.0 : sum / static_cast<double>(out.per_label.size());
    return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double metric_rouge_l(std::string_view candidate, std::string_view reference)
{
    auto c = tokenize(candidate);
    auto r = tokenize(reference);
    if (c.empty())
        throw MetricError("rouge-l: candidate has no tokens");
    if (r.empty())
        throw MetricError("rouge-l: reference has no tokens");
    auto lcs = static_cast<double>(lcs_length(c, r));
    double p = lcs / static_cast<double>(c.size());
    double rec = lcs / static_cast<double>(r.size());
    if (p + rec == 0.0)
        return 0.0;
    return 2.0 * p * rec / (p + rec);
}

json MetricReport::to_json() const
{
    json j{{"task", to_string(task_type)}, {"metric", metric}, {"value", value}, {"n", n}, {"failures", failures}};
    if (per_class)
        j["per_class"] = *per_class;
    return j;
}

} // namespace dermtrace
