// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dermtrace/evidence.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dermtrace {

using LabelNormalizer = std::function<std::string(std::string_view)>;

/// Fraction of positions whose normalised labels are equal. Raises
/// MetricError for empty or unequal-length inputs.
double metric_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                       const LabelNormalizer& normalize = {});

/// What to do with a vocabulary label that occurs in neither predictions nor
/// gold anywhere in the corpus.
enum class AbsentLabelPolicy : std::uint8_t { exclude, count_as_zero, count_as_one };

AbsentLabelPolicy absent_policy_from_string(std::string_view s);

struct F1Breakdown {
    double macro = 0.0;
    /// F1 per included label.
    std::map<std::string, double> per_label;
};

/// Macro-averaged F1 over the vocabulary. A label's F1 is 2tp/(2tp+fp+fn).
/// When no label is included the score is 1.0. Raises MetricError for
/// unequal lengths or labels outside the vocabulary.
F1Breakdown metric_f1_macro(const std::vector<std::set<std::string>>& predictions,
                            const std::vector<std::set<std::string>>& gold, const std::vector<std::string>& vocabulary,
                            AbsentLabelPolicy policy = AbsentLabelPolicy::exclude);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Sentence-level ROUGE-L F1 over tokenised text. Raises MetricError when
/// either side has no tokens.
double metric_rouge_l(std::string_view candidate, std::string_view reference);

struct MetricReport {
    TaskType task_type = TaskType::diagnosis;
    std::string metric;
    double value = 0.0;
    /// Present only for F1-macro.
    std::optional<std::map<std::string, double>> per_class;
    std::size_t n = 0;
    std::size_t failures = 0;

    json to_json() const;
};

} // namespace dermtrace
