// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Evaluation over a manifest of queries with gold answers, and the
/// leave-one-out ablation built on it.
///
/// Manifest: one JSON object per line, {image_ref, question, gold}. The gold
/// is a label for diagnosis, a list of concept names for concept annotation
/// and a reference caption for captioning.

#include "dermtrace/metrics.hpp"
#include "dermtrace/runtime.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dermtrace {

struct EvalRecord {
    std::string image_ref;
    std::string question;
    json gold;
};

/// Raises ParseError naming the line of a malformed or mis-shaped record.
std::vector<EvalRecord> read_manifest(const std::filesystem::path& path, TaskType task);
std::vector<EvalRecord> parse_manifest(std::string_view text, TaskType task, const std::string& origin = "manifest");

/// The label on the last "Diagnosis:" line, or empty.
std::string extract_diagnosis(std::string_view answer);
/// Concepts reported present by the latest successful annotation.
std::set<std::string> extract_concepts(const EvidenceChain& chain);

struct EvalOptions {
    std::set<ToolId> disabled;
    /// Disabling a tool the task requires is an error instead of an ablation.
    bool strict = false;
    /// Per-record traces go here when set.
    std::optional<std::filesystem::path> trace_dir;
};

struct RecordOutcome {
    std::string answer;
    int rounds_used = 0;
    RunStatus status = RunStatus::error;
    std::string error;
};

struct EvalResult {
    MetricReport report;
    std::vector<RecordOutcome> records;
};

std::string trace_file_name(std::size_t index, const std::string& image_ref);

EvalResult run_eval(const std::vector<EvalRecord>& records, TaskType task, const Runtime& runtime,
                    const EvalOptions& options = {});

struct AblationReport {
    std::optional<ToolId> disabled;
    MetricReport full;
    MetricReport ablated;
    double delta = 0.0;

    json to_json() const;
};

/// `tool` names the tool to leave out; "none" runs the control. Unknown
/// names raise ValidationError.
AblationReport ablate(const std::vector<EvalRecord>& records, TaskType task, const Runtime& runtime,
                      std::string_view tool, bool strict = false,
                      const std::optional<std::filesystem::path>& trace_dir = std::nullopt);

} // namespace dermtrace
