// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Builds a ready-to-run system from one JSON configuration file. Relative
/// paths in the file are resolved against the file's directory. Every key is
/// optional; config/default.json lists them all with their defaults.

#include "dermtrace/case_store.hpp"
#include "dermtrace/critic.hpp"
#include "dermtrace/guideline.hpp"
#include "dermtrace/metrics.hpp"
#include "dermtrace/ontology.hpp"
#include "dermtrace/orchestrator.hpp"
#include "dermtrace/planner.hpp"
#include "dermtrace/tools.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dermtrace {

/// $DERMTRACE_CONFIG when set, otherwise the default.json shipped with the
/// sources.
std::filesystem::path default_config_path();

struct EvalSettings {
    AbsentLabelPolicy f1_policy = AbsentLabelPolicy::exclude;
    /// Drop failed runs from the metric denominator instead of scoring them
    /// as wrong.
    bool exclude_failures = false;
    std::size_t workers = 1;
};

struct Runtime {
    json config;
    std::shared_ptr<const OntologyIndex> ontology;
    std::shared_ptr<const CaseStore> cases;
    std::shared_ptr<const GuidelineIndex> guidelines;
    std::shared_ptr<const StopWordList> stopwords;
    std::vector<std::string> concept_vocabulary;
    ToolRegistry registry;
    std::shared_ptr<Planner> planner;
    OrchestratorConfig orchestrator;
    CallDefaults defaults;
    double fuzzy_threshold = default_fuzzy_threshold;
    EvalSettings eval;

    RunHooks hooks(std::ostream* trace = nullptr) const;
    Response ask(const Query& query, const OrchestratorConfig& config, std::ostream* trace = nullptr) const;
};

Runtime build_runtime(const json& config, const std::filesystem::path& base_dir);
Runtime load_runtime(const std::filesystem::path& config_path);

/// Reads a JSON file, raising ConfigError with the path on failure.
json read_json_file(const std::filesystem::path& path);

std::vector<std::string> read_concept_vocabulary(const std::filesystem::path& path);

} // namespace dermtrace
