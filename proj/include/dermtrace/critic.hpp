// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Deterministic auditor run after every round. Three gates are evaluated in
/// the order confidence, coverage, conflict; all three always run.

#include "dermtrace/evidence.hpp"
#include "dermtrace/ontology.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dermtrace {

struct CriticThresholds {
    double panderm_min_conf = 0.90;
    double rag_min_sim = 0.80;

    /// Raises ConfigError when either value lies outside [0,1].
    void validate() const;
    static CriticThresholds from_json(const json& j);
};

/// Parameters used when feedback proposes a tool call from scratch.
struct CallDefaults {
    std::string question;
    std::vector<std::string> candidates;
    std::vector<std::string> features;
    int case_k = 4;

    /// Default call for `tool`. The guideline query and the ontology name use
    /// `disease` when given, the question otherwise.
    ToolCall call_for(ToolId tool, const std::optional<std::string>& disease = std::nullopt) const;
};

struct CriticVerdict {
    bool f_conf = false;
    bool f_cov = false;
    bool f_con = false;
    std::vector<Feedback> feedback;

    bool any() const noexcept { return f_conf || f_cov || f_con; }
    /// Trace marker line: {event:"critic", k, f_conf, f_cov, f_con, feedback}.
    json to_json(int k) const;
};

/// A scored item below threshold exists and some actionable tool is still
/// uninvoked. Scores equal to a threshold pass.
bool check_confidence(const EvidenceChain& chain, const TaskScope& scope, const CriticThresholds& thresholds);

bool check_coverage(const TaskScope& scope, const EvidenceChain& chain);

/// Label normalisation shared by the critic and the metrics: casefold, trim,
/// then alias canonicalisation when an ontology is present.
std::string normalize_label(std::string_view label, const OntologyIndex* ontology);

struct ConflictPair {
    std::string classifier_label;
    std::string case_label;
};

/// The latest classifier top-1 and the latest case-retrieval majority, both
/// normalised, when they disagree. Nothing is returned when either is missing.
std::optional<ConflictPair> find_disagreement(const EvidenceChain& chain, const OntologyIndex* ontology);

/// True once some earlier guideline query text names both labels.
bool conflict_addressed(const EvidenceChain& chain, const ConflictPair& pair);

bool detect_conflicts(const EvidenceChain& chain, const OntologyIndex* ontology);

std::vector<Feedback> make_feedback(bool f_conf, bool f_cov, bool f_con, const EvidenceChain& chain,
                                    const TaskScope& scope, const CallDefaults& defaults,
                                    const OntologyIndex* ontology, int round);

CriticVerdict evaluate(const EvidenceChain& chain, const TaskScope& scope, const CriticThresholds& thresholds,
                       const OntologyIndex* ontology, const CallDefaults& defaults, int round);

} // namespace dermtrace
