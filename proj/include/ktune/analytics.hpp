#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ktune/types.hpp"

namespace ktune {

// counts[i][j] = |{x : before(x) = i and after(x) = j}|. Fine matrices are 4x4 over
// KnowledgeClass, coarse ones 3x3 over CoarseClass. Throws ValidationError(IdSetMismatch).
TransitionMatrix transition_matrix(const ClassificationSnapshot& before, const ClassificationSnapshot& after,
                                   bool coarse);

// Wraps stored counts (e.g. a published table) as a coarse matrix.
TransitionMatrix coarse_matrix(const std::array<std::array<std::uint64_t, 3>, 3>& counts);

// Pushes a fine matrix through coarsen().
TransitionMatrix coarsen_matrix(const TransitionMatrix& fine);

struct LabelCounts {
    std::vector<std::string> labels;
    std::vector<std::uint64_t> counts;

    // Throws ValidationError(UnknownLabel).
    std::uint64_t get(std::string_view label) const;
    std::uint64_t total() const;

    friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

LabelCounts aggregate_counts(const ClassificationSnapshot& snapshot, bool coarse);

// Coarse matrix between two probes of the same model; its off-diagonal mass is the
// churn caused by prompt and sampling randomness alone. Throws ValidationError(ModelMismatch).
TransitionMatrix noise_baseline(const ClassificationSnapshot& a, const ClassificationSnapshot& b);

struct ChurnRow {
    std::string label;
    std::uint64_t total = 0;
    std::uint64_t churned = 0;   // off-diagonal count in this row
    double fraction = 0.0;       // churned / total
    double std_error = 0.0;      // sqrt(f (1 - f) / total)
};

std::vector<ChurnRow> churn_rows(const TransitionMatrix& m);

struct GainReport {
    std::uint64_t hk_origin = 0;
    std::uint64_t hk_one_stage = 0;
    std::uint64_t hk_two_stage = 0;
    std::optional<double> relative_gain;     // HK2 / HK1 - 1
    std::optional<double> incremental_gain;  // (HK2 - HK0) / (HK1 - HK0) - 1
};

// Throws ValidationError(LabelMismatch) when the maps do not share labels.
GainReport gain_report(const LabelCounts& origin, const LabelCounts& one_stage, const LabelCounts& two_stage);

struct AnalysisReport {
    std::vector<std::pair<std::string, TransitionMatrix>> transitions;
    std::optional<TransitionMatrix> baseline;
    std::vector<std::pair<std::string, LabelCounts>> stage_counts;
    std::optional<GainReport> gain;
};

// Plain-text tables in the Origin Type / New Type / Num layout, a stage-count table,
// churn fractions with error bars, and the gain summary.
std::string render_text(const AnalysisReport& report);

// Machine-readable record of the same content (single JSON document).
std::string render_json(const AnalysisReport& report);

} // namespace ktune
