#include "ktune/analytics.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>

#include "ktune/classifier.hpp"
#include "ktune/error.hpp"

namespace ktune {

using nlohmann::json;

namespace {

std::vector<std::string> fine_labels() {
    std::vector<std::string> out;
    for (auto c : kAllClasses) out.emplace_back(to_string(c));
    return out;
}

std::vector<std::string> coarse_labels() {
    std::vector<std::string> out;
    for (auto c : kAllCoarseClasses) out.emplace_back(to_string(c));
    return out;
}

std::size_t slot(KnowledgeClass c, bool coarse) {
    return coarse ? static_cast<std::size_t>(coarsen(c)) : static_cast<std::size_t>(c);
}

TransitionMatrix empty_matrix(bool coarse) {
    TransitionMatrix m;
    m.row_labels = coarse ? coarse_labels() : fine_labels();
    m.col_labels = m.row_labels;
    m.counts.assign(m.row_labels.size(), std::vector<std::uint64_t>(m.col_labels.size(), 0));
    return m;
}

std::string percent(double v) {
    return fmt::format("{:.2f}%", v * 100.0);
}

json matrix_json(const TransitionMatrix& m) {
    return json{{"rows", m.row_labels}, {"cols", m.col_labels}, {"counts", m.counts}};
}

void render_matrix(std::string& out, const std::string& title, const TransitionMatrix& m) {
    out += "== " + title + "\n";
    out += fmt::format("{:<22}{:<22}{:>10}\n", "Origin Type", "New Type", "Num");
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            out += fmt::format("{:<22}{:<22}{:>10}\n", c == 0 ? m.row_labels[r] : "", m.col_labels[c], m.counts[r][c]);
        }
    }
    out += fmt::format("row sums: {}\n", fmt::join([&] {
                                              std::vector<std::uint64_t> v;
                                              for (std::size_t r = 0; r < m.row_labels.size(); ++r) v.push_back(m.row_sum(r));
                                              return v;
                                          }(),
                                          " "));
    out += fmt::format("col sums: {}\n", fmt::join([&] {
                                              std::vector<std::uint64_t> v;
                                              for (std::size_t c = 0; c < m.col_labels.size(); ++c) v.push_back(m.col_sum(c));
                                              return v;
                                          }(),
                                          " "));
    out += "churn by origin:\n";
    for (const auto& row : churn_rows(m)) {
        out += fmt::format("  {:<22}{:>8} / {:<8} {:>8} +/- {}\n", row.label, row.churned, row.total,
                           percent(row.fraction), percent(row.std_error));
    }
    out += "\n";
}

} // namespace

TransitionMatrix transition_matrix(const ClassificationSnapshot& before, const ClassificationSnapshot& after,
                                   bool coarse) {
    if (before.labels.size() != after.labels.size()) {
        throw ValidationError("IdSetMismatch", "snapshots cover " + std::to_string(before.labels.size()) + " and " +
                                                   std::to_string(after.labels.size()) + " ids");
    }
    auto m = empty_matrix(coarse);
    auto a = after.labels.begin();
    for (const auto& [id, cls] : before.labels) {
        // Both maps are sorted, so equal id sets walk in lockstep.
        if (a->first != id) throw ValidationError("IdSetMismatch", "id '" + id + "' missing from the second snapshot");
        ++m.counts[slot(cls, coarse)][slot(a->second, coarse)];
        ++a;
    }
    return m;
}

TransitionMatrix coarse_matrix(const std::array<std::array<std::uint64_t, 3>, 3>& counts) {
    auto m = empty_matrix(true);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) m.counts[r][c] = counts[r][c];
    }
    return m;
}

TransitionMatrix coarsen_matrix(const TransitionMatrix& fine) {
    if (fine.row_labels != fine_labels() || fine.col_labels != fine_labels()) {
        throw ValidationError("NotFineMatrix", "coarsen_matrix expects a 4x4 fine matrix");
    }
    auto m = empty_matrix(true);
    for (auto r : kAllClasses) {
        for (auto c : kAllClasses) {
            m.counts[slot(r, true)][slot(c, true)] += fine.counts[slot(r, false)][slot(c, false)];
        }
    }
    return m;
}

std::uint64_t LabelCounts::get(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return counts[i];
    }
    throw ValidationError("UnknownLabel", "no count for label '" + std::string(label) + "'");
}

std::uint64_t LabelCounts::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

LabelCounts aggregate_counts(const ClassificationSnapshot& snapshot, bool coarse) {
    LabelCounts out;
    out.labels = coarse ? coarse_labels() : fine_labels();
    out.counts.assign(out.labels.size(), 0);
    for (const auto& [id, cls] : snapshot.labels) ++out.counts[slot(cls, coarse)];
    return out;
}

TransitionMatrix noise_baseline(const ClassificationSnapshot& a, const ClassificationSnapshot& b) {
    if (a.model_ref != b.model_ref) {
        throw ValidationError("ModelMismatch", "baseline needs two probes of one model, got '" + a.model_ref +
                                                   "' and '" + b.model_ref + "'");
    }
    return transition_matrix(a, b, true);
}

std::vector<ChurnRow> churn_rows(const TransitionMatrix& m) {
    std::vector<ChurnRow> rows;
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        ChurnRow row;
        row.label = m.row_labels[r];
        row.total = m.row_sum(r);
        row.churned = row.total - (r < m.col_labels.size() ? m.counts[r][r] : 0);
        if (row.total > 0) {
            row.fraction = static_cast<double>(row.churned) / static_cast<double>(row.total);
            row.std_error = std::sqrt(row.fraction * (1.0 - row.fraction) / static_cast<double>(row.total));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

GainReport gain_report(const LabelCounts& origin, const LabelCounts& one_stage, const LabelCounts& two_stage) {
    if (origin.labels != one_stage.labels || origin.labels != two_stage.labels) {
        throw ValidationError("LabelMismatch", "gain report needs count maps over the same labels");
    }
    const std::string hk(to_string(KnowledgeClass::HighlyKnown));
    GainReport g;
    g.hk_origin = origin.get(hk);
    g.hk_one_stage = one_stage.get(hk);
    g.hk_two_stage = two_stage.get(hk);
    const auto h0 = static_cast<double>(g.hk_origin);
    const auto h1 = static_cast<double>(g.hk_one_stage);
    const auto h2 = static_cast<double>(g.hk_two_stage);
    if (g.hk_one_stage != 0) g.relative_gain = h2 / h1 - 1.0;
    if (g.hk_one_stage != g.hk_origin) g.incremental_gain = (h2 - h0) / (h1 - h0) - 1.0;
    return g;
}

std::string render_text(const AnalysisReport& report) {
    std::string out;
    for (const auto& [title, m] : report.transitions) render_matrix(out, title, m);
    if (report.baseline) render_matrix(out, "noise baseline (same model, two probes)", *report.baseline);

    if (!report.stage_counts.empty()) {
        out += "== knowledge counts by stage\n";
        out += fmt::format("{:<22}", "Type");
        for (const auto& [stage, counts] : report.stage_counts) out += fmt::format("{:>14}", stage);
        out += "\n";
        const auto& labels = report.stage_counts.front().second.labels;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            out += fmt::format("{:<22}", labels[i]);
            for (const auto& [stage, counts] : report.stage_counts) out += fmt::format("{:>14}", counts.counts.at(i));
            out += "\n";
        }
        for (const auto& [stage, counts] : report.stage_counts) {
            out += fmt::format("counts {}: {}\n", stage, fmt::join(counts.counts, " "));
        }
        out += "\n";
    }

    if (report.gain) {
        const auto& g = *report.gain;
        out += "== HighlyKnown gain\n";
        out += fmt::format("HighlyKnown origin/one-stage/two-stage: {} {} {}\n", g.hk_origin, g.hk_one_stage,
                           g.hk_two_stage);
        out += "relative gain: " + (g.relative_gain ? percent(*g.relative_gain) : std::string("undefined")) + "\n";
        out += "incremental gain: " + (g.incremental_gain ? percent(*g.incremental_gain) : std::string("undefined")) +
               "\n";
    }
    return out;
}

std::string render_json(const AnalysisReport& report) {
    json j = json::object();
    json transitions = json::array();
    for (const auto& [title, m] : report.transitions) {
        auto t = matrix_json(m);
        t["title"] = title;
        transitions.push_back(std::move(t));
    }
    j["transitions"] = std::move(transitions);
    if (report.baseline) j["baseline"] = matrix_json(*report.baseline);
    json stages = json::array();
    for (const auto& [stage, counts] : report.stage_counts) {
        stages.push_back({{"stage", stage}, {"labels", counts.labels}, {"counts", counts.counts}});
    }
    j["stage_counts"] = std::move(stages);
    if (report.gain) {
        const auto& g = *report.gain;
        j["gain"] = {{"hk_origin", g.hk_origin},
                     {"hk_one_stage", g.hk_one_stage},
                     {"hk_two_stage", g.hk_two_stage},
                     {"relative_gain", g.relative_gain ? json(*g.relative_gain) : json(nullptr)},
                     {"incremental_gain", g.incremental_gain ? json(*g.incremental_gain) : json(nullptr)}};
    }
    return j.dump(2) + "\n";
}

} // namespace ktune
