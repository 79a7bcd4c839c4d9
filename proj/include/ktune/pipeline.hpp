#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ktune/analytics.hpp"
#include "ktune/backend.hpp"
#include "ktune/probe.hpp"
#include "ktune/trainer.hpp"
#include "ktune/types.hpp"

namespace ktune {

// ---------------------------------------------------------------------------
// Fixed evaluation prompts

struct EvalItem {
    std::string qa_id;
    std::string prompt;

    friend bool operator==(const EvalItem&, const EvalItem&) = default;
};

// One prompt per test pair, drawn once so every checkpoint sees the same prompts.
struct EvalSet {
    std::uint64_t seed = 42;
    std::vector<EvalItem> items;

    friend bool operator==(const EvalSet&, const EvalSet&) = default;
};

EvalSet build_eval_set(const Corpus& test, const ExemplarIndex& exemplars, std::size_t shots, std::uint64_t seed,
                       bool embed_id_tag);
std::string eval_set_to_jsonl(const EvalSet& set);
EvalSet eval_set_from_jsonl(std::string_view text);

struct EvalOptions {
    MatcherPolicy matcher;
    RetryPolicy retry;
    std::size_t parallelism = 1;
    std::uint32_t max_new_tokens = 32;
};

struct EvalResult {
    std::uint64_t correct = 0;
    std::uint64_t total = 0;

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// Greedy single generation per fixed prompt, scored with the first-answer rule.
// Throws ValidationError(EmptyEvalSet); backend errors propagate.
EvalResult evaluate_accuracy(const std::string& model_ref, const Corpus& test, const EvalSet& prompts,
                             InferenceBackend& backend, const EvalOptions& options = {});

// Percent with two decimals, e.g. 0.2993 -> "29.93".
std::string format_accuracy(double fraction);

// ---------------------------------------------------------------------------
// Configuration

enum class BackendKind { Http, Mock };

struct PipelineConfig {
    fs::path corpus;
    fs::path out_dir;
    std::string model = "base";

    BackendKind backend = BackendKind::Http;
    std::string backend_url;
    std::string auth_token;
    fs::path mock_policy;

    std::string trainer_command;
    std::uint32_t trainer_poll_ms = 50;

    std::uint64_t seed = 42;             // probe prompts
    std::uint64_t eval_seed = 42;        // fixed evaluation prompts
    std::uint64_t curriculum_seed = 42;  // curriculum shuffles and replay draws
    std::size_t parallelism = 4;
    std::size_t checkpoint_every = 256;
    RetryPolicy retry;

    ProbeConfig probe;

    Strategy strategy = Strategy::S5;
    double replay_ratio = 0.2;
    ReplayBase replay_base = ReplayBase::Pool;

    TrainerConfig stage1 = TrainerConfig::stage1_defaults();
    TrainerConfig stage2 = TrainerConfig::stage2_defaults();
    bool stage2_resume = true;  // false = fresh adapter for the second stage

    std::uint32_t max_rounds = 1;
    double min_improvement_points = 0.05;  // accuracy percentage points

    bool noise_baseline = false;

    // Throws ValidationError(InvalidConfig).
    void validate() const;
};

inline constexpr int kConfigVersion = 1;

// Versioned JSON config. Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir);
PipelineConfig load_pipeline_config(const fs::path& path);

// KTUNE_BACKEND_URL and KTUNE_TRAINER_CMD override the file.
void apply_environment(PipelineConfig& config);
// KTUNE_API_KEY overrides everything, flags included.
void apply_secret_environment(PipelineConfig& config);

// Backend described by the config; the mock needs the corpus to answer from.
std::unique_ptr<InferenceBackend> make_backend(const PipelineConfig& config, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Run ledger

enum class RunStatus { Running, Complete, Failed };
std::string_view to_string(RunStatus s);

struct SnapshotRecord {
    std::string name;
    std::string model_ref;
    std::string file;  // relative to the run directory
    std::string digest;
    LabelCounts counts;
};

struct EvaluationRecord {
    std::string model_ref;
    std::uint64_t correct = 0;
    std::uint64_t total = 0;
};

struct StageRecord {
    std::string name;
    std::string strategy;
    std::vector<std::string> snapshot_digests;
    std::string curriculum_digest;
    std::size_t members = 0;
    std::size_t replay_pool = 0;
    std::size_t replay_per_epoch = 0;
    std::optional<std::string> resume_from;
    TrainerConfig config;
    std::vector<double> epoch_accuracies;
    std::size_t best_epoch = 0;
    std::string chosen_checkpoint;
    std::string status = "running";
    double wall_clock_seconds = 0.0;  // metadata only
};

struct RoundRecord {
    std::uint32_t round = 0;
    double accuracy = 0.0;
    double improvement_points = 0.0;
};

struct RunLedger {
    std::string run_id;
    RunStatus status = RunStatus::Running;
    std::string strategy;
    std::vector<SnapshotRecord> snapshots;
    std::vector<EvaluationRecord> evaluations;
    std::vector<StageRecord> stages;
    std::vector<RoundRecord> rounds;
    std::string stop_reason;
    std::string error;
    std::vector<std::string> reports;
    std::string started_at;   // metadata only
    std::string finished_at;  // metadata only

    const StageRecord* stage(std::string_view name) const;
};

// Deterministic content only; timestamps and wall-clock times are excluded.
std::string ledger_to_json(const RunLedger& ledger);
// Timestamps and per-stage wall-clock times.
std::string ledger_meta_json(const RunLedger& ledger);

// ---------------------------------------------------------------------------
// Orchestration

// "no improvement" when the round gained less than min_improvement_points over the
// previous best, "max rounds" when round == max_rounds, otherwise continue (nullopt).
std::optional<std::string> round_stop_reason(std::uint32_t round, std::uint32_t max_rounds, double previous_accuracy,
                                             double accuracy, double min_improvement_points);

// probe -> classify -> stage 1 -> re-probe -> stage-2 curriculum -> stage 2 ->
// re-probe -> reports. Artifacts persist under config.out_dir; a rerun reuses them.
RunLedger run_two_stage(const PipelineConfig& config, InferenceBackend& backend, Trainer& trainer);

// Two-stage run followed by further S5 rounds until the accuracy gain drops below
// min_improvement_points or max_rounds second-stage rounds have run.
RunLedger run_multi_round(const PipelineConfig& config, InferenceBackend& backend, Trainer& trainer);

} // namespace ktune
