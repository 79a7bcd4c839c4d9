#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ktune/error.hpp"
#include "ktune/io.hpp"
#include "ktune/types.hpp"

namespace ktune {

struct TrainRecord {
    std::string id;
    std::string prompt_text;  // "Q: {question}\nA:"
    std::string target_text;  // " {canonical answer}"

    friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

TrainRecord make_train_record(const QAPair& pair);

struct TrainerManifest {
    std::vector<TrainRecord> train_records;
    TrainerConfig config;
    std::optional<std::string> resume_from;
    std::vector<std::vector<std::string>> epoch_plan;  // epoch k at index k-1
    std::string eval_set_ref;

    // Throws ValidationError(InvalidManifest).
    void validate() const;

    friend bool operator==(const TrainerManifest&, const TrainerManifest&) = default;
};

// Records for members and replay pool, and one epoch order per configured epoch.
TrainerManifest make_manifest(const CurriculumSpec& curriculum, const Corpus& corpus, const TrainerConfig& config,
                              std::optional<std::string> resume_from, std::string eval_set_ref);

// Stage directory layout handed to the external trainer:
//   train.jsonl          {id, prompt_text, target_text} per line
//   epochs/epoch_k.ids   one id per line, training order of epoch k (1-based)
//   hparams.json         adapter_rank, learning_rate, weight_decay, batch_size,
//                        max_epochs, schedule, optimizer, resume_from
//   manifest.json        eval_set_ref and the manifest digest
// The trainer writes checkpoint_epoch_k (a checkpoint ref) and then touches
// epoch_k.done after each epoch, and exits 0.
void write_stage_directory(const fs::path& dir, const TrainerManifest& manifest);
TrainerManifest read_stage_directory(const fs::path& dir);
std::string manifest_digest(const TrainerManifest& manifest);
std::string hparams_json(const TrainerConfig& config, const std::optional<std::string>& resume_from);

fs::path epoch_sentinel(const fs::path& dir, std::uint32_t epoch);
fs::path epoch_checkpoint(const fs::path& dir, std::uint32_t epoch);

class TrainerProcess {
public:
    virtual ~TrainerProcess() = default;
    // Exit status once finished, nullopt while running.
    virtual std::optional<int> poll() = 0;
    virtual void terminate() = 0;
    virtual std::string stderr_excerpt() const = 0;
};

class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::unique_ptr<TrainerProcess> launch(const fs::path& stage_dir) = 0;
};

// Runs `sh -c '<command> "$1"' ktune-trainer <stage_dir>`; stdout and stderr go to
// trainer.stdout / trainer.stderr inside the stage directory.
class CommandTrainer final : public Trainer {
public:
    explicit CommandTrainer(std::string command);
    std::unique_ptr<TrainerProcess> launch(const fs::path& stage_dir) override;

private:
    std::string command_;
};

// Raised when the trainer exits non-zero or breaks the sentinel contract.
class TrainerFailed : public TrainerError {
public:
    TrainerFailed(int exit_code, std::string stderr_excerpt, std::vector<double> completed_accuracies);

    int exit_code() const noexcept { return exit_code_; }
    const std::string& stderr_excerpt() const noexcept { return stderr_; }
    const std::vector<double>& completed_accuracies() const noexcept { return completed_; }

private:
    int exit_code_;
    std::string stderr_;
    std::vector<double> completed_;
};

// 1-based index of the maximum; the earliest epoch wins ties. Requires a non-empty list.
std::size_t best_epoch(const std::vector<double>& accuracies);

struct StageResult {
    std::string checkpoint_ref;              // checkpoint of the best epoch
    std::size_t best_epoch = 0;              // 1-based
    std::vector<double> epoch_accuracies;
    std::vector<std::string> checkpoints;    // per epoch
    std::string manifest_digest;

    double max_accuracy() const { return epoch_accuracies.at(best_epoch - 1); }
    double final_accuracy() const { return epoch_accuracies.back(); }

    friend bool operator==(const StageResult&, const StageResult&) = default;
};

// Accuracy of a checkpoint, called once per finished epoch.
using EvalHook = std::function<double(const std::string& checkpoint_ref, std::uint32_t epoch)>;

struct TrainStageOptions {
    std::chrono::milliseconds poll_interval{50};
};

// Writes the stage directory, runs the trainer, evaluates each epoch as its
// sentinel appears, and keeps the best epoch (retrospective early stopping). A
// result.json for the same manifest short-circuits the run. Throws TrainerFailed.
StageResult train_stage(const fs::path& stage_dir, const TrainerManifest& manifest, Trainer& trainer,
                        const EvalHook& eval_hook, const TrainStageOptions& options = {});

std::string stage_result_json(const StageResult& result);
StageResult stage_result_from_json(const std::string& text);

} // namespace ktune
