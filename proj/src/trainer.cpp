#include "ktune/trainer.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <algorithm>
#include <thread>
#include <unordered_set>

#include "ktune/curriculum.hpp"

namespace ktune {

using nlohmann::json;

namespace {

std::string trim_copy(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string tail(const std::string& text, std::size_t max_bytes) {
    return text.size() <= max_bytes ? text : text.substr(text.size() - max_bytes);
}

class ChildProcess final : public TrainerProcess {
public:
    ChildProcess(pid_t pid, fs::path stderr_path) : pid_(pid), stderr_path_(std::move(stderr_path)) {}

    ~ChildProcess() override {
        if (!status_) {
            terminate();
        }
    }

    std::optional<int> poll() override {
        if (status_) return status_;
        int raw = 0;
        const pid_t r = ::waitpid(pid_, &raw, WNOHANG);
        if (r == pid_) {
            status_ = WIFEXITED(raw) ? WEXITSTATUS(raw) : 128 + (WIFSIGNALED(raw) ? WTERMSIG(raw) : 0);
        } else if (r < 0) {
            status_ = 127;
        }
        return status_;
    }

    void terminate() override {
        if (status_) return;
        ::kill(pid_, SIGTERM);
        int raw = 0;
        ::waitpid(pid_, &raw, 0);
        status_ = 128 + SIGTERM;
    }

    std::string stderr_excerpt() const override {
        try {
            return tail(read_file(stderr_path_), 2000);
        } catch (const Error&) {
            return {};
        }
    }

private:
    pid_t pid_;
    fs::path stderr_path_;
    std::optional<int> status_;
};

json records_line(const TrainRecord& r) {
    return json{{"id", r.id}, {"prompt_text", r.prompt_text}, {"target_text", r.target_text}};
}

} // namespace

TrainRecord make_train_record(const QAPair& pair) {
    return TrainRecord{pair.id, "Q: " + pair.question + "\nA:", " " + pair.canonical_answer()};
}

void TrainerManifest::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("InvalidManifest", why); };
    config.validate();
    if (epoch_plan.size() != config.max_epochs) fail("epoch plan length differs from max_epochs");
    std::unordered_set<std::string_view> ids;
    for (const auto& r : train_records) {
        if (!ids.insert(r.id).second) fail("duplicate train record '" + r.id + "'");
    }
    for (const auto& epoch : epoch_plan) {
        for (const auto& id : epoch) {
            if (!ids.count(id)) fail("epoch plan id '" + id + "' has no train record");
        }
    }
}

TrainerManifest make_manifest(const CurriculumSpec& curriculum, const Corpus& corpus, const TrainerConfig& config,
                              std::optional<std::string> resume_from, std::string eval_set_ref) {
    config.validate();
    TrainerManifest m;
    m.config = config;
    m.resume_from = std::move(resume_from);
    m.eval_set_ref = std::move(eval_set_ref);
    for (const auto& id : curriculum.member_ids) m.train_records.push_back(make_train_record(corpus.at(id)));
    if (replay_count(curriculum) > 0) {
        for (const auto& id : curriculum.replay_pool_ids) m.train_records.push_back(make_train_record(corpus.at(id)));
    }
    for (std::uint32_t e = 1; e <= config.max_epochs; ++e) m.epoch_plan.push_back(replay_epoch_mix(curriculum, e));
    m.validate();
    return m;
}

fs::path epoch_sentinel(const fs::path& dir, std::uint32_t epoch) {
    return dir / ("epoch_" + std::to_string(epoch) + ".done");
}

fs::path epoch_checkpoint(const fs::path& dir, std::uint32_t epoch) {
    return dir / ("checkpoint_epoch_" + std::to_string(epoch));
}

std::string hparams_json(const TrainerConfig& c, const std::optional<std::string>& resume_from) {
    json j{{"adapter_rank", c.adapter_rank}, {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
           {"batch_size", c.batch_size},     {"max_epochs", c.max_epochs},       {"schedule", c.schedule},
           {"optimizer", c.optimizer},       {"resume_from", resume_from ? json(*resume_from) : json(nullptr)}};
    return j.dump(2) + "\n";
}

std::string manifest_digest(const TrainerManifest& m) {
    std::string blob = hparams_json(m.config, m.resume_from);
    blob += m.eval_set_ref + "\n";
    for (const auto& r : m.train_records) blob += records_line(r).dump() + "\n";
    for (const auto& epoch : m.epoch_plan) {
        for (const auto& id : epoch) blob += id + "\n";
        blob += "--\n";
    }
    return sha256_hex(blob);
}

void write_stage_directory(const fs::path& dir, const TrainerManifest& manifest) {
    manifest.validate();
    fs::create_directories(dir / "epochs");
    std::string train;
    for (const auto& r : manifest.train_records) train += records_line(r).dump() + "\n";
    write_file_atomic(dir / "train.jsonl", train);
    for (std::size_t e = 0; e < manifest.epoch_plan.size(); ++e) {
        std::string ids;
        for (const auto& id : manifest.epoch_plan[e]) ids += id + "\n";
        write_file_atomic(dir / "epochs" / ("epoch_" + std::to_string(e + 1) + ".ids"), ids);
    }
    write_file_atomic(dir / "hparams.json", hparams_json(manifest.config, manifest.resume_from));
    write_file_atomic(dir / "manifest.json",
                      json{{"eval_set_ref", manifest.eval_set_ref}, {"digest", manifest_digest(manifest)}}.dump(2) +
                          "\n");
}

TrainerManifest read_stage_directory(const fs::path& dir) {
    try {
        TrainerManifest m;
        const auto h = json::parse(read_file(dir / "hparams.json"));
        m.config.adapter_rank = h.at("adapter_rank").get<std::uint32_t>();
        m.config.learning_rate = h.at("learning_rate").get<double>();
        m.config.weight_decay = h.at("weight_decay").get<double>();
        m.config.batch_size = h.at("batch_size").get<std::uint32_t>();
        m.config.max_epochs = h.at("max_epochs").get<std::uint32_t>();
        m.config.schedule = h.at("schedule").get<std::string>();
        m.config.optimizer = h.at("optimizer").get<std::string>();
        if (h.contains("resume_from") && !h["resume_from"].is_null()) m.resume_from = h["resume_from"].get<std::string>();
        if (fs::exists(dir / "manifest.json")) {
            m.eval_set_ref = json::parse(read_file(dir / "manifest.json")).value("eval_set_ref", "");
        }
        for (const auto& line : read_lines(dir / "train.jsonl")) {
            const auto j = json::parse(line);
            m.train_records.push_back(TrainRecord{j.at("id").get<std::string>(), j.at("prompt_text").get<std::string>(),
                                                  j.at("target_text").get<std::string>()});
        }
        for (std::uint32_t e = 1; e <= m.config.max_epochs; ++e) {
            m.epoch_plan.push_back(read_lines(dir / "epochs" / ("epoch_" + std::to_string(e) + ".ids")));
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw ValidationError("InvalidManifest", dir.string() + ": " + e.what());
    }
}

CommandTrainer::CommandTrainer(std::string command) : command_(std::move(command)) {
    if (trim_copy(command_).empty()) throw ValidationError("MissingTrainerCommand", "trainer command is empty");
}

std::unique_ptr<TrainerProcess> CommandTrainer::launch(const fs::path& stage_dir) {
    const auto out_path = stage_dir / "trainer.stdout";
    const auto err_path = stage_dir / "trainer.stderr";
    const std::string script = command_ + " \"$1\"";
    const std::string dir = stage_dir.string();

    const pid_t pid = ::fork();
    if (pid < 0) throw TrainerError("SpawnFailed", "fork failed for trainer command");
    if (pid == 0) {
        const int out = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int err = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (out >= 0) ::dup2(out, STDOUT_FILENO);
        if (err >= 0) ::dup2(err, STDERR_FILENO);
        ::execl("/bin/sh", "sh", "-c", script.c_str(), "ktune-trainer", dir.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    return std::make_unique<ChildProcess>(pid, err_path);
}

TrainerFailed::TrainerFailed(int exit_code, std::string stderr_excerpt, std::vector<double> completed)
    : TrainerError("TrainerFailed", "trainer exited with status " + std::to_string(exit_code) + " after " +
                                        std::to_string(completed.size()) + " completed epoch(s)" +
                                        (stderr_excerpt.empty() ? std::string() : ": " + tail(stderr_excerpt, 300))),
      exit_code_(exit_code),
      stderr_(std::move(stderr_excerpt)),
      completed_(std::move(completed)) {}

std::size_t best_epoch(const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw ValidationError("NoEpochs", "no epoch accuracies to choose from");
    // max_element returns the first maximum, which is the earliest-tie rule.
    return static_cast<std::size_t>(std::max_element(accuracies.begin(), accuracies.end()) - accuracies.begin()) + 1;
}

std::string stage_result_json(const StageResult& r) {
    json j{{"checkpoint_ref", r.checkpoint_ref}, {"best_epoch", r.best_epoch}, {"epoch_accuracies", r.epoch_accuracies},
           {"checkpoints", r.checkpoints},       {"manifest_digest", r.manifest_digest}};
    return j.dump(2) + "\n";
}

StageResult stage_result_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        StageResult r;
        r.checkpoint_ref = j.at("checkpoint_ref").get<std::string>();
        r.best_epoch = j.at("best_epoch").get<std::size_t>();
        r.epoch_accuracies = j.at("epoch_accuracies").get<std::vector<double>>();
        r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
        r.manifest_digest = j.at("manifest_digest").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRecord", std::string("stage result: ") + e.what());
    }
}

StageResult train_stage(const fs::path& stage_dir, const TrainerManifest& manifest, Trainer& trainer,
                        const EvalHook& eval_hook, const TrainStageOptions& options) {
    const auto digest = manifest_digest(manifest);
    const auto result_path = stage_dir / "result.json";
    if (fs::exists(result_path)) {
        auto cached = stage_result_from_json(read_file(result_path));
        if (cached.manifest_digest == digest) return cached;
    }

    if (fs::exists(stage_dir)) {
        // Leftovers of an interrupted run must not be mistaken for fresh sentinels.
        for (const auto& entry : fs::directory_iterator(stage_dir)) {
            const auto name = entry.path().filename().string();
            if (name.rfind("checkpoint_epoch_", 0) == 0 || (name.rfind("epoch_", 0) == 0 && entry.path().extension() == ".done")) {
                fs::remove_all(entry.path());
            }
        }
        fs::remove(result_path);
    }
    write_stage_directory(stage_dir, manifest);

    StageResult result;
    result.manifest_digest = digest;
    const auto max_epochs = manifest.config.max_epochs;

    auto process = trainer.launch(stage_dir);
    auto drain = [&] {
        while (result.epoch_accuracies.size() < max_epochs) {
            const auto epoch = static_cast<std::uint32_t>(result.epoch_accuracies.size() + 1);
            if (!fs::exists(epoch_sentinel(stage_dir, epoch))) return;
            const auto ckpt = epoch_checkpoint(stage_dir, epoch);
            if (!fs::exists(ckpt)) {
                process->terminate();
                throw TrainerFailed(-1, "epoch " + std::to_string(epoch) + " sentinel without checkpoint ref",
                                    result.epoch_accuracies);
            }
            auto ref = trim_copy(read_file(ckpt));
            try {
                result.epoch_accuracies.push_back(eval_hook(ref, epoch));
            } catch (...) {
                process->terminate();
                throw;
            }
            result.checkpoints.push_back(std::move(ref));
        }
    };

    for (;;) {
        drain();
        if (const auto status = process->poll()) {
            drain();
            if (*status != 0) throw TrainerFailed(*status, process->stderr_excerpt(), result.epoch_accuracies);
            if (result.epoch_accuracies.size() < max_epochs) {
                throw TrainerFailed(0, "trainer exited after " + std::to_string(result.epoch_accuracies.size()) + " of " +
                                           std::to_string(max_epochs) + " epochs",
                                    result.epoch_accuracies);
            }
            break;
        }
        std::this_thread::sleep_for(options.poll_interval);
    }

    result.best_epoch = best_epoch(result.epoch_accuracies);
    result.checkpoint_ref = result.checkpoints[result.best_epoch - 1];
    write_file_atomic(result_path, stage_result_json(result));
    return result;
}

} // namespace ktune
