#include "ktune/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "ktune/classifier.hpp"
#include "ktune/curriculum.hpp"
#include "ktune/error.hpp"
#include "ktune/formats.hpp"
#include "ktune/mock.hpp"

namespace ktune {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Evaluation

EvalSet build_eval_set(const Corpus& test, const ExemplarIndex& exemplars, std::size_t shots, std::uint64_t seed,
                       bool embed_id_tag) {
    EvalSet set;
    set.seed = seed;
    set.items.reserve(test.size());
    for (const auto& p : test.pairs()) {
        Rng rng(derive_seed(seed, {p.id, "eval"}));
        auto prompt = exemplars.build(p, shots, rng).render();
        if (embed_id_tag) prompt.insert(0, id_tag_line(p.id, p.id + "#e1"));
        set.items.push_back({p.id, std::move(prompt)});
    }
    return set;
}

std::string eval_set_to_jsonl(const EvalSet& set) {
    std::string out = json{{"kind", "eval_set"}, {"version", 1}, {"seed", set.seed}}.dump() + "\n";
    for (const auto& item : set.items) out += json{{"id", item.qa_id}, {"prompt", item.prompt}}.dump() + "\n";
    return out;
}

EvalSet eval_set_from_jsonl(std::string_view text) {
    EvalSet set;
    bool header = true;
    std::size_t start = 0;
    try {
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            const auto line = text.substr(start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            const auto j = json::parse(line);
            if (header) {
                if (j.value("kind", "") != "eval_set") throw ValidationError("WrongFileKind", "not an eval_set file");
                set.seed = j.at("seed").get<std::uint64_t>();
                header = false;
                continue;
            }
            set.items.push_back({j.at("id").get<std::string>(), j.at("prompt").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRecord", std::string("eval set: ") + e.what());
    }
    if (header) throw ValidationError("MalformedRecord", "eval set file is empty");
    return set;
}

EvalResult evaluate_accuracy(const std::string& model_ref, const Corpus& test, const EvalSet& prompts,
                             InferenceBackend& backend, const EvalOptions& options) {
    if (prompts.items.empty()) throw ValidationError("EmptyEvalSet", "evaluation set has no prompts");
    std::atomic<std::size_t> next{0};
    std::atomic<std::uint64_t> correct{0};
    std::mutex mu;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= prompts.items.size()) return;
            const auto& item = prompts.items[i];
            try {
                const auto& pair = test.at(item.qa_id);
                GenerationRequest r;
                r.model = model_ref;
                r.prompt = item.prompt;
                r.temperature = 0.0;
                r.n = 1;
                r.max_new_tokens = options.max_new_tokens;
                r.request_id = item.qa_id + "#e1";
                const auto out = generate_with_retry(backend, r, options.retry);
                if (match_answer(out.front(), pair, options.matcher)) ++correct;
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = prompts.items.size();
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto threads = std::max<std::size_t>(1, std::min(options.parallelism, prompts.items.size()));
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return EvalResult{correct.load(), prompts.items.size()};
}

std::string format_accuracy(double fraction) {
    return fmt::format("{:.2f}", fraction * 100.0);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

json trainer_config_json(const TrainerConfig& c) {
    return json{{"adapter_rank", c.adapter_rank}, {"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},     {"max_epochs", c.max_epochs},       {"schedule", c.schedule},
                {"optimizer", c.optimizer}};
}

TrainerConfig trainer_config_from_json(const json& j, TrainerConfig base) {
    base.adapter_rank = j.value("adapter_rank", base.adapter_rank);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.max_epochs = j.value("max_epochs", base.max_epochs);
    base.schedule = j.value("schedule", base.schedule);
    base.optimizer = j.value("optimizer", base.optimizer);
    return base;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

json probe_config_json(const ProbeConfig& p) {
    return json{{"rounds", p.greedy.rounds},
                {"samples", p.sampled.samples_per_round},
                {"sampled_rounds", p.sampled.rounds},
                {"top_k", p.sampled.top_k ? json(*p.sampled.top_k) : json(nullptr)},
                {"temperature", p.sampled.temperature},
                {"max_new_tokens", p.greedy.max_new_tokens},
                {"shots", p.shots},
                {"sample_mode", to_string(p.sample_mode)},
                {"type_key", p.type_key},
                {"case_fold", p.matcher.case_fold},
                {"whitespace_collapse", p.matcher.whitespace_collapse},
                {"id_tag", p.embed_id_tag}};
}

} // namespace

void PipelineConfig::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("InvalidConfig", why); };
    if (corpus.empty()) fail("corpus path is required");
    if (out_dir.empty()) fail("out_dir is required");
    if (model.empty()) fail("model is required");
    if (parallelism == 0) fail("parallelism must be at least 1");
    if (max_rounds == 0) fail("max_rounds must be at least 1");
    if (strategy == Strategy::Stage1MaybeKnown) fail("second-stage strategy must be one of s1..s5");
    if (!(replay_ratio >= 0.0 && replay_ratio <= 1.0)) fail("replay_ratio must lie in [0,1]");
    probe.validate();
    stage1.validate();
    stage2.validate();
}

PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("InvalidConfig", e.what());
    }
    try {
        if (j.value("version", 0) != kConfigVersion) {
            throw ValidationError("InvalidConfig", "unsupported config version (expected " +
                                                       std::to_string(kConfigVersion) + ")");
        }
        PipelineConfig c;
        c.corpus = resolve(base_dir, j.value("corpus", ""));
        c.out_dir = resolve(base_dir, j.value("out_dir", ""));
        c.model = j.value("model", c.model);
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            const auto kind = b.value("kind", "http");
            if (kind == "http") {
                c.backend = BackendKind::Http;
            } else if (kind == "mock") {
                c.backend = BackendKind::Mock;
            } else {
                throw ValidationError("InvalidConfig", "backend kind must be 'http' or 'mock'");
            }
            c.backend_url = b.value("url", "");
            c.auth_token = b.value("auth_token", "");
            c.mock_policy = resolve(base_dir, b.value("policy", ""));
        }
        if (j.contains("trainer")) {
            c.trainer_command = j["trainer"].value("command", "");
            c.trainer_poll_ms = j["trainer"].value("poll_ms", c.trainer_poll_ms);
        }
        c.seed = j.value("seed", c.seed);
        c.eval_seed = j.value("eval_seed", c.eval_seed);
        c.curriculum_seed = j.value("curriculum_seed", c.curriculum_seed);
        c.parallelism = j.value("parallelism", c.parallelism);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        if (j.contains("retry")) {
            c.retry.max_attempts = j["retry"].value("max_attempts", c.retry.max_attempts);
            c.retry.initial_backoff = std::chrono::milliseconds(
                j["retry"].value("initial_backoff_ms", static_cast<std::int64_t>(c.retry.initial_backoff.count())));
        }
        if (j.contains("probe")) {
            const auto& p = j["probe"];
            c.probe.greedy.rounds = p.value("rounds", c.probe.greedy.rounds);
            c.probe.sampled.rounds = p.value("sampled_rounds", c.probe.greedy.rounds);
            c.probe.sampled.samples_per_round = p.value("samples", c.probe.sampled.samples_per_round);
            c.probe.sampled.temperature = p.value("temperature", c.probe.sampled.temperature);
            if (p.contains("top_k")) {
                c.probe.sampled.top_k = p["top_k"].is_null() ? std::nullopt
                                                              : std::optional<std::uint32_t>(p["top_k"].get<std::uint32_t>());
            }
            const auto max_tokens = p.value("max_new_tokens", c.probe.greedy.max_new_tokens);
            c.probe.greedy.max_new_tokens = max_tokens;
            c.probe.sampled.max_new_tokens = max_tokens;
            c.probe.shots = p.value("shots", c.probe.shots);
            c.probe.sample_mode = parse_sample_mode(p.value("sample_mode", std::string(to_string(c.probe.sample_mode))));
            c.probe.type_key = p.value("type_key", c.probe.type_key);
            c.probe.matcher.case_fold = p.value("case_fold", c.probe.matcher.case_fold);
            c.probe.matcher.whitespace_collapse = p.value("whitespace_collapse", c.probe.matcher.whitespace_collapse);
        }
        c.probe.embed_id_tag = c.backend == BackendKind::Mock;
        c.strategy = parse_strategy(j.value("strategy", std::string(to_string(c.strategy))));
        c.replay_ratio = j.value("replay_ratio", c.replay_ratio);
        c.replay_base = parse_replay_base(j.value("replay_base", std::string(to_string(c.replay_base))));
        if (j.contains("stage1")) c.stage1 = trainer_config_from_json(j["stage1"], c.stage1);
        if (j.contains("stage2")) c.stage2 = trainer_config_from_json(j["stage2"], c.stage2);
        c.stage2_resume = j.value("stage2_resume", c.stage2_resume);
        if (j.contains("multi_round")) {
            c.max_rounds = j["multi_round"].value("max_rounds", c.max_rounds);
            c.min_improvement_points = j["multi_round"].value("min_improvement", c.min_improvement_points);
        }
        c.noise_baseline = j.value("noise_baseline", c.noise_baseline);
        return c;
    } catch (const json::exception& e) {
        throw ValidationError("InvalidConfig", e.what());
    }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    return pipeline_config_from_json(read_file(path), fs::absolute(path).parent_path());
}

void apply_environment(PipelineConfig& config) {
    if (const char* url = std::getenv("KTUNE_BACKEND_URL"); url && *url) config.backend_url = url;
    if (const char* cmd = std::getenv("KTUNE_TRAINER_CMD"); cmd && *cmd) config.trainer_command = cmd;
}

void apply_secret_environment(PipelineConfig& config) {
    if (const char* key = std::getenv("KTUNE_API_KEY"); key && *key) config.auth_token = key;
}

std::unique_ptr<InferenceBackend> make_backend(const PipelineConfig& config, const Corpus& corpus) {
    if (config.backend == BackendKind::Mock) {
        if (config.mock_policy.empty()) throw ValidationError("InvalidConfig", "mock backend needs a policy file");
        return std::make_unique<MockBackend>(corpus, load_policy(config.mock_policy));
    }
    if (config.backend_url.empty()) throw ValidationError("InvalidConfig", "backend URL is required");
    HttpBackendConfig http;
    http.base_url = config.backend_url;
    http.auth_token = config.auth_token;
    return std::make_unique<HttpBackend>(std::move(http));
}

// ---------------------------------------------------------------------------
// Ledger

std::string_view to_string(RunStatus s) {
    switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Complete: return "complete";
    case RunStatus::Failed: return "failed";
    }
    return "failed";
}

const StageRecord* RunLedger::stage(std::string_view name) const {
    for (const auto& s : stages) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

std::string ledger_to_json(const RunLedger& l) {
    json snapshots = json::array();
    for (const auto& s : l.snapshots) {
        json counts = json::object();
        for (std::size_t i = 0; i < s.counts.labels.size(); ++i) counts[s.counts.labels[i]] = s.counts.counts[i];
        snapshots.push_back(
            {{"name", s.name}, {"model_ref", s.model_ref}, {"file", s.file}, {"digest", s.digest}, {"counts", counts}});
    }
    json evals = json::array();
    for (const auto& e : l.evaluations) {
        const EvalResult r{e.correct, e.total};
        evals.push_back({{"model_ref", e.model_ref},
                         {"correct", e.correct},
                         {"total", e.total},
                         {"accuracy", format_accuracy(r.accuracy())}});
    }
    json stages = json::array();
    for (const auto& s : l.stages) {
        json accs = json::array();
        for (auto a : s.epoch_accuracies) accs.push_back(format_accuracy(a));
        json st{{"name", s.name},
                {"strategy", s.strategy},
                {"snapshot_digests", s.snapshot_digests},
                {"curriculum_digest", s.curriculum_digest},
                {"members", s.members},
                {"replay_pool", s.replay_pool},
                {"replay_per_epoch", s.replay_per_epoch},
                {"resume_from", s.resume_from ? json(*s.resume_from) : json(nullptr)},
                {"hparams", trainer_config_json(s.config)},
                {"epoch_accuracies", accs},
                {"best_epoch", s.best_epoch},
                {"chosen_checkpoint", s.chosen_checkpoint},
                {"status", s.status}};
        if (!s.epoch_accuracies.empty() && s.best_epoch > 0) {
            st["max_accuracy"] = format_accuracy(s.epoch_accuracies[s.best_epoch - 1]);
            st["final_accuracy"] = format_accuracy(s.epoch_accuracies.back());
            if (s.name.rfind("stage2", 0) == 0) st["best_epoch_within_first_three"] = s.best_epoch <= 3;
        }
        stages.push_back(std::move(st));
    }
    json rounds = json::array();
    for (const auto& r : l.rounds) {
        rounds.push_back({{"round", r.round},
                          {"accuracy", format_accuracy(r.accuracy)},
                          {"improvement_points", fmt::format("{:.2f}", r.improvement_points)}});
    }
    json j{{"run_id", l.run_id},   {"status", to_string(l.status)}, {"strategy", l.strategy},
           {"snapshots", snapshots}, {"evaluations", evals},          {"stages", stages},
           {"rounds", rounds},       {"stop_reason", l.stop_reason},  {"reports", l.reports}};
    if (!l.error.empty()) j["error"] = l.error;
    return j.dump(2) + "\n";
}

std::string ledger_meta_json(const RunLedger& l) {
    json stages = json::object();
    for (const auto& s : l.stages) stages[s.name] = {{"wall_clock_seconds", s.wall_clock_seconds}};
    return json{{"run_id", l.run_id}, {"started_at", l.started_at}, {"finished_at", l.finished_at}, {"stages", stages}}
               .dump(2) +
           "\n";
}

// ---------------------------------------------------------------------------
// Orchestration

std::optional<std::string> round_stop_reason(std::uint32_t round, std::uint32_t max_rounds, double previous_accuracy,
                                             double accuracy, double min_improvement_points) {
    const double gain_points = (accuracy - previous_accuracy) * 100.0;
    // Rounded so that a gain of exactly eps (0.04999999... in binary) is not a stop.
    if (std::round(gain_points * 1e6) / 1e6 < min_improvement_points) return "no improvement";
    if (round >= max_rounds) return "max rounds";
    return std::nullopt;
}

namespace {

class RunLock {
public:
    explicit RunLock(const fs::path& dir) {
        fs::create_directories(dir);
        const auto path = dir / ".lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw Error(ErrorKind::Internal, "LockFailed", "cannot open " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw ValidationError("RunLocked", "run directory " + dir.string() + " is in use by another run");
        }
    }
    ~RunLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int fd_ = -1;
};

std::string short_key(std::string_view text) {
    return sha256_hex(text).substr(0, 16);
}

class Run {
public:
    Run(const PipelineConfig& cfg, InferenceBackend& backend, Trainer& trainer)
        : cfg_(cfg), backend_(backend), trainer_(trainer), dir_(cfg.out_dir) {}

    RunLedger execute(std::uint32_t max_rounds);

private:
    struct NamedSnapshot {
        std::string name;
        ClassificationSnapshot snapshot;
    };

    void prepare();
    NamedSnapshot probe_snapshot(const std::string& name, const std::string& model_ref, std::uint64_t seed);
    double evaluate(const std::string& model_ref);
    StageResult train(const std::string& name, const CurriculumSpec& curriculum, const TrainerConfig& config,
                      std::optional<std::string> resume_from);
    void write_reports(const std::vector<NamedSnapshot>& chain, const std::optional<NamedSnapshot>& retest);
    void write_ledger();

    const PipelineConfig& cfg_;
    InferenceBackend& backend_;
    Trainer& trainer_;
    fs::path dir_;

    Corpus corpus_;
    Corpus train_;
    Corpus test_;
    std::unique_ptr<ExemplarIndex> exemplars_;
    std::string train_digest_;
    std::string probe_digest_;
    EvalSet eval_set_;
    RunLedger ledger_;
};

void Run::prepare() {
    corpus_ = load_corpus(cfg_.corpus);
    train_ = corpus_.subset(Split::Train);
    test_ = corpus_.subset(Split::Test);
    if (train_.empty()) throw ValidationError("EmptyCorpus", "corpus has no train pairs");
    if (test_.empty()) throw ValidationError("EmptyEvalSet", "corpus has no test pairs");
    exemplars_ = std::make_unique<ExemplarIndex>(train_, cfg_.probe.type_key);
    train_digest_ = sha256_hex(corpus_to_jsonl(train_));
    probe_digest_ = probe_config_digest(cfg_.probe, train_digest_);

    json fingerprint{{"corpus", sha256_hex(corpus_to_jsonl(corpus_))},
                     {"model", cfg_.model},
                     {"probe", probe_config_json(cfg_.probe)},
                     {"seeds", {cfg_.seed, cfg_.eval_seed, cfg_.curriculum_seed}},
                     {"strategy", to_string(cfg_.strategy)},
                     {"replay", {cfg_.replay_ratio, to_string(cfg_.replay_base)}},
                     {"stage1", trainer_config_json(cfg_.stage1)},
                     {"stage2", trainer_config_json(cfg_.stage2)},
                     {"stage2_resume", cfg_.stage2_resume},
                     {"rounds", {cfg_.max_rounds, cfg_.min_improvement_points}},
                     {"noise_baseline", cfg_.noise_baseline}};
    ledger_.run_id = sha256_hex(fingerprint.dump()).substr(0, 12);
    ledger_.strategy = std::string(to_string(cfg_.strategy));

    const auto eval_path = dir_ / "eval_set.jsonl";
    if (fs::exists(eval_path)) {
        eval_set_ = eval_set_from_jsonl(read_file(eval_path));
    } else {
        eval_set_ = build_eval_set(test_, *exemplars_, cfg_.probe.shots, cfg_.eval_seed, cfg_.probe.embed_id_tag);
        write_file_atomic(eval_path, eval_set_to_jsonl(eval_set_));
    }
}

Run::NamedSnapshot Run::probe_snapshot(const std::string& name, const std::string& model_ref, std::uint64_t seed) {
    const auto key = short_key(probe_digest_ + "\n" + model_ref + "\n" + std::to_string(seed));
    const auto outcomes_path = dir_ / "probes" / (key + ".jsonl");

    std::map<std::string, ProbeOutcome> outcomes;
    std::optional<CampaignCheckpoint> cached;
    if (fs::exists(outcomes_path)) cached = load_checkpoint(outcomes_path);
    if (cached && cached->complete() && cached->config_digest == probe_digest_) {
        outcomes = std::move(cached->completed);
    } else {
        ProbeContext ctx{*exemplars_, backend_, model_ref, seed, cfg_.probe, cfg_.retry};
        CampaignOptions opts;
        opts.parallelism = cfg_.parallelism;
        opts.checkpoint_path = outcomes_path;
        opts.checkpoint_every = cfg_.checkpoint_every;
        opts.config_digest = probe_digest_;
        outcomes = run_campaign(train_, ctx, opts);
    }

    auto snap = make_snapshot(train_, outcomes, model_ref, probe_digest_, seed);
    const auto rel = fs::path("snapshots") / (name + ".jsonl");
    const auto path = dir_ / rel;
    if (fs::exists(path)) {
        auto existing = load_snapshot(path);
        if (existing.same_content(snap)) snap = std::move(existing);
    }
    save_snapshot(path, snap);

    ledger_.snapshots.push_back({name, model_ref, rel.string(), snapshot_digest(snap), aggregate_counts(snap, false)});
    write_ledger();
    return {name, std::move(snap)};
}

double Run::evaluate(const std::string& model_ref) {
    const auto path = dir_ / "evals" / (short_key(model_ref + "\n" + std::to_string(eval_set_.seed)) + ".json");
    EvalResult r;
    if (fs::exists(path)) {
        const auto j = json::parse(read_file(path));
        r = {j.at("correct").get<std::uint64_t>(), j.at("total").get<std::uint64_t>()};
    } else {
        EvalOptions opts;
        opts.matcher = cfg_.probe.matcher;
        opts.retry = cfg_.retry;
        opts.parallelism = cfg_.parallelism;
        opts.max_new_tokens = cfg_.probe.greedy.max_new_tokens;
        r = evaluate_accuracy(model_ref, test_, eval_set_, backend_, opts);
        write_file_atomic(path, json{{"model_ref", model_ref}, {"correct", r.correct}, {"total", r.total}}.dump(2) + "\n");
    }
    const bool known = std::any_of(ledger_.evaluations.begin(), ledger_.evaluations.end(),
                                   [&](const EvaluationRecord& e) { return e.model_ref == model_ref; });
    if (!known) ledger_.evaluations.push_back({model_ref, r.correct, r.total});
    return r.accuracy();
}

StageResult Run::train(const std::string& name, const CurriculumSpec& curriculum, const TrainerConfig& config,
                       std::optional<std::string> resume_from) {
    save_curriculum(dir_ / "curricula" / (name + ".jsonl"), curriculum);
    auto manifest = make_manifest(curriculum, train_, config, resume_from, "../../eval_set.jsonl");

    StageRecord rec;
    rec.name = name;
    rec.strategy = std::string(to_string(curriculum.strategy));
    rec.snapshot_digests = curriculum.snapshot_digests;
    rec.curriculum_digest = curriculum_digest(curriculum);
    rec.members = curriculum.member_ids.size();
    rec.replay_pool = curriculum.replay_pool_ids.size();
    rec.replay_per_epoch = replay_count(curriculum);
    rec.resume_from = resume_from;
    rec.config = config;
    ledger_.stages.push_back(rec);
    write_ledger();
    auto& stored = ledger_.stages.back();

    const auto t0 = std::chrono::steady_clock::now();
    TrainStageOptions opts;
    opts.poll_interval = std::chrono::milliseconds(cfg_.trainer_poll_ms);
    StageResult result;
    try {
        result = train_stage(dir_ / "stages" / name, manifest, trainer_,
                             [this](const std::string& ref, std::uint32_t) { return evaluate(ref); }, opts);
    } catch (const TrainerFailed& e) {
        stored.epoch_accuracies = e.completed_accuracies();
        stored.status = "failed";
        throw;
    }
    stored.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Evaluations of a cached stage were not replayed through the hook.
    for (const auto& ckpt : result.checkpoints) evaluate(ckpt);
    stored.epoch_accuracies = result.epoch_accuracies;
    stored.best_epoch = result.best_epoch;
    stored.chosen_checkpoint = result.checkpoint_ref;
    stored.status = "complete";
    write_ledger();
    return result;
}

void Run::write_reports(const std::vector<NamedSnapshot>& chain, const std::optional<NamedSnapshot>& retest) {
    AnalysisReport report;
    const auto& origin = chain.at(0).snapshot;
    const auto& one = chain.at(1).snapshot;
    report.transitions.emplace_back("origin -> one-stage (fine)", transition_matrix(origin, one, false));
    report.transitions.emplace_back("origin -> one-stage", transition_matrix(origin, one, true));
    for (std::size_t i = 2; i < chain.size(); ++i) {
        report.transitions.emplace_back(chain[i - 1].name + " -> " + chain[i].name,
                                        transition_matrix(chain[i - 1].snapshot, chain[i].snapshot, true));
    }
    if (retest) report.baseline = noise_baseline(origin, retest->snapshot);
    for (const auto& s : chain) report.stage_counts.emplace_back(s.name, aggregate_counts(s.snapshot, true));
    if (chain.size() >= 3) {
        report.gain = gain_report(report.stage_counts[0].second, report.stage_counts[1].second,
                                  report.stage_counts[2].second);
    }
    write_file_atomic(dir_ / "reports" / "report.txt", render_text(report));
    write_file_atomic(dir_ / "reports" / "report.json", render_json(report));
    ledger_.reports = {"reports/report.txt", "reports/report.json"};
}

void Run::write_ledger() {
    write_file_atomic(dir_ / "ledger.json", ledger_to_json(ledger_));
    write_file_atomic(dir_ / "ledger.meta.json", ledger_meta_json(ledger_));
}

RunLedger Run::execute(std::uint32_t max_rounds) {
    cfg_.validate();
    RunLock lock(dir_);
    ledger_.started_at = utc_timestamp();
    try {
        prepare();
        write_ledger();

        std::vector<NamedSnapshot> chain;
        chain.push_back(probe_snapshot("origin", cfg_.model, cfg_.seed));
        std::optional<NamedSnapshot> retest;
        if (cfg_.noise_baseline) retest = probe_snapshot("origin-retest", cfg_.model, cfg_.seed + 1);
        evaluate(cfg_.model);

        const auto stage1 = stage1_dataset(chain[0].snapshot, train_, cfg_.curriculum_seed);
        const auto r1 = train("stage1", stage1, cfg_.stage1, std::nullopt);
        chain.push_back(probe_snapshot("one-stage", r1.checkpoint_ref, cfg_.seed));

        double previous = r1.max_accuracy();
        std::string resume = r1.checkpoint_ref;
        for (std::uint32_t round = 1;; ++round) {
            const auto strategy = round == 1 ? cfg_.strategy : Strategy::S5;
            const auto& before = chain[chain.size() - 2].snapshot;
            const auto& after = chain.back().snapshot;
            const auto curriculum =
                stage2_dataset(strategy, before, after, train_, cfg_.curriculum_seed, cfg_.replay_ratio, cfg_.replay_base);
            const auto name = round == 1 ? std::string("stage2") : "stage2-round" + std::to_string(round);
            const auto r = train(name, curriculum, cfg_.stage2,
                                 cfg_.stage2_resume ? std::optional<std::string>(resume) : std::nullopt);
            chain.push_back(probe_snapshot(round == 1 ? "two-stage" : "round-" + std::to_string(round),
                                           r.checkpoint_ref, cfg_.seed));

            const double acc = r.max_accuracy();
            ledger_.rounds.push_back({round, acc, (acc - previous) * 100.0});
            const auto stop = round_stop_reason(round, max_rounds, previous, acc, cfg_.min_improvement_points);
            previous = acc;
            resume = r.checkpoint_ref;
            if (stop) {
                ledger_.stop_reason = *stop;
                break;
            }
            write_ledger();
        }

        write_reports(chain, retest);
        ledger_.status = RunStatus::Complete;
    } catch (const std::exception& e) {
        ledger_.status = RunStatus::Failed;
        if (const auto* err = dynamic_cast<const Error*>(&e)) {
            ledger_.error = err->what();
        } else {
            ledger_.error = std::string("internal: ") + e.what();
        }
        ledger_.finished_at = utc_timestamp();
        if (fs::exists(dir_)) write_ledger();
        throw;
    }
    ledger_.finished_at = utc_timestamp();
    write_ledger();
    return ledger_;
}

} // namespace

RunLedger run_two_stage(const PipelineConfig& config, InferenceBackend& backend, Trainer& trainer) {
    return Run(config, backend, trainer).execute(1);
}

RunLedger run_multi_round(const PipelineConfig& config, InferenceBackend& backend, Trainer& trainer) {
    return Run(config, backend, trainer).execute(config.max_rounds);
}

} // namespace ktune
