#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "ktune/analytics.hpp"
#include "ktune/classifier.hpp"
#include "ktune/curriculum.hpp"
#include "ktune/entity_graph.hpp"
#include "ktune/error.hpp"
#include "ktune/formats.hpp"
#include "ktune/mock.hpp"
#include "ktune/pipeline.hpp"
#include "ktune/probe.hpp"
#include "ktune/trainer.hpp"

using nlohmann::json;
using namespace ktune;

namespace {

// Flags shared by the subcommands that talk to a backend.
struct BackendFlags {
    std::string corpus;
    std::string backend_url;
    std::string mock_policy;
    std::string model = "base";
    std::uint64_t seed = 42;
    std::size_t parallelism = 4;
    std::uint32_t retries = 5;
    std::uint32_t backoff_ms = 200;

    void add(CLI::App* app, bool need_model) {
        app->add_option("--corpus", corpus, "corpus JSONL")->required();
        app->add_option("--backend-url", backend_url, "completion server base URL");
        app->add_option("--mock-policy", mock_policy, "answer from a scripted mock policy instead of a server");
        if (need_model) app->add_option("--model", model, "model or checkpoint ref")->capture_default_str();
        app->add_option("--seed", seed, "prompt seed")->capture_default_str();
        app->add_option("--parallelism", parallelism, "concurrent requests")->capture_default_str();
        app->add_option("--retries", retries, "attempts per request")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--backoff-ms", backoff_ms, "first retry delay, doubled per attempt")->capture_default_str();
    }

    RetryPolicy retry() const {
        RetryPolicy r;
        r.max_attempts = retries;
        r.initial_backoff = std::chrono::milliseconds(backoff_ms);
        return r;
    }

    bool mock() const { return !mock_policy.empty(); }

    std::unique_ptr<InferenceBackend> backend(const Corpus& c) const {
        PipelineConfig cfg;
        cfg.backend = mock() ? BackendKind::Mock : BackendKind::Http;
        cfg.mock_policy = mock_policy;
        cfg.backend_url = backend_url;
        if (const char* url = std::getenv("KTUNE_BACKEND_URL"); url && *url && cfg.backend_url.empty()) {
            cfg.backend_url = url;
        }
        apply_secret_environment(cfg);
        return make_backend(cfg, c);
    }
};

struct DecodeFlags {
    std::uint32_t rounds = 10;
    std::uint32_t samples = 16;
    std::uint32_t top_k = 40;
    double temperature = 0.5;
    std::size_t shots = kDefaultShots;
    std::string sample_mode = "batched";

    void add(CLI::App* app) {
        app->add_option("--rounds", rounds, "probe rounds")->capture_default_str();
        app->add_option("--samples", samples, "samples per sampled round")->capture_default_str();
        app->add_option("--top-k", top_k, "top-k for sampled decoding (0 = unlimited)")->capture_default_str();
        app->add_option("--temperature", temperature, "sampled temperature")->capture_default_str();
        app->add_option("--shots", shots, "few-shot exemplars")->capture_default_str();
        app->add_option("--sample-mode", sample_mode, "batched or separate")->capture_default_str();
    }

    void apply(ProbeConfig& p) const {
        p.greedy.rounds = rounds;
        p.sampled.rounds = rounds;
        p.sampled.samples_per_round = samples;
        p.sampled.top_k = top_k ? std::optional<std::uint32_t>(top_k) : std::nullopt;
        p.sampled.temperature = temperature;
        p.shots = shots;
        p.sample_mode = parse_sample_mode(sample_mode);
    }
};

std::string pool_digest(const Corpus& train) {
    return sha256_hex(corpus_to_jsonl(train));
}

int cmd_probe(const BackendFlags& bf, const DecodeFlags& df, const std::string& split, const std::string& out,
              std::size_t checkpoint_every) {
    const auto corpus = load_corpus(bf.corpus);
    const auto train = corpus.subset(Split::Train);
    const Corpus target = split == "all" ? corpus : corpus.subset(parse_split(split));
    ProbeConfig pc;
    df.apply(pc);
    pc.embed_id_tag = bf.mock();
    pc.validate();
    const ExemplarIndex exemplars(train, pc.type_key);
    auto backend = bf.backend(corpus);
    ProbeContext ctx{exemplars, *backend, bf.model, bf.seed, pc, bf.retry()};
    CampaignOptions opts;
    opts.parallelism = bf.parallelism;
    opts.checkpoint_path = out;
    opts.checkpoint_every = checkpoint_every;
    opts.config_digest = probe_config_digest(pc, pool_digest(train));
    const auto outcomes = run_campaign(target, ctx, opts);
    std::cout << "probed " << outcomes.size() << " pairs -> " << out << "\n";
    return 0;
}

int cmd_classify(const std::string& outcomes_path, const std::string& out) {
    const auto cp = load_checkpoint(outcomes_path);
    if (!cp.complete()) {
        throw ValidationError("IncompleteOutcomes",
                              std::to_string(cp.pending.size()) + " pairs are still pending in " + outcomes_path);
    }
    ClassificationSnapshot snap;
    snap.model_ref = cp.model_ref;
    snap.probe_config_digest = cp.config_digest;
    snap.seed = cp.seed;
    snap.created_at = utc_timestamp();
    for (const auto& [id, o] : cp.completed) snap.labels.emplace(id, classify(estimate(o)));
    save_snapshot(out, snap);
    const auto counts = aggregate_counts(snap, false);
    for (std::size_t i = 0; i < counts.labels.size(); ++i) std::cout << counts.labels[i] << " " << counts.counts[i] << "\n";
    return 0;
}

int cmd_curate(const std::string& corpus_path, const std::string& initial, const std::string& after,
               const std::string& strategy, double ratio, const std::string& base, std::uint64_t seed,
               const std::string& out) {
    const auto train = load_corpus(corpus_path).subset(Split::Train);
    const auto s = parse_strategy(strategy);
    CurriculumSpec spec;
    if (s == Strategy::Stage1MaybeKnown) {
        spec = stage1_dataset(load_snapshot(initial), train, seed);
    } else {
        if (after.empty()) throw ValidationError("MissingSnapshot", "--after is required for " + strategy);
        spec = stage2_dataset(s, load_snapshot(initial), load_snapshot(after), train, seed, ratio,
                              parse_replay_base(base));
    }
    save_curriculum(out, spec);
    std::cout << "members " << spec.member_ids.size() << "\n";
    if (s == Strategy::S5) {
        std::cout << "replay pool " << spec.replay_pool_ids.size() << "\n";
        std::cout << "replay per epoch " << replay_count(spec) << "\n";
    }
    return 0;
}

struct TrainFlags {
    std::string curriculum;
    std::string stage_dir;
    std::string trainer_cmd;
    std::string eval_set;
    std::string resume_from;
    int stage = 1;
    std::uint64_t eval_seed = 42;
    std::optional<std::uint32_t> max_epochs;
    std::optional<double> learning_rate;
    std::optional<double> weight_decay;
    std::optional<std::uint32_t> batch_size;
    std::optional<std::uint32_t> rank;
    std::uint32_t poll_ms = 50;
};

int cmd_train(const BackendFlags& bf, const TrainFlags& tf) {
    const auto corpus = load_corpus(bf.corpus);
    const auto train = corpus.subset(Split::Train);
    const auto test = corpus.subset(Split::Test);
    const auto curriculum = load_curriculum(tf.curriculum);

    auto config = tf.stage == 1 ? TrainerConfig::stage1_defaults() : TrainerConfig::stage2_defaults();
    if (tf.max_epochs) config.max_epochs = *tf.max_epochs;
    if (tf.learning_rate) config.learning_rate = *tf.learning_rate;
    if (tf.weight_decay) config.weight_decay = *tf.weight_decay;
    if (tf.batch_size) config.batch_size = *tf.batch_size;
    if (tf.rank) config.adapter_rank = *tf.rank;

    std::string command = tf.trainer_cmd;
    if (command.empty()) {
        if (const char* env = std::getenv("KTUNE_TRAINER_CMD")) command = env;
    }
    if (command.empty()) throw ValidationError("MissingTrainerCommand", "--trainer-cmd or KTUNE_TRAINER_CMD is required");

    ProbeConfig pc;
    EvalSet eval_set;
    if (fs::exists(tf.eval_set)) {
        eval_set = eval_set_from_jsonl(read_file(tf.eval_set));
    } else {
        const ExemplarIndex exemplars(train, pc.type_key);
        eval_set = build_eval_set(test, exemplars, pc.shots, tf.eval_seed, bf.mock());
        write_file_atomic(tf.eval_set, eval_set_to_jsonl(eval_set));
    }

    auto backend = bf.backend(corpus);
    EvalOptions eo;
    eo.parallelism = bf.parallelism;
    eo.retry = bf.retry();
    const auto resume = tf.resume_from.empty() ? std::nullopt : std::optional<std::string>(tf.resume_from);
    const auto manifest = make_manifest(curriculum, train, config, resume, tf.eval_set);
    CommandTrainer trainer(command);
    TrainStageOptions opts;
    opts.poll_interval = std::chrono::milliseconds(tf.poll_ms);
    const auto result = train_stage(
        tf.stage_dir, manifest, trainer,
        [&](const std::string& ref, std::uint32_t epoch) {
            const double acc = evaluate_accuracy(ref, test, eval_set, *backend, eo).accuracy();
            std::cerr << "epoch " << epoch << " " << ref << " " << format_accuracy(acc) << "\n";
            return acc;
        },
        opts);
    std::cout << stage_result_json(result);
    return 0;
}

int cmd_analyze(const std::string& before, const std::string& after, const std::string& two_stage,
                const std::string& retest, const std::string& out, const std::string& json_out) {
    const auto s0 = load_snapshot(before);
    const auto s1 = load_snapshot(after);
    AnalysisReport report;
    report.transitions.emplace_back("origin -> one-stage (fine)", transition_matrix(s0, s1, false));
    report.transitions.emplace_back("origin -> one-stage", transition_matrix(s0, s1, true));
    report.stage_counts.emplace_back("origin", aggregate_counts(s0, true));
    report.stage_counts.emplace_back("one-stage", aggregate_counts(s1, true));
    if (!two_stage.empty()) {
        const auto s2 = load_snapshot(two_stage);
        report.transitions.emplace_back("one-stage -> two-stage", transition_matrix(s1, s2, true));
        report.stage_counts.emplace_back("two-stage", aggregate_counts(s2, true));
        report.gain = gain_report(report.stage_counts[0].second, report.stage_counts[1].second,
                                  report.stage_counts[2].second);
    }
    if (!retest.empty()) report.baseline = noise_baseline(s0, load_snapshot(retest));
    const auto text = render_text(report);
    if (out.empty()) {
        std::cout << text;
    } else {
        write_file_atomic(out, text);
    }
    if (!json_out.empty()) write_file_atomic(json_out, render_json(report));
    return 0;
}

int cmd_graph(const std::string& corpus_path, const std::string& initial, const std::string& after,
              const std::string& rules_path, const std::string& out_dir) {
    const auto corpus = load_corpus(corpus_path);
    const auto rules = rules_path.empty() ? EntityRules::defaults() : load_entity_rules(rules_path);
    const auto s0 = load_snapshot(initial);
    const auto s1 = load_snapshot(after);
    const auto pairs = entity_analysis_pairs(corpus, s0, s1);
    const auto graph = build_graph(pairs, rules);
    const auto labels = label_nodes(graph, s0, s1);
    const json counts{{"initial", labels.initial.size()},
                      {"reclassified", labels.reclassified.size()},
                      {"linked_reclassified", labels.linked_reclassified.size()},
                      {"nodes", graph.nodes.size()},
                      {"edges", graph.edges.size()},
                      {"skipped_no_entity", graph.skipped_no_entity},
                      {"skipped_self_loop", graph.skipped_self_loop}};
    if (!out_dir.empty()) {
        write_file_atomic(fs::path(out_dir) / "edges.tsv", graph_edge_list(graph));
        write_file_atomic(fs::path(out_dir) / "nodes.tsv", node_label_sidecar(graph, labels));
        write_file_atomic(fs::path(out_dir) / "counts.json", counts.dump(2) + "\n");
    }
    std::cout << "Initial " << labels.initial.size() << "\n"
              << "Reclassified " << labels.reclassified.size() << "\n"
              << "Linked Reclassified " << labels.linked_reclassified.size() << "\n";
    return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_mock_serve(const std::string& corpus_path, const std::string& policy, const std::string& host, int port) {
    MockBackend backend(load_corpus(corpus_path), load_policy(policy));
    MockServer server(backend);
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::cout << server.start(host, port) << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

struct PipelineFlags {
    std::string config;
    std::optional<std::string> corpus, backend_url, model, out_dir, mock_policy, trainer_cmd, strategy, sample_mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> parallelism;
    std::optional<double> replay_ratio, temperature;
    std::optional<std::uint32_t> rounds, samples, top_k, max_rounds;
};

int cmd_pipeline(const PipelineFlags& f) {
    auto cfg = load_pipeline_config(f.config);
    apply_environment(cfg);
    if (f.corpus) cfg.corpus = *f.corpus;
    if (f.backend_url) {
        cfg.backend = BackendKind::Http;
        cfg.backend_url = *f.backend_url;
    }
    if (f.mock_policy) {
        cfg.backend = BackendKind::Mock;
        cfg.mock_policy = *f.mock_policy;
    }
    cfg.probe.embed_id_tag = cfg.backend == BackendKind::Mock;
    if (f.model) cfg.model = *f.model;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.trainer_cmd) cfg.trainer_command = *f.trainer_cmd;
    if (f.strategy) cfg.strategy = parse_strategy(*f.strategy);
    if (f.seed) cfg.seed = *f.seed;
    if (f.parallelism) cfg.parallelism = *f.parallelism;
    if (f.replay_ratio) cfg.replay_ratio = *f.replay_ratio;
    if (f.rounds) {
        cfg.probe.greedy.rounds = *f.rounds;
        cfg.probe.sampled.rounds = *f.rounds;
    }
    if (f.samples) cfg.probe.sampled.samples_per_round = *f.samples;
    if (f.top_k) cfg.probe.sampled.top_k = *f.top_k ? std::optional<std::uint32_t>(*f.top_k) : std::nullopt;
    if (f.temperature) cfg.probe.sampled.temperature = *f.temperature;
    if (f.sample_mode) cfg.probe.sample_mode = parse_sample_mode(*f.sample_mode);
    if (f.max_rounds) cfg.max_rounds = *f.max_rounds;
    apply_secret_environment(cfg);
    cfg.validate();
    if (cfg.trainer_command.empty()) throw ValidationError("InvalidConfig", "trainer command is required");

    const auto corpus = load_corpus(cfg.corpus);
    auto backend = make_backend(cfg, corpus);
    CommandTrainer trainer(cfg.trainer_command);
    const auto ledger = cfg.max_rounds > 1 ? run_multi_round(cfg, *backend, trainer)
                                           : run_two_stage(cfg, *backend, trainer);
    std::cout << "run " << ledger.run_id << " " << to_string(ledger.status) << " (" << ledger.stop_reason << ")\n";
    return 0;
}

void report_error(const std::string& kind, const std::string& code, const std::string& message) {
    std::cerr << json{{"error", code}, {"kind", kind}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-class probing, curriculum curation and two-stage fine-tuning orchestration"};
    app.require_subcommand(1);
    int rc = 0;

    BackendFlags bf;
    DecodeFlags df;

    auto* probe = app.add_subcommand("probe", "probe every pair and write an outcome file");
    std::string split = "train", probe_out;
    std::size_t checkpoint_every = 256;
    bf.add(probe, true);
    df.add(probe);
    probe->add_option("--split", split, "train, test or all")->capture_default_str();
    probe->add_option("--out", probe_out, "outcome file, also the resume checkpoint")->required();
    probe->add_option("--checkpoint-every", checkpoint_every)->capture_default_str();
    probe->callback([&] { rc = cmd_probe(bf, df, split, probe_out, checkpoint_every); });

    auto* cls = app.add_subcommand("classify", "turn an outcome file into a snapshot");
    std::string outcomes, snap_out;
    cls->add_option("--outcomes", outcomes)->required();
    cls->add_option("--out", snap_out)->required();
    cls->callback([&] { rc = cmd_classify(outcomes, snap_out); });

    auto* curate = app.add_subcommand("curate", "build a training curriculum from snapshots");
    std::string cur_corpus, initial, after, strategy = "s5", base = "pool", cur_out;
    double ratio = 0.2;
    std::uint64_t cur_seed = 42;
    curate->add_option("--corpus", cur_corpus)->required();
    curate->add_option("--initial", initial, "snapshot of the base model")->required();
    curate->add_option("--after", after, "snapshot after the first stage");
    curate->add_option("--strategy", strategy, "stage1 or s1..s5")->capture_default_str();
    curate->add_option("--replay-ratio", ratio)->capture_default_str();
    curate->add_option("--replay-base", base, "pool or members")->capture_default_str();
    curate->add_option("--seed", cur_seed)->capture_default_str();
    curate->add_option("--out", cur_out)->required();
    curate->callback([&] { rc = cmd_curate(cur_corpus, initial, after, strategy, ratio, base, cur_seed, cur_out); });

    auto* train = app.add_subcommand("train", "run one training stage through the external trainer");
    BackendFlags tbf;
    TrainFlags tf;
    tbf.add(train, false);
    train->add_option("--curriculum", tf.curriculum)->required();
    train->add_option("--stage-dir", tf.stage_dir)->required();
    train->add_option("--eval-set", tf.eval_set, "fixed eval prompts; created when missing")->required();
    train->add_option("--trainer-cmd", tf.trainer_cmd);
    train->add_option("--resume-from", tf.resume_from);
    train->add_option("--stage", tf.stage, "1 or 2, selects default hyperparameters")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    train->add_option("--eval-seed", tf.eval_seed)->capture_default_str();
    train->add_option("--max-epochs", tf.max_epochs);
    train->add_option("--learning-rate", tf.learning_rate);
    train->add_option("--weight-decay", tf.weight_decay);
    train->add_option("--batch-size", tf.batch_size);
    train->add_option("--adapter-rank", tf.rank);
    train->add_option("--poll-ms", tf.poll_ms)->capture_default_str();
    train->callback([&] { rc = cmd_train(tbf, tf); });

    auto* pipe = app.add_subcommand("pipeline", "full two-stage or multi-round run from a config file");
    PipelineFlags pf;
    pipe->add_option("--config", pf.config)->required();
    pipe->add_option("--corpus", pf.corpus);
    pipe->add_option("--backend-url", pf.backend_url);
    pipe->add_option("--mock-policy", pf.mock_policy);
    pipe->add_option("--model", pf.model);
    pipe->add_option("--out-dir", pf.out_dir);
    pipe->add_option("--trainer-cmd", pf.trainer_cmd);
    pipe->add_option("--strategy", pf.strategy);
    pipe->add_option("--seed", pf.seed);
    pipe->add_option("--parallelism", pf.parallelism);
    pipe->add_option("--replay-ratio", pf.replay_ratio);
    pipe->add_option("--rounds", pf.rounds);
    pipe->add_option("--samples", pf.samples);
    pipe->add_option("--top-k", pf.top_k);
    pipe->add_option("--temperature", pf.temperature);
    pipe->add_option("--sample-mode", pf.sample_mode);
    pipe->add_option("--max-rounds", pf.max_rounds);
    pipe->callback([&] { rc = cmd_pipeline(pf); });

    auto* analyze = app.add_subcommand("analyze", "transition and gain report for snapshots");
    std::string before, an_after, two_stage, retest, an_out, an_json;
    analyze->add_option("--before", before)->required();
    analyze->add_option("--after", an_after)->required();
    analyze->add_option("--two-stage", two_stage, "snapshot after the second stage");
    analyze->add_option("--retest", retest, "second probe of the base model, for the noise baseline");
    analyze->add_option("--out", an_out);
    analyze->add_option("--json", an_json);
    analyze->callback([&] { rc = cmd_analyze(before, an_after, two_stage, retest, an_out, an_json); });

    auto* graph = app.add_subcommand("graph", "entity graph over initial and reclassified pairs");
    std::string g_corpus, g_initial, g_after, g_rules, g_out;
    graph->add_option("--corpus", g_corpus)->required();
    graph->add_option("--initial", g_initial)->required();
    graph->add_option("--after", g_after)->required();
    graph->add_option("--rules", g_rules, "entity rule file");
    graph->add_option("--out-dir", g_out);
    graph->callback([&] { rc = cmd_graph(g_corpus, g_initial, g_after, g_rules, g_out); });

    auto* serve = app.add_subcommand("mock-serve", "serve a mock policy over HTTP");
    std::string s_corpus, s_policy, host = "127.0.0.1";
    int port = 0;
    serve->add_option("--corpus", s_corpus)->required();
    serve->add_option("--mock-policy", s_policy)->required();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->callback([&] { rc = cmd_mock_serve(s_corpus, s_policy, host, port); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("validation", "BadArguments", e.what());
        return static_cast<int>(ErrorKind::Validation);
    } catch (const Error& e) {
        report_error(to_string(e.kind()), e.code(), e.what());
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        report_error("internal", "Internal", e.what());
        return static_cast<int>(ErrorKind::Internal);
    }
    return rc;
}
