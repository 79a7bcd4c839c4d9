#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ktune/backend.hpp"
#include "ktune/io.hpp"
#include "ktune/trainer.hpp"
#include "ktune/types.hpp"

namespace ktune::test {

using Rows = std::vector<std::vector<std::uint64_t>>;

// Published Qwen2 and LLaMA3 one-stage transitions: rows are the origin classes
// (HK, MK, WK, Unknown), columns the coarse classes after stage one.
extern const Rows kQwenOneStage;
extern const Rows kLlamaOneStage;
// One-stage -> two-stage coarse transitions for Qwen2.
extern const Rows kQwenTwoStage;
// Stored coarse origin -> one-stage counts reported for a larger QA set.
extern const std::array<std::array<std::uint64_t, 3>, 3> kStoredCoarse;

struct SnapshotPair {
    ClassificationSnapshot before;
    ClassificationSnapshot after;
};

// Materializes per-id snapshots whose transition counts equal `rows`. The coarse
// residual column lands on Unknown.
SnapshotPair one_stage_fixture(const Rows& rows);

// Labels every id of `after` again so the coarse transitions equal `rows`.
ClassificationSnapshot follow_up_fixture(const ClassificationSnapshot& after, const Rows& coarse_rows);

// Train-split corpus with one trivial pair per snapshot id.
Corpus corpus_for(const ClassificationSnapshot& snap);

// Exact class probabilities for a pair answered correctly with probability pg per
// greedy round and ps per sampled generation.
struct ClassProbabilities {
    double highly_known;
    double maybe_known;
    double weakly_known;
    double unknown;
};
ClassProbabilities class_probabilities(double pg, double ps, unsigned greedy_rounds, unsigned sampled_total);

// Five-node entity fixture: one initially-MaybeKnown pair, two WeaklyKnown -> MaybeKnown
// pairs, and a HighlyKnown pair that stays out of the graph.
struct EntityFixture {
    Corpus corpus;
    ClassificationSnapshot initial;
    ClassificationSnapshot after;
};
EntityFixture entity_fixture();

// n train pairs and m test pairs over three question templates.
Corpus mock_corpus(std::size_t n_train, std::size_t n_test);

// Runs a whole stage inside launch(): checkpoint "<dir name>/epoch<k>" and sentinel per
// epoch, optionally failing (exit 1) when epoch `fail_at` starts.
class InProcessTrainer final : public Trainer {
public:
    std::uint32_t fail_at = 0;
    std::atomic<int> launches{0};

    std::unique_ptr<TrainerProcess> launch(const fs::path& stage_dir) override;
};

// Counts calls and optionally delays each one.
class CountingBackend final : public InferenceBackend {
public:
    CountingBackend(InferenceBackend& inner, int delay_us = 0) : inner_(inner), delay_us_(delay_us) {}
    std::vector<std::string> generate(const GenerationRequest& request) override;
    std::atomic<std::uint64_t> calls{0};

private:
    InferenceBackend& inner_;
    int delay_us_;
};

// Backend defined by a callable; request ids carry the pair id before '#'.
class FunctionBackend final : public InferenceBackend {
public:
    using Fn = std::function<std::vector<std::string>(const GenerationRequest&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    std::vector<std::string> generate(const GenerationRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

std::string qa_of(const GenerationRequest& request);

// Deterministic stand-in for a model family over mock_corpus(n_train, n_test).
// Train pairs by index mod 6: 0 and 3 always right, 1 and 4 right on odd greedy
// rounds, 2 right once under sampling, 5 never. Any model other than `base` also
// answers half of the 2s and half of the 5s on odd greedy rounds. A test pair is
// answered correctly when its offset is below test_correct[model].
class ScriptedWorld final : public InferenceBackend {
public:
    ScriptedWorld(std::size_t n_train, std::size_t n_test, std::string base = "base");

    std::vector<std::string> generate(const GenerationRequest& request) override;

    Corpus corpus;
    std::map<std::string, std::uint64_t> test_correct;
    std::atomic<std::uint64_t> calls{0};

private:
    std::size_t n_train_;
    std::string base_;
};

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs `command` through sh with stdout and stderr captured.
CommandResult run_command(const std::string& command);

// Single-quoted for sh.
std::string shell_quote(const std::string& s);

// Fresh empty directory under the system temp dir, removed at exit unless
// KTUNE_KEEP_SCRATCH is set.
fs::path scratch_dir(const std::string& name);

} // namespace ktune::test
