#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "ktune/classifier.hpp"

namespace ktune::test {

const Rows kQwenOneStage = {
    {27282, 3952, 3192},
    {19059, 9892, 7946},
    {3091, 4889, 18006},
    {527, 1932, 69396},
};

const Rows kLlamaOneStage = {
    {29930, 4428, 381},
    {19635, 19976, 2789},
    {1991, 8607, 14103},
    {396, 5165, 61763},
};

const Rows kQwenTwoStage = {
    {47335, 2527, 97},
    {6131, 13161, 1373},
    {225, 2600, 95715},
};

const std::array<std::array<std::uint64_t, 3>, 3> kStoredCoarse = {{
    {31987, 3190, 0},
    {3285, 30006, 5236},
    {0, 5285, 97571},
}};

namespace {

constexpr KnowledgeClass kCoarseTarget[] = {KnowledgeClass::HighlyKnown, KnowledgeClass::MaybeKnown,
                                           KnowledgeClass::Unknown};

std::string fixture_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%06zu", i);
    return buf;
}

} // namespace

SnapshotPair one_stage_fixture(const Rows& rows) {
    SnapshotPair out;
    out.before.model_ref = "base";
    out.after.model_ref = "stage1";
    std::size_t next = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            for (std::uint64_t k = 0; k < rows[r][c]; ++k) {
                const auto id = fixture_id(next++);
                out.before.labels.emplace(id, kAllClasses[r]);
                out.after.labels.emplace(id, kCoarseTarget[c]);
            }
        }
    }
    return out;
}

ClassificationSnapshot follow_up_fixture(const ClassificationSnapshot& after, const Rows& coarse_rows) {
    ClassificationSnapshot out;
    out.model_ref = "stage2";
    std::vector<std::uint64_t> seen(coarse_rows.size(), 0);
    for (const auto& [id, label] : after.labels) {
        const auto row = static_cast<std::size_t>(coarsen(label));
        auto k = seen[row]++;
        std::size_t col = 0;
        while (col < coarse_rows[row].size() && k >= coarse_rows[row][col]) k -= coarse_rows[row][col++];
        if (col == coarse_rows[row].size()) throw std::logic_error("follow-up rows do not cover the snapshot");
        out.labels.emplace(id, kCoarseTarget[col]);
    }
    for (std::size_t r = 0; r < coarse_rows.size(); ++r) {
        std::uint64_t sum = 0;
        for (auto v : coarse_rows[r]) sum += v;
        if (sum != seen[r]) throw std::logic_error("follow-up row sum differs from the snapshot class count");
    }
    return out;
}

Corpus corpus_for(const ClassificationSnapshot& snap) {
    std::vector<QAPair> pairs;
    pairs.reserve(snap.labels.size());
    for (const auto& [id, label] : snap.labels) {
        pairs.push_back(QAPair{id, "Q " + id, {"A " + id}, Split::Train, {}});
    }
    return validate_corpus(std::move(pairs));
}

ClassProbabilities class_probabilities(double pg, double ps, unsigned greedy_rounds, unsigned sampled_total) {
    const double all = std::pow(pg, greedy_rounds);
    const double none = std::pow(1.0 - pg, greedy_rounds);
    const double no_sample = std::pow(1.0 - ps, sampled_total);
    return {all, 1.0 - all - none, none * (1.0 - no_sample), none * no_sample};
}

EntityFixture entity_fixture() {
    EntityFixture f;
    std::vector<QAPair> pairs = {
        {"a", "Who wrote Dune?", {"Frank Herbert"}, Split::Train, {}},
        {"b", "What is the capital of Arrakis?", {"Dune"}, Split::Train, {}},
        {"c", "What is the capital of Caladan?", {"Giedi"}, Split::Train, {}},
        {"d", "Who wrote Emma?", {"Jane Austen"}, Split::Train, {}},
    };
    f.corpus = validate_corpus(std::move(pairs));
    f.initial.labels = {{"a", KnowledgeClass::MaybeKnown},
                        {"b", KnowledgeClass::WeaklyKnown},
                        {"c", KnowledgeClass::WeaklyKnown},
                        {"d", KnowledgeClass::HighlyKnown}};
    f.after.labels = {{"a", KnowledgeClass::HighlyKnown},
                      {"b", KnowledgeClass::MaybeKnown},
                      {"c", KnowledgeClass::MaybeKnown},
                      {"d", KnowledgeClass::HighlyKnown}};
    return f;
}

Corpus mock_corpus(std::size_t n_train, std::size_t n_test) {
    static const char* kTemplates[][2] = {
        {"What is the capital of Land%zu?", "capital"},
        {"Who wrote Book%zu?", "author"},
        {"Who performed Song%zu?", "performer"},
    };
    std::vector<QAPair> pairs;
    auto add = [&](std::size_t i, Split split) {
        const auto& t = kTemplates[i % 3];
        char q[64];
        std::snprintf(q, sizeof q, t[0], i);
        char id[16];
        std::snprintf(id, sizeof id, "%c%05zu", split == Split::Train ? 't' : 'e', i);
        pairs.push_back(QAPair{id, q, {"Answer" + std::to_string(i)}, split, {{"pattern", t[1]}}});
    };
    for (std::size_t i = 0; i < n_train; ++i) add(i, Split::Train);
    for (std::size_t i = 0; i < n_test; ++i) add(n_train + i, Split::Test);
    return validate_corpus(std::move(pairs));
}

namespace {

class FinishedProcess final : public TrainerProcess {
public:
    explicit FinishedProcess(int code) : code_(code) {}
    std::optional<int> poll() override { return code_; }
    void terminate() override {}
    std::string stderr_excerpt() const override { return code_ ? "in-process failure" : ""; }

private:
    int code_;
};

} // namespace

std::unique_ptr<TrainerProcess> InProcessTrainer::launch(const fs::path& stage_dir) {
    ++launches;
    const auto hp = nlohmann::json::parse(read_file(stage_dir / "hparams.json"));
    const auto epochs = hp.at("max_epochs").get<std::uint32_t>();
    const auto name = fs::absolute(stage_dir).lexically_normal().filename().string();
    for (std::uint32_t k = 1; k <= epochs; ++k) {
        if (k == fail_at) return std::make_unique<FinishedProcess>(1);
        write_file_atomic(epoch_checkpoint(stage_dir, k), name + "/epoch" + std::to_string(k));
        write_file_atomic(epoch_sentinel(stage_dir, k), "");
    }
    return std::make_unique<FinishedProcess>(0);
}

std::vector<std::string> CountingBackend::generate(const GenerationRequest& request) {
    ++calls;
    if (delay_us_ > 0) std::this_thread::sleep_for(std::chrono::microseconds(delay_us_));
    return inner_.generate(request);
}

std::string qa_of(const GenerationRequest& request) {
    return request.request_id.substr(0, request.request_id.rfind('#'));
}

namespace {

struct ScratchRegistry {
    std::mutex mu;
    std::vector<fs::path> dirs;

    ~ScratchRegistry() {
        if (std::getenv("KTUNE_KEEP_SCRATCH")) return;
        std::error_code ec;
        for (const auto& d : dirs) fs::remove_all(d, ec);
    }
};

ScratchRegistry& scratch_registry() {
    static ScratchRegistry r;
    return r;
}

} // namespace

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ktune-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto& reg = scratch_registry();
    std::lock_guard lock(reg.mu);
    reg.dirs.push_back(dir);
    return dir;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

CommandResult run_command(const std::string& command) {
    static std::atomic<int> counter{0};
    const auto dir = fs::temp_directory_path() /
                     ("ktune-cmd-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(dir);
    const auto out = dir / "out", err = dir / "err";
    const auto full = command + " >" + shell_quote(out.string()) + " 2>" + shell_quote(err.string());
    const int raw = std::system(full.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    fs::remove_all(dir);
    return r;
}

} // namespace ktune::test

namespace ktune::test {

ScriptedWorld::ScriptedWorld(std::size_t n_train, std::size_t n_test, std::string base)
    : corpus(mock_corpus(n_train, n_test)), n_train_(n_train), base_(std::move(base)) {}

std::vector<std::string> ScriptedWorld::generate(const GenerationRequest& request) {
    ++calls;
    const auto id = qa_of(request);
    const auto idx = std::stoul(id.substr(1));
    const auto right = "Answer" + std::to_string(idx);
    const auto tag = request.request_id.substr(request.request_id.rfind('#') + 1);
    const bool greedy = tag.front() != 's';
    const auto round = std::stoul(tag.substr(1));
    std::vector<std::string> out(request.n, "nope");

    if (id.front() == 'e') {
        const auto it = test_correct.find(request.model);
        const auto k = it == test_correct.end() ? 0 : it->second;
        if (idx - n_train_ < k) out.assign(request.n, right);
        return out;
    }
    auto role = idx % 6;
    if (request.model != base_ && ((role == 2 && (idx / 6) % 2 == 0) || (role == 5 && (idx / 6) % 2 == 1))) role = 1;
    switch (role) {
    case 0:
    case 3: out.assign(request.n, right); break;
    case 1:
    case 4:
        if (!greedy || round % 2 == 1) out.assign(request.n, right);
        break;
    case 2:
        if (!greedy && round == 1) out.front() = right;
        break;
    default: break;
    }
    return out;
}

} // namespace ktune::test
