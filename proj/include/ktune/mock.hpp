#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "ktune/backend.hpp"
#include "ktune/io.hpp"
#include "ktune/types.hpp"

namespace httplib {
class Server;
}

namespace ktune {

enum class RuleKind { AlwaysCorrect, NeverCorrect, Bernoulli, Scripted };

struct AnswerRule {
    RuleKind kind = RuleKind::NeverCorrect;
    double p_greedy = 0.0;   // Bernoulli: per-generation success at T = 0
    double p_sampled = 0.0;  // Bernoulli: per-sample success at T > 0
    std::vector<bool> greedy_rounds;             // Scripted: round r correct?
    std::vector<std::uint32_t> sampled_rounds;   // Scripted: correct samples in round r

    static AnswerRule always();
    static AnswerRule never();
    static AnswerRule bernoulli(double p_greedy, double p_sampled);
    static AnswerRule scripted(std::vector<bool> greedy, std::vector<std::uint32_t> sampled);
};

struct ModelPolicy {
    std::optional<AnswerRule> fallback;
    std::map<std::string, AnswerRule> pairs;
};

// Deterministic fault hook: requests whose id matches `pattern` fail their first
// `attempts` tries, or every try when attempts is 0.
struct FailureInjection {
    std::string pattern;
    std::uint32_t attempts = 0;
};

struct AnswerPolicy {
    std::uint64_t seed = 0;
    std::string distractor;
    AnswerRule fallback = AnswerRule::never();
    std::map<std::string, AnswerRule> pairs;
    std::map<std::string, ModelPolicy> models;
    std::optional<FailureInjection> failure;

    // Most specific first: model+pair, model default, pair, global default.
    const AnswerRule& rule_for(const std::string& model, const std::string& qa_id) const;

    // Throws ValidationError(BadPolicy) on probabilities outside [0,1].
    void validate() const;
};

AnswerPolicy policy_from_json(const std::string& text);
AnswerPolicy load_policy(const fs::path& path);

// Scripted inference backend. The target pair and request id are read from the id
// tag line the probe engine prepends in mock mode; answers are answers[0] verbatim or
// the distractor. Output depends only on (seed, model, request id, policy).
class MockBackend final : public InferenceBackend {
public:
    MockBackend(Corpus corpus, AnswerPolicy policy);

    std::vector<std::string> generate(const GenerationRequest& request) override;

    const Corpus& corpus() const noexcept { return corpus_; }

private:
    bool should_fail(const std::string& request_id);

    Corpus corpus_;
    AnswerPolicy policy_;
    std::optional<std::regex> fail_pattern_;
    std::mutex fail_mu_;
    std::map<std::string, std::uint32_t> fail_counts_;
};

// Serves a backend over the HTTP completion contract. Listens on a background thread.
class MockServer {
public:
    explicit MockServer(InferenceBackend& backend);
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    // Binds (port 0 = any free port) and starts serving; returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

private:
    InferenceBackend& backend_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

} // namespace ktune
