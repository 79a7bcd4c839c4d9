#include "ktune/mock.hpp"

#include <httplib.h>
#include <json.hpp>

#include <charconv>

#include "ktune/error.hpp"
#include "ktune/random.hpp"

namespace ktune {

using nlohmann::json;

namespace {

constexpr std::string_view kTagPrefix = "#ktune-mock ";

struct Tag {
    std::string qa_id;
    std::string request_id;
};

Tag parse_tag(const std::string& prompt) {
    if (prompt.compare(0, kTagPrefix.size(), kTagPrefix) != 0) {
        throw ValidationError("UnknownQA", "prompt carries no mock id tag");
    }
    const auto eol = prompt.find('\n');
    try {
        const auto j = json::parse(prompt.substr(kTagPrefix.size(), eol - kTagPrefix.size()));
        return Tag{j.at("qa_id").get<std::string>(), j.at("request_id").get<std::string>()};
    } catch (const json::exception& e) {
        throw ValidationError("UnknownQA", std::string("unreadable mock id tag: ") + e.what());
    }
}

// Request ids look like "<qa>#g3", "<qa>#s3", "<qa>#s3.7" or "<qa>#e1".
struct RequestCoords {
    std::uint32_t round = 1;
    std::optional<std::uint32_t> sample;  // 1-based, separate-call sampling only
};

RequestCoords parse_coords(const std::string& request_id) {
    RequestCoords c;
    const auto hash = request_id.rfind('#');
    if (hash == std::string::npos || hash + 2 > request_id.size()) return c;
    const char* first = request_id.data() + hash + 2;
    const char* last = request_id.data() + request_id.size();
    std::uint32_t v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec == std::errc{} && v > 0) c.round = v;
    if (p < last && *p == '.') {
        std::uint32_t s = 0;
        if (std::from_chars(p + 1, last, s).ec == std::errc{} && s > 0) c.sample = s;
    }
    return c;
}

AnswerRule rule_from_json(const json& j) {
    const auto kind = j.at("rule").get<std::string>();
    if (kind == "always") return AnswerRule::always();
    if (kind == "never") return AnswerRule::never();
    if (kind == "bernoulli") return AnswerRule::bernoulli(j.value("p_greedy", 0.0), j.value("p_sampled", 0.0));
    if (kind == "scripted") {
        return AnswerRule::scripted(j.value("greedy", std::vector<bool>{}),
                                    j.value("sampled", std::vector<std::uint32_t>{}));
    }
    throw ValidationError("BadPolicy", "unknown answer rule '" + kind + "'");
}

std::map<std::string, AnswerRule> rules_from_json(const json& j) {
    std::map<std::string, AnswerRule> out;
    for (const auto& [id, r] : j.items()) out.emplace(id, rule_from_json(r));
    return out;
}

void check_rule(const AnswerRule& r) {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(r.p_greedy) || !in_unit(r.p_sampled)) {
        throw ValidationError("BadPolicy", "Bernoulli probabilities must lie in [0,1]");
    }
}

} // namespace

AnswerRule AnswerRule::always() {
    AnswerRule r;
    r.kind = RuleKind::AlwaysCorrect;
    return r;
}

AnswerRule AnswerRule::never() {
    return AnswerRule{};
}

AnswerRule AnswerRule::bernoulli(double p_greedy, double p_sampled) {
    AnswerRule r;
    r.kind = RuleKind::Bernoulli;
    r.p_greedy = p_greedy;
    r.p_sampled = p_sampled;
    return r;
}

AnswerRule AnswerRule::scripted(std::vector<bool> greedy, std::vector<std::uint32_t> sampled) {
    AnswerRule r;
    r.kind = RuleKind::Scripted;
    r.greedy_rounds = std::move(greedy);
    r.sampled_rounds = std::move(sampled);
    return r;
}

const AnswerRule& AnswerPolicy::rule_for(const std::string& model, const std::string& qa_id) const {
    if (auto m = models.find(model); m != models.end()) {
        if (auto p = m->second.pairs.find(qa_id); p != m->second.pairs.end()) return p->second;
        if (m->second.fallback) return *m->second.fallback;
    }
    if (auto p = pairs.find(qa_id); p != pairs.end()) return p->second;
    return fallback;
}

void AnswerPolicy::validate() const {
    check_rule(fallback);
    for (const auto& [id, r] : pairs) check_rule(r);
    for (const auto& [name, m] : models) {
        if (m.fallback) check_rule(*m.fallback);
        for (const auto& [id, r] : m.pairs) check_rule(r);
    }
}

AnswerPolicy policy_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        AnswerPolicy p;
        p.seed = j.value("seed", std::uint64_t{0});
        p.distractor = j.value("distractor", "");
        if (j.contains("default")) p.fallback = rule_from_json(j["default"]);
        if (j.contains("pairs")) p.pairs = rules_from_json(j["pairs"]);
        if (j.contains("models")) {
            for (const auto& [name, m] : j["models"].items()) {
                ModelPolicy mp;
                if (m.contains("default")) mp.fallback = rule_from_json(m["default"]);
                if (m.contains("pairs")) mp.pairs = rules_from_json(m["pairs"]);
                p.models.emplace(name, std::move(mp));
            }
        }
        if (j.contains("fail")) {
            p.failure = FailureInjection{j["fail"].at("pattern").get<std::string>(), j["fail"].value("attempts", 0u)};
        }
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw ValidationError("BadPolicy", e.what());
    }
}

AnswerPolicy load_policy(const fs::path& path) {
    return policy_from_json(read_file(path));
}

MockBackend::MockBackend(Corpus corpus, AnswerPolicy policy) : corpus_(std::move(corpus)), policy_(std::move(policy)) {
    policy_.validate();
    if (policy_.failure) {
        try {
            fail_pattern_.emplace(policy_.failure->pattern);
        } catch (const std::regex_error& e) {
            throw ValidationError("BadPolicy", "invalid failure pattern: " + std::string(e.what()));
        }
    }
}

bool MockBackend::should_fail(const std::string& request_id) {
    if (!fail_pattern_ || !std::regex_search(request_id, *fail_pattern_)) return false;
    if (policy_.failure->attempts == 0) return true;
    std::lock_guard lock(fail_mu_);
    return ++fail_counts_[request_id] <= policy_.failure->attempts;
}

std::vector<std::string> MockBackend::generate(const GenerationRequest& request) {
    const auto tag = parse_tag(request.prompt);
    const auto* pair = corpus_.find(tag.qa_id);
    if (!pair) throw ValidationError("UnknownQA", "mock corpus has no pair '" + tag.qa_id + "'");
    if (should_fail(tag.request_id)) throw BackendError("InjectedFailure", "injected failure for " + tag.request_id);

    const auto& rule = policy_.rule_for(request.model, tag.qa_id);
    const auto coords = parse_coords(tag.request_id);
    const bool greedy = request.temperature == 0.0;

    auto correct = [&](std::uint32_t j) {
        switch (rule.kind) {
        case RuleKind::AlwaysCorrect: return true;
        case RuleKind::NeverCorrect: return false;
        case RuleKind::Bernoulli: {
            const double p = greedy ? rule.p_greedy : rule.p_sampled;
            const auto bits = derive_seed(policy_.seed, {request.model, tag.request_id, std::to_string(j)});
            return unit_interval(bits) < p;
        }
        case RuleKind::Scripted: {
            const auto r = coords.round - 1;
            if (greedy) return r < rule.greedy_rounds.size() && rule.greedy_rounds[r];
            const std::uint32_t index = coords.sample ? *coords.sample - 1 : j;
            return r < rule.sampled_rounds.size() && index < rule.sampled_rounds[r];
        }
        }
        return false;
    };

    std::vector<std::string> out;
    out.reserve(request.n);
    for (std::uint32_t j = 0; j < request.n; ++j) {
        out.push_back(correct(j) ? pair->canonical_answer() : policy_.distractor);
    }
    return out;
}

MockServer::MockServer(InferenceBackend& backend) : backend_(backend), server_(std::make_unique<httplib::Server>()) {
    server_->Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto request = decode_completion_request(req.body);
            res.set_content(encode_completion_response(backend_.generate(request)), "application/json");
        } catch (const ValidationError& e) {
            res.status = 400;
            res.set_content(json{{"error", e.code()}, {"message", e.what()}}.dump(), "application/json");
        } catch (const Error& e) {
            res.status = 503;
            res.set_content(json{{"error", e.code()}, {"message", e.what()}}.dump(), "application/json");
        }
    });
}

MockServer::~MockServer() {
    stop();
}

int MockServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw BackendError("BindFailed", "cannot bind mock server to " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void MockServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

} // namespace ktune
