#include "ktune/probe.hpp"

#include <json.hpp>

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "ktune/error.hpp"

namespace ktune {

using nlohmann::json;

namespace {

std::string make_prompt(const QAPair& pair, const ProbeContext& ctx, std::string_view mode, std::uint32_t round,
                        std::string_view request_id) {
    Rng rng(derive_seed(ctx.seed, {pair.id, "prompt", mode, std::to_string(round)}));
    auto text = ctx.exemplars.build(pair, ctx.config.shots, rng).render();
    if (ctx.config.embed_id_tag) text.insert(0, id_tag_line(pair.id, request_id));
    return text;
}

GenerationRequest make_request(const ProbeContext& ctx, const DecodingSpec& spec, std::uint32_t n,
                               std::string prompt, std::string request_id) {
    GenerationRequest r;
    r.model = ctx.model;
    r.prompt = std::move(prompt);
    r.temperature = spec.temperature;
    r.n = n;
    r.top_k = spec.top_k;
    r.max_new_tokens = spec.max_new_tokens;
    r.seed = derive_seed(ctx.seed, {request_id}) & 0x7fffffffULL;
    r.request_id = std::move(request_id);
    return r;
}

std::uint32_t count_matches(const std::vector<std::string>& outputs, const QAPair& pair, const MatcherPolicy& policy) {
    std::uint32_t c = 0;
    for (const auto& o : outputs) c += match_answer(o, pair, policy) ? 1 : 0;
    return c;
}

json spec_json(const DecodingSpec& s) {
    return json{{"temperature", s.temperature},
                {"samples_per_round", s.samples_per_round},
                {"top_k", s.top_k ? json(*s.top_k) : json(nullptr)},
                {"rounds", s.rounds},
                {"max_new_tokens", s.max_new_tokens}};
}

} // namespace

std::string_view to_string(SampleMode m) {
    return m == SampleMode::Batched ? "batched" : "separate";
}

SampleMode parse_sample_mode(std::string_view s) {
    if (s == "batched") return SampleMode::Batched;
    if (s == "separate") return SampleMode::Separate;
    throw ValidationError("BadSampleMode", "sample mode must be 'batched' or 'separate', got '" + std::string(s) + "'");
}

void ProbeConfig::validate() const {
    greedy.validate();
    sampled.validate();
    if (!greedy.is_greedy()) throw ValidationError("InvalidDecodingSpec", "greedy spec needs temperature 0");
    if (sampled.is_greedy()) throw ValidationError("InvalidDecodingSpec", "sampled spec needs temperature > 0");
    if (shots == 0) throw ValidationError("InvalidProbeConfig", "shot count must be positive");
}

std::string probe_config_digest(const ProbeConfig& c, std::string_view exemplar_pool_digest) {
    json j{{"layout", kPromptLayoutId},
           {"shots", c.shots},
           {"greedy", spec_json(c.greedy)},
           {"sampled", spec_json(c.sampled)},
           {"matcher", c.matcher.describe()},
           {"sample_mode", to_string(c.sample_mode)},
           {"type_key", c.type_key},
           {"id_tag", c.embed_id_tag},
           {"pool", exemplar_pool_digest}};
    return sha256_hex(j.dump());
}

std::string id_tag_line(std::string_view qa_id, std::string_view request_id) {
    return "#ktune-mock " + json{{"qa_id", qa_id}, {"request_id", request_id}}.dump() + "\n";
}

Tally run_greedy_probe(const QAPair& pair, const ProbeContext& ctx) {
    const auto& spec = ctx.config.greedy;
    Tally t;
    for (std::uint32_t round = 1; round <= spec.rounds; ++round) {
        auto rid = pair.id + "#g" + std::to_string(round);
        auto prompt = make_prompt(pair, ctx, "greedy", round, rid);
        const auto out = generate_with_retry(ctx.backend, make_request(ctx, spec, 1, std::move(prompt), std::move(rid)),
                                             ctx.retry);
        t.correct += count_matches(out, pair, ctx.config.matcher);
        t.total += 1;
    }
    return t;
}

Tally run_sampled_probe(const QAPair& pair, const ProbeContext& ctx) {
    const auto& spec = ctx.config.sampled;
    const auto n = spec.samples_per_round;
    Tally t;
    for (std::uint32_t round = 1; round <= spec.rounds; ++round) {
        const auto base_rid = pair.id + "#s" + std::to_string(round);
        if (ctx.config.sample_mode == SampleMode::Batched) {
            auto prompt = make_prompt(pair, ctx, "sampled", round, base_rid);
            const auto out = generate_with_retry(ctx.backend, make_request(ctx, spec, n, std::move(prompt), base_rid),
                                                 ctx.retry);
            t.correct += count_matches(out, pair, ctx.config.matcher);
        } else {
            for (std::uint32_t j = 1; j <= n; ++j) {
                auto rid = base_rid + "." + std::to_string(j);
                auto prompt = make_prompt(pair, ctx, "sampled", round, rid);
                const auto out = generate_with_retry(ctx.backend, make_request(ctx, spec, 1, std::move(prompt), rid),
                                                     ctx.retry);
                t.correct += count_matches(out, pair, ctx.config.matcher);
            }
        }
        t.total += n;
    }
    return t;
}

ProbeOutcome probe_pair(const QAPair& pair, const ProbeContext& ctx) {
    const auto g = run_greedy_probe(pair, ctx);
    const auto s = run_sampled_probe(pair, ctx);
    return ProbeOutcome{pair.id, g.correct, g.total, s.correct, s.total};
}

ProbeEstimate estimate(const ProbeOutcome& o) {
    if (o.greedy_total == 0 || o.sampled_total == 0) {
        throw ValidationError("ZeroTotal", "outcome for '" + o.qa_id + "' has a zero total");
    }
    if (o.greedy_correct > o.greedy_total || o.sampled_correct > o.sampled_total) {
        throw ValidationError("InvalidOutcome", "outcome for '" + o.qa_id + "' has correct > total");
    }
    return ProbeEstimate{Rational(o.greedy_correct, o.greedy_total), Rational(o.sampled_correct, o.sampled_total)};
}

std::map<std::string, ProbeOutcome> run_campaign(const Corpus& corpus, const ProbeContext& ctx,
                                                 const CampaignOptions& options) {
    if (options.parallelism == 0) throw ValidationError("InvalidParallelism", "parallelism must be at least 1");
    ctx.config.validate();

    CampaignCheckpoint state;
    state.config_digest = options.config_digest;
    state.model_ref = ctx.model;
    state.seed = ctx.seed;

    if (options.checkpoint_path && fs::exists(*options.checkpoint_path)) {
        auto loaded = load_checkpoint(*options.checkpoint_path);
        if (loaded.config_digest != state.config_digest || loaded.model_ref != state.model_ref ||
            loaded.seed != state.seed) {
            throw ValidationError("CheckpointMismatch", "checkpoint '" + options.checkpoint_path->string() +
                                                            "' was written for a different model, seed or probe config");
        }
        for (auto& [id, outcome] : loaded.completed) {
            if (!corpus.find(id)) {
                throw ValidationError("CheckpointMismatch", "checkpoint id '" + id + "' is not in the corpus");
            }
            state.completed.emplace(id, std::move(outcome));
        }
    }

    std::vector<const QAPair*> todo;
    for (const auto& p : corpus.pairs()) {
        if (!state.completed.count(p.id)) todo.push_back(&p);
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::size_t since_flush = 0;
    std::string last_failure;
    std::exception_ptr fatal;

    auto pending_now = [&] {
        std::set<std::string> pending;
        for (const auto& p : corpus.pairs()) {
            if (!state.completed.count(p.id)) pending.insert(p.id);
        }
        return pending;
    };
    auto flush = [&] {
        if (!options.checkpoint_path) return;
        state.pending = pending_now();
        save_checkpoint(*options.checkpoint_path, state);
        since_flush = 0;
    };

    auto worker = [&] {
        for (;;) {
            if (abort.load()) return;
            const auto i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const auto& pair = *todo[i];
            try {
                auto outcome = probe_pair(pair, ctx);
                std::lock_guard lock(mu);
                state.completed.emplace(pair.id, std::move(outcome));
                if (++since_flush >= std::max<std::size_t>(1, options.checkpoint_every)) flush();
            } catch (const BackendError& e) {
                std::lock_guard lock(mu);
                last_failure = e.what();
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
                abort = true;
                return;
            }
        }
    };

    {
        const auto threads = std::min(options.parallelism, std::max<std::size_t>(1, todo.size()));
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    flush();
    if (fatal) std::rethrow_exception(fatal);
    auto pending = pending_now();
    if (!pending.empty()) throw CampaignError({pending.begin(), pending.end()}, last_failure);
    return std::move(state.completed);
}

} // namespace ktune
