#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "ktune/backend.hpp"
#include "ktune/formats.hpp"
#include "ktune/prompt.hpp"
#include "ktune/types.hpp"

namespace ktune {

// How the samples of one sampled round are requested.
enum class SampleMode {
    Batched,   // one call with n = samples_per_round, one shared prompt
    Separate,  // samples_per_round calls with n = 1, same prompt
};

std::string_view to_string(SampleMode m);
SampleMode parse_sample_mode(std::string_view s);

struct ProbeConfig {
    DecodingSpec greedy = DecodingSpec::greedy();
    DecodingSpec sampled = DecodingSpec::sampled();
    std::size_t shots = kDefaultShots;
    MatcherPolicy matcher;
    SampleMode sample_mode = SampleMode::Batched;
    std::string type_key = "pattern";
    // Prefix each prompt with a machine-readable id line for the mock backend.
    bool embed_id_tag = false;

    // Throws ValidationError on an unusable configuration.
    void validate() const;
};

// Digest over everything that changes what a probe measures: decoding specs, shot
// count, prompt layout, matcher policy, sampling mode, id tagging, and the exemplar pool.
std::string probe_config_digest(const ProbeConfig& config, std::string_view exemplar_pool_digest);

// Id line used by the mock backend: "#ktune-mock {json}\n".
std::string id_tag_line(std::string_view qa_id, std::string_view request_id);

struct ProbeContext {
    const ExemplarIndex& exemplars;
    InferenceBackend& backend;
    std::string model;
    std::uint64_t seed = 42;
    ProbeConfig config;
    RetryPolicy retry;
};

struct Tally {
    std::uint32_t correct = 0;
    std::uint32_t total = 0;

    friend bool operator==(const Tally&, const Tally&) = default;
};

// One single-sample greedy generation per round, each with a freshly drawn prompt.
Tally run_greedy_probe(const QAPair& pair, const ProbeContext& ctx);

// rounds x samples_per_round sampled generations; one fresh prompt per round.
Tally run_sampled_probe(const QAPair& pair, const ProbeContext& ctx);

ProbeOutcome probe_pair(const QAPair& pair, const ProbeContext& ctx);

// Exact P_correct fractions. Throws ValidationError(ZeroTotal).
ProbeEstimate estimate(const ProbeOutcome& outcome);

struct CampaignOptions {
    std::size_t parallelism = 1;
    std::optional<fs::path> checkpoint_path;
    // Persist the checkpoint after this many newly completed pairs.
    std::size_t checkpoint_every = 256;
    std::string config_digest;
};

// Probes every pair of `corpus`. Resumes from the checkpoint when it exists, and
// persists progress atomically. Results do not depend on parallelism or scheduling.
// Throws CampaignError naming the pending ids when any pair exhausts its retries.
std::map<std::string, ProbeOutcome> run_campaign(const Corpus& corpus, const ProbeContext& ctx,
                                                 const CampaignOptions& options);

} // namespace ktune
