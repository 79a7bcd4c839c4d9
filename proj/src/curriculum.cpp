#include "ktune/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ktune/error.hpp"
#include "ktune/formats.hpp"
#include "ktune/random.hpp"

namespace ktune {

namespace {

using Predicate = std::function<bool(KnowledgeClass initial, KnowledgeClass after)>;

bool in(KnowledgeClass c, std::initializer_list<KnowledgeClass> set) {
    return std::find(set.begin(), set.end(), c) != set.end();
}

// Train ids in id order, shuffled by seed.
std::vector<std::string> select(const Corpus& corpus, const std::function<bool(const std::string&)>& keep,
                                std::uint64_t seed, std::string_view stream) {
    std::vector<std::string> ids;
    for (const auto& p : corpus.pairs()) {
        if (p.split == Split::Train && keep(p.id)) ids.push_back(p.id);
    }
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, {"curriculum", stream}));
    rng.shuffle(ids);
    return ids;
}

} // namespace

CurriculumSpec stage1_dataset(const ClassificationSnapshot& initial, const Corpus& corpus, std::uint64_t seed) {
    CurriculumSpec spec;
    spec.strategy = Strategy::Stage1MaybeKnown;
    spec.seed = seed;
    spec.snapshot_digests = {snapshot_digest(initial)};
    spec.member_ids = select(
        corpus, [&](const std::string& id) { return initial.label(id) == KnowledgeClass::MaybeKnown; }, seed,
        "members");
    if (spec.member_ids.empty()) throw ValidationError("EmptySelection", "no MaybeKnown pairs in the initial snapshot");
    return spec;
}

CurriculumSpec stage2_dataset(Strategy strategy, const ClassificationSnapshot& initial,
                              const ClassificationSnapshot& after_stage1, const Corpus& corpus, std::uint64_t seed,
                              double replay_ratio, ReplayBase base) {
    using K = KnowledgeClass;
    Predicate origin_ok;
    switch (strategy) {
    case Strategy::S1: origin_ok = [](K i, K) { return in(i, {K::HighlyKnown, K::MaybeKnown, K::WeaklyKnown}); }; break;
    case Strategy::S2: origin_ok = [](K i, K) { return in(i, {K::HighlyKnown, K::MaybeKnown}); }; break;
    case Strategy::S3: origin_ok = [](K i, K) { return in(i, {K::MaybeKnown, K::WeaklyKnown}); }; break;
    case Strategy::S4:
    case Strategy::S5: origin_ok = [](K, K) { return true; }; break;
    default: throw ValidationError("UnknownStrategy", "stage-2 strategy must be one of s1..s5");
    }

    CurriculumSpec spec;
    spec.strategy = strategy;
    spec.seed = seed;
    spec.snapshot_digests = {snapshot_digest(initial), snapshot_digest(after_stage1)};
    spec.member_ids = select(
        corpus,
        [&](const std::string& id) {
            const auto after = after_stage1.label(id);
            return after == K::MaybeKnown && origin_ok(initial.label(id), after);
        },
        seed, "members");
    if (strategy == Strategy::S5) {
        if (!(replay_ratio >= 0.0 && replay_ratio <= 1.0)) {
            throw ValidationError("InvalidCurriculum", "replay_ratio must lie in [0,1]");
        }
        spec.replay_ratio = replay_ratio;
        spec.replay_base = base;
        spec.replay_pool_ids = select(
            corpus, [&](const std::string& id) { return after_stage1.label(id) == K::HighlyKnown; }, seed, "pool");
    }
    if (spec.member_ids.empty()) {
        throw ValidationError("EmptySelection", "strategy " + std::string(to_string(strategy)) + " selects no pairs");
    }
    spec.validate();
    return spec;
}

std::size_t replay_count(const CurriculumSpec& spec) {
    if (spec.replay_pool_ids.empty() || spec.replay_ratio <= 0.0) return 0;
    const auto population = spec.replay_base == ReplayBase::Pool ? spec.replay_pool_ids.size() : spec.member_ids.size();
    // The epsilon absorbs representation error, e.g. 0.29 * 100 = 28.999999999999996.
    const auto want = static_cast<std::size_t>(std::floor(spec.replay_ratio * static_cast<double>(population) + 1e-9));
    return std::min(want, spec.replay_pool_ids.size());
}

std::vector<std::string> replay_epoch_mix(const CurriculumSpec& spec, std::uint32_t epoch) {
    const auto ep = std::to_string(epoch);
    std::vector<std::string> mix = spec.member_ids;
    const auto k = replay_count(spec);
    if (k > 0) {
        Rng pick(derive_seed(spec.seed, {"replay-sample", ep}));
        for (auto i : pick.sample_indices(spec.replay_pool_ids.size(), k)) mix.push_back(spec.replay_pool_ids[i]);
    }
    Rng order(derive_seed(spec.seed, {"epoch-order", ep}));
    order.shuffle(mix);
    return mix;
}

} // namespace ktune
