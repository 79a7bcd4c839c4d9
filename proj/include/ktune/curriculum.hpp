#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ktune/types.hpp"

namespace ktune {

inline constexpr double kDefaultReplayRatio = 0.2;

// Train-split pairs labelled MaybeKnown in the initial snapshot, sorted by id and
// then shuffled by seed. Throws ValidationError(EmptySelection, MissingLabel).
CurriculumSpec stage1_dataset(const ClassificationSnapshot& initial, const Corpus& corpus, std::uint64_t seed);

// Second-stage sets over (initial, after-stage-1) labels:
//   S1: after = MK and initial in {HK, MK, WK}
//   S2: after = MK and initial in {HK, MK}
//   S3: after = MK and initial in {MK, WK}
//   S4: after = MK
//   S5: S4 members, plus a replay pool of after = HK pairs mixed in per epoch.
// `replay_ratio` is only used for S5. Throws ValidationError(UnknownStrategy, EmptySelection).
CurriculumSpec stage2_dataset(Strategy strategy, const ClassificationSnapshot& initial,
                              const ClassificationSnapshot& after_stage1, const Corpus& corpus, std::uint64_t seed,
                              double replay_ratio = kDefaultReplayRatio, ReplayBase base = ReplayBase::Pool);

// Number of replay pairs drawn per epoch: floor(ratio * |base population|).
std::size_t replay_count(const CurriculumSpec& spec);

// One epoch's training order: members plus a fresh replay sample (without replacement),
// shuffled. Fully determined by (spec.seed, epoch). Epochs are 1-based.
std::vector<std::string> replay_epoch_mix(const CurriculumSpec& spec, std::uint32_t epoch);

} // namespace ktune
