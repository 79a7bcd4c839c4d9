#pragma once

#include <map>
#include <string>

#include "ktune/types.hpp"

namespace ktune {

// HighlyKnown iff p_greedy = 1; MaybeKnown iff 0 < p_greedy < 1; otherwise
// WeaklyKnown when p_sampled > 0 and Unknown when it is 0. Exact, no epsilon.
KnowledgeClass classify(const ProbeEstimate& est);

// WeaklyKnown and Unknown merge into Residual.
CoarseClass coarsen(KnowledgeClass c);

// Labels every pair of the corpus. Throws ValidationError(MissingOutcome).
ClassificationSnapshot make_snapshot(const Corpus& corpus, const std::map<std::string, ProbeOutcome>& outcomes,
                                     std::string model_ref, std::string digest, std::uint64_t seed);

} // namespace ktune
