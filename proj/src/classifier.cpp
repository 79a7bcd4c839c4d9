#include "ktune/classifier.hpp"

#include "ktune/error.hpp"
#include "ktune/io.hpp"
#include "ktune/probe.hpp"

namespace ktune {

KnowledgeClass classify(const ProbeEstimate& est) {
    if (est.p_greedy.is_one()) return KnowledgeClass::HighlyKnown;
    if (!est.p_greedy.is_zero()) return KnowledgeClass::MaybeKnown;
    return est.p_sampled.is_zero() ? KnowledgeClass::Unknown : KnowledgeClass::WeaklyKnown;
}

CoarseClass coarsen(KnowledgeClass c) {
    switch (c) {
    case KnowledgeClass::HighlyKnown: return CoarseClass::HighlyKnown;
    case KnowledgeClass::MaybeKnown: return CoarseClass::MaybeKnown;
    case KnowledgeClass::WeaklyKnown:
    case KnowledgeClass::Unknown: return CoarseClass::Residual;
    }
    return CoarseClass::Residual;
}

ClassificationSnapshot make_snapshot(const Corpus& corpus, const std::map<std::string, ProbeOutcome>& outcomes,
                                     std::string model_ref, std::string digest, std::uint64_t seed) {
    ClassificationSnapshot snap;
    snap.model_ref = std::move(model_ref);
    snap.probe_config_digest = std::move(digest);
    snap.seed = seed;
    snap.created_at = utc_timestamp();
    for (const auto& p : corpus.pairs()) {
        auto it = outcomes.find(p.id);
        if (it == outcomes.end()) throw ValidationError("MissingOutcome", "no probe outcome for '" + p.id + "'");
        snap.labels.emplace(p.id, classify(estimate(it->second)));
    }
    return snap;
}

} // namespace ktune
