#include "check.hpp"

#include "ktune/classifier.hpp"
#include "ktune/probe.hpp"

using namespace ktune;

namespace {

KnowledgeClass cls(std::uint64_t g, std::uint64_t s) {
    return classify(ProbeEstimate{Rational(g, 10), Rational(s, 160)});
}

} // namespace

TEST_CASE("the four classes") {
    CHECK(cls(10, 160) == KnowledgeClass::HighlyKnown);
    CHECK(cls(3, 0) == KnowledgeClass::MaybeKnown);
    CHECK(cls(0, 7) == KnowledgeClass::WeaklyKnown);
    CHECK(cls(0, 0) == KnowledgeClass::Unknown);
    CHECK(cls(10, 0) == KnowledgeClass::HighlyKnown);
    CHECK(cls(9, 160) == KnowledgeClass::MaybeKnown);
}

TEST_CASE("coarsening") {
    CHECK(coarsen(KnowledgeClass::WeaklyKnown) == CoarseClass::Residual);
    CHECK(coarsen(KnowledgeClass::Unknown) == CoarseClass::Residual);
    CHECK(coarsen(KnowledgeClass::HighlyKnown) == CoarseClass::HighlyKnown);
    CHECK(coarsen(KnowledgeClass::MaybeKnown) == CoarseClass::MaybeKnown);
}

TEST_CASE("the predicates partition the estimate grid") {
    for (std::uint64_t g = 0; g <= 10; ++g) {
        for (std::uint64_t s = 0; s <= 160; ++s) {
            const Rational pg(g, 10), ps(s, 160);
            const bool hk = pg == Rational(1, 1);
            const bool mk = Rational(0, 1) < pg && pg < Rational(1, 1);
            const bool wk = pg == Rational(0, 1) && Rational(0, 1) < ps;
            const bool un = pg == Rational(0, 1) && ps == Rational(0, 1);
            REQUIRE(int(hk) + int(mk) + int(wk) + int(un) == 1);
            const auto c = classify({pg, ps});
            CHECK(c == (hk ? KnowledgeClass::HighlyKnown
                           : mk ? KnowledgeClass::MaybeKnown
                                : wk ? KnowledgeClass::WeaklyKnown : KnowledgeClass::Unknown));
        }
    }
}

TEST_CASE("more greedy hits never move a pair down") {
    auto rank = [](KnowledgeClass c) {
        return c == KnowledgeClass::HighlyKnown ? 2 : c == KnowledgeClass::MaybeKnown ? 1 : 0;
    };
    for (std::uint64_t s = 0; s <= 160; s += 7) {
        for (std::uint64_t g = 0; g < 10; ++g) CHECK(rank(cls(g, s)) <= rank(cls(g + 1, s)));
    }
}

TEST_CASE("estimate is exact division") {
    auto e = estimate(ProbeOutcome{"a", 3, 10, 0, 160});
    CHECK(e.p_greedy == Rational(3, 10));
    CHECK(e.p_sampled.is_zero());
    e = estimate(ProbeOutcome{"a", 10, 10, 160, 160});
    CHECK(e.p_greedy.is_one());
    CHECK(e.p_sampled.is_one());
    e = estimate(ProbeOutcome{"a", 0, 10, 7, 160});
    CHECK(e.p_sampled == Rational(7, 160));
    CHECK(e.p_greedy.num() * 10 / e.p_greedy.den() == 0);
    CHECK_ERROR_CODE(estimate(ProbeOutcome{"a", 0, 0, 0, 160}), "ZeroTotal");
    CHECK_ERROR_CODE(estimate(ProbeOutcome{"a", 11, 10, 0, 160}), "InvalidOutcome");
}

TEST_CASE("make_snapshot over the four estimates") {
    std::vector<QAPair> pairs;
    for (auto id : {"hk", "mk", "wk", "un"}) pairs.push_back({id, "q?", {"a"}, Split::Train, {}});
    const auto corpus = validate_corpus(pairs);
    std::map<std::string, ProbeOutcome> outcomes = {{"hk", {"hk", 10, 10, 160, 160}},
                                                    {"mk", {"mk", 3, 10, 0, 160}},
                                                    {"wk", {"wk", 0, 10, 7, 160}},
                                                    {"un", {"un", 0, 10, 0, 160}}};
    const auto snap = make_snapshot(corpus, outcomes, "base", "digest", 42);
    CHECK(snap.labels.size() == 4);
    CHECK(snap.label("hk") == KnowledgeClass::HighlyKnown);
    CHECK(snap.label("mk") == KnowledgeClass::MaybeKnown);
    CHECK(snap.label("wk") == KnowledgeClass::WeaklyKnown);
    CHECK(snap.label("un") == KnowledgeClass::Unknown);
    CHECK(snap.model_ref == "base");
    CHECK(snap.seed == 42);
    CHECK_FALSE(snap.created_at.empty());

    outcomes.erase("wk");
    CHECK_ERROR_CODE(make_snapshot(corpus, outcomes, "base", "digest", 42), "MissingOutcome");
    CHECK(make_snapshot(Corpus{}, {}, "base", "d", 1).labels.empty());
}
