#include "check.hpp"

#include <algorithm>
#include <set>

#include "ktune/curriculum.hpp"
#include "ktune/random.hpp"
#include "support.hpp"

using namespace ktune;

namespace {

std::set<std::string> as_set(const std::vector<std::string>& v) {
    return {v.begin(), v.end()};
}

struct QwenFixture {
    test::SnapshotPair snaps = test::one_stage_fixture(test::kQwenOneStage);
    Corpus corpus = test::corpus_for(snaps.before);
};

const QwenFixture& qwen() {
    static const QwenFixture f;
    return f;
}

} // namespace

TEST_CASE("stage one takes the initially MaybeKnown pairs") {
    const auto& f = qwen();
    const auto spec = stage1_dataset(f.snaps.before, f.corpus, 42);
    CHECK(spec.member_ids.size() == 36897);
    CHECK(spec.strategy == Strategy::Stage1MaybeKnown);
    CHECK(spec.replay_pool_ids.empty());
    for (const auto& id : spec.member_ids) REQUIRE(f.snaps.before.label(id) == KnowledgeClass::MaybeKnown);
    CHECK_FALSE(std::is_sorted(spec.member_ids.begin(), spec.member_ids.end()));
    CHECK(stage1_dataset(f.snaps.before, f.corpus, 42) == spec);
}

TEST_CASE("stage one edge cases") {
    ClassificationSnapshot s;
    s.labels = {{"a", KnowledgeClass::HighlyKnown}, {"b", KnowledgeClass::MaybeKnown},
                {"c", KnowledgeClass::WeaklyKnown}, {"d", KnowledgeClass::Unknown}};
    const auto corpus = test::corpus_for(s);
    CHECK(stage1_dataset(s, corpus, 1).member_ids == std::vector<std::string>{"b"});
    s.labels["b"] = KnowledgeClass::Unknown;
    CHECK_ERROR_CODE(stage1_dataset(s, corpus, 1), "EmptySelection");
}

TEST_CASE("stage one ignores test pairs") {
    ClassificationSnapshot s;
    s.labels = {{"a", KnowledgeClass::MaybeKnown}, {"b", KnowledgeClass::MaybeKnown}};
    const auto corpus = validate_corpus({{"a", "q?", {"x"}, Split::Train, {}}, {"b", "q?", {"y"}, Split::Test, {}}});
    CHECK(stage1_dataset(s, corpus, 1).member_ids == std::vector<std::string>{"a"});
}

TEST_CASE("strategy sizes on the Qwen fixture") {
    const auto& f = qwen();
    auto size = [&](Strategy s) { return stage2_dataset(s, f.snaps.before, f.snaps.after, f.corpus, 42).member_ids.size(); };
    CHECK(size(Strategy::S4) == 3952 + 9892 + 4889 + 1932);
    CHECK(size(Strategy::S4) == 20665);
    CHECK(size(Strategy::S2) == 13844);
    CHECK(size(Strategy::S1) == 18733);
    CHECK(size(Strategy::S3) == 14781);
    const auto s5 = stage2_dataset(Strategy::S5, f.snaps.before, f.snaps.after, f.corpus, 42);
    CHECK(s5.member_ids.size() == 20665);
    CHECK(s5.replay_pool_ids.size() == 27282 + 19059 + 3091 + 527);
    CHECK(s5.replay_pool_ids.size() == 49959);
    CHECK(s5.replay_ratio == 0.2);
    CHECK(replay_count(s5) == 9991);
    CHECK_ERROR_CODE(stage2_dataset(Strategy::Stage1MaybeKnown, f.snaps.before, f.snaps.after, f.corpus, 42),
                     "UnknownStrategy");
}

TEST_CASE("strategy set algebra on random snapshots") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        ClassificationSnapshot a, b;
        for (int i = 0; i < 200; ++i) {
            const auto id = "x" + std::to_string(i);
            a.labels[id] = kAllClasses[rng.below(4)];
            b.labels[id] = kAllClasses[rng.below(4)];
        }
        b.labels["x0"] = KnowledgeClass::MaybeKnown;
        a.labels["x0"] = KnowledgeClass::MaybeKnown;
        const auto corpus = test::corpus_for(a);
        auto members = [&](Strategy s) { return as_set(stage2_dataset(s, a, b, corpus, 1).member_ids); };
        const auto s1 = members(Strategy::S1), s2 = members(Strategy::S2), s3 = members(Strategy::S3),
                   s4 = members(Strategy::S4);
        std::set<std::string> unknown_to_mk, union_set;
        for (const auto& [id, l] : b.labels) {
            if (l == KnowledgeClass::MaybeKnown && a.label(id) == KnowledgeClass::Unknown) unknown_to_mk.insert(id);
        }
        union_set.insert(s2.begin(), s2.end());
        union_set.insert(s3.begin(), s3.end());
        union_set.insert(unknown_to_mk.begin(), unknown_to_mk.end());
        CHECK(union_set == s4);
        std::set<std::string> s4_minus_unknown;
        std::set_difference(s4.begin(), s4.end(), unknown_to_mk.begin(), unknown_to_mk.end(),
                            std::inserter(s4_minus_unknown, s4_minus_unknown.end()));
        CHECK(s1 == s4_minus_unknown);
        const auto s5 = stage2_dataset(Strategy::S5, a, b, corpus, 1);
        for (const auto& id : s5.replay_pool_ids) CHECK(s4.count(id) == 0);
    }
}

TEST_CASE("replay epoch mix") {
    const auto& f = qwen();
    const auto s5 = stage2_dataset(Strategy::S5, f.snaps.before, f.snaps.after, f.corpus, 42);
    const auto e1 = replay_epoch_mix(s5, 1);
    const auto e2 = replay_epoch_mix(s5, 2);
    CHECK(e1.size() == 20665 + 9991);
    CHECK(e2.size() == e1.size());
    CHECK(as_set(e1).size() == e1.size());
    CHECK(replay_epoch_mix(s5, 1) == e1);

    const auto members = as_set(s5.member_ids);
    std::set<std::string> r1, r2;
    for (const auto& id : e1) {
        if (!members.count(id)) r1.insert(id);
    }
    for (const auto& id : e2) {
        if (!members.count(id)) r2.insert(id);
    }
    CHECK(r1.size() == 9991);
    CHECK(r1 != r2);
    const auto pool = as_set(s5.replay_pool_ids);
    for (const auto& id : r1) REQUIRE(pool.count(id) == 1);

    auto no_replay = s5;
    no_replay.replay_ratio = 0.0;
    CHECK(as_set(replay_epoch_mix(no_replay, 1)) == members);
}

TEST_CASE("replay count floors and can use the member set as base") {
    CurriculumSpec s;
    s.strategy = Strategy::S5;
    s.replay_ratio = 0.29;
    for (int i = 0; i < 100; ++i) s.replay_pool_ids.push_back("p" + std::to_string(i));
    for (int i = 0; i < 10; ++i) s.member_ids.push_back("m" + std::to_string(i));
    CHECK(replay_count(s) == 29);
    s.replay_ratio = 0.2;
    s.replay_base = ReplayBase::Members;
    CHECK(replay_count(s) == 2);
    s.replay_ratio = 1.0;
    CHECK(replay_count(s) == 10);
    s.replay_pool_ids.resize(3);
    CHECK(replay_count(s) == 3);
}
