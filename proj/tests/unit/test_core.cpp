#include "check.hpp"

#include "ktune/formats.hpp"
#include "ktune/types.hpp"
#include "support.hpp"

using namespace ktune;

namespace {

QAPair pair(std::string id, std::string q, std::vector<std::string> a, Split s = Split::Train) {
    return QAPair{std::move(id), std::move(q), std::move(a), s, {}};
}

} // namespace

TEST_CASE("validate_corpus accepts well-formed pairs") {
    auto c = validate_corpus({pair("q1", "Who wrote Emma?", {"Jane Austen"}), pair("q2", "Capital of Peru?", {"Lima"})});
    CHECK(c.size() == 2);
    CHECK(c.at("q2").canonical_answer() == "Lima");
    CHECK(c.find("missing") == nullptr);
}

TEST_CASE("validate_corpus rejects broken pairs") {
    CHECK_ERROR_CODE(validate_corpus({pair("q1", "a?", {"x"}), pair("q1", "b?", {"y"})}), "DuplicateId");
    CHECK_ERROR_CODE(validate_corpus({pair("q1", "a?", {""})}), "EmptyAnswer");
    CHECK_ERROR_CODE(validate_corpus({pair("q1", "a?", {"x", "  "})}), "EmptyAnswer");
    CHECK_ERROR_CODE(validate_corpus({pair("q1", "a?", {})}), "EmptyAnswerList");
    CHECK_ERROR_CODE(validate_corpus({pair("q1", " \t", {"x"})}), "EmptyQuestion");
    CHECK_ERROR_CODE(validate_corpus({pair("", "a?", {"x"})}), "EmptyId");
}

TEST_CASE("duplicate id error names the id") {
    try {
        validate_corpus({pair("q1", "a?", {"x"}), pair("q1", "b?", {"y"})});
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("q1") != std::string::npos);
    }
}

TEST_CASE("subset keeps corpus order per split") {
    auto c = validate_corpus({pair("a", "1?", {"x"}), pair("b", "2?", {"y"}, Split::Test), pair("c", "3?", {"z"})});
    auto train = c.subset(Split::Train);
    REQUIRE(train.size() == 2);
    CHECK(train.pairs()[0].id == "a");
    CHECK(train.pairs()[1].id == "c");
    CHECK(c.subset(Split::Test).size() == 1);
}

TEST_CASE("decoding spec defaults and invariants") {
    const auto g = DecodingSpec::greedy();
    CHECK(g.temperature == 0.0);
    CHECK(g.samples_per_round == 1);
    CHECK(g.rounds == 10);
    const auto s = DecodingSpec::sampled();
    CHECK(s.temperature == 0.5);
    CHECK(s.samples_per_round == 16);
    CHECK(s.top_k == 40u);
    CHECK(s.rounds == 10);
    CHECK(s.max_new_tokens == 32);

    auto bad = DecodingSpec::greedy();
    bad.samples_per_round = 4;
    CHECK_ERROR_CODE(bad.validate(), "InvalidDecodingSpec");
    bad = DecodingSpec::sampled();
    bad.rounds = 0;
    CHECK_ERROR_CODE(bad.validate(), "InvalidDecodingSpec");
    bad = DecodingSpec::sampled();
    bad.temperature = -0.1;
    CHECK_ERROR_CODE(bad.validate(), "InvalidDecodingSpec");
}

TEST_CASE("rationals are exact and reduced") {
    Rational r(3, 10);
    CHECK(r.num() == 3);
    CHECK(r.den() == 10);
    CHECK(Rational(10, 10).is_one());
    CHECK(Rational(0, 160).is_zero());
    CHECK(Rational(8, 160) == Rational(1, 20));
    CHECK(Rational(1, 160) < Rational(1, 10));
    CHECK(Rational(7, 160).str() == "7/160");
    CHECK_THROWS_AS(Rational(1, 0), std::invalid_argument);
}

TEST_CASE("trainer config stage defaults") {
    const auto s1 = TrainerConfig::stage1_defaults();
    CHECK(s1.adapter_rank == 64);
    CHECK(s1.learning_rate == doctest::Approx(3e-4));
    CHECK(s1.weight_decay == 0.0);
    CHECK(s1.batch_size == 32);
    CHECK(s1.max_epochs == 10);
    CHECK(s1.schedule == "cosine");
    CHECK(s1.optimizer == "adamw");
    const auto s2 = TrainerConfig::stage2_defaults();
    CHECK(s2.learning_rate == doctest::Approx(1.5e-4));
    CHECK(s2.weight_decay == doctest::Approx(0.01));
    CHECK(s2.max_epochs == 3);
    CHECK(s2.adapter_rank == 64);
    auto bad = s1;
    bad.learning_rate = 0;
    CHECK_ERROR_CODE(bad.validate(), "InvalidTrainerConfig");
}

TEST_CASE("strategy names round-trip") {
    for (auto s : {Strategy::Stage1MaybeKnown, Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4, Strategy::S5}) {
        CHECK(parse_strategy(to_string(s)) == s);
    }
    CHECK(parse_strategy("S3") == Strategy::S3);
    CHECK_ERROR_CODE(parse_strategy("s6"), "UnknownStrategy");
}

TEST_CASE("curriculum spec invariants") {
    CurriculumSpec spec;
    spec.strategy = Strategy::S5;
    spec.replay_ratio = 0.2;
    spec.member_ids = {"a", "b"};
    spec.replay_pool_ids = {"c"};
    CHECK_NOTHROW(spec.validate());
    spec.replay_pool_ids = {"b"};
    CHECK_ERROR_CODE(spec.validate(), "InvalidCurriculum");
    spec.replay_pool_ids = {};
    spec.member_ids = {"a", "a"};
    CHECK_ERROR_CODE(spec.validate(), "InvalidCurriculum");
    spec.member_ids = {"a"};
    spec.strategy = Strategy::S4;
    CHECK_ERROR_CODE(spec.validate(), "InvalidCurriculum");
}

TEST_CASE("corpus file round-trip") {
    std::vector<QAPair> pairs = {pair("a", "Who wrote \"Emma\"?", {"Jane Austen", "Austen"}),
                                 pair("b", "Qu\xc3\xa9 es?", {"Lima"}, Split::Test)};
    pairs[0].meta["pattern"] = "author";
    const auto c = validate_corpus(pairs);
    const auto back = corpus_from_jsonl(corpus_to_jsonl(c));
    REQUIRE(back.size() == 2);
    CHECK(back.pairs()[0] == c.pairs()[0]);
    CHECK(back.pairs()[1] == c.pairs()[1]);
    CHECK(corpus_to_jsonl(back) == corpus_to_jsonl(c));
}

TEST_CASE("snapshot file round-trip keeps the timestamp out of the primary file") {
    const auto dir = test::scratch_dir("snapshot-rt");
    ClassificationSnapshot s;
    s.model_ref = "stage1/epoch2";
    s.probe_config_digest = "abc";
    s.seed = 42;
    s.created_at = "2024-01-01T00:00:00Z";
    s.labels = {{"x", KnowledgeClass::WeaklyKnown}, {"a", KnowledgeClass::HighlyKnown}};
    save_snapshot(dir / "s.jsonl", s);
    const auto back = load_snapshot(dir / "s.jsonl");
    CHECK(back.same_content(s));
    CHECK(back.created_at == s.created_at);
    CHECK(read_file(dir / "s.jsonl").find("2024") == std::string::npos);

    auto later = s;
    later.created_at = "2025-06-01T00:00:00Z";
    CHECK(snapshot_to_jsonl(later) == snapshot_to_jsonl(s));
    CHECK(snapshot_digest(later) == snapshot_digest(s));
    later.labels["x"] = KnowledgeClass::Unknown;
    CHECK(snapshot_digest(later) != snapshot_digest(s));
}

TEST_CASE("snapshot label lookup") {
    ClassificationSnapshot s;
    s.labels = {{"a", KnowledgeClass::MaybeKnown}};
    CHECK(s.label("a") == KnowledgeClass::MaybeKnown);
    CHECK_ERROR_CODE(s.label("b"), "MissingLabel");
}

TEST_CASE("checkpoint file round-trip") {
    CampaignCheckpoint cp;
    cp.config_digest = "d";
    cp.model_ref = "base";
    cp.seed = 7;
    cp.completed["a"] = ProbeOutcome{"a", 3, 10, 17, 160};
    cp.completed["b"] = ProbeOutcome{"b", 0, 10, 0, 160};
    cp.pending = {"c"};
    const auto back = checkpoint_from_jsonl(checkpoint_to_jsonl(cp));
    CHECK(back.config_digest == "d");
    CHECK(back.model_ref == "base");
    CHECK(back.seed == 7);
    CHECK(back.completed == cp.completed);
    CHECK(back.pending == cp.pending);
    CHECK_FALSE(back.complete());
}

TEST_CASE("curriculum file round-trip") {
    CurriculumSpec spec;
    spec.strategy = Strategy::S5;
    spec.replay_ratio = 0.2;
    spec.replay_base = ReplayBase::Members;
    spec.seed = 9;
    spec.member_ids = {"z", "a", "m"};
    spec.replay_pool_ids = {"b", "c"};
    spec.snapshot_digests = {"d0", "d1"};
    const auto back = curriculum_from_jsonl(curriculum_to_jsonl(spec));
    CHECK(back == spec);
    CHECK(curriculum_digest(back) == curriculum_digest(spec));
}

TEST_CASE("format readers reject foreign files") {
    CHECK_ERROR_CODE(snapshot_from_jsonl(R"({"kind":"curriculum","version":1})"), "WrongFileKind");
    CHECK_ERROR_CODE(snapshot_from_jsonl(""), "MalformedRecord");
    CHECK_ERROR_CODE(corpus_from_jsonl("{not json"), "MalformedRecord");
    CHECK_ERROR_CODE(snapshot_from_jsonl(R"({"kind":"snapshot","version":99,"model_ref":"m","digest":"d","seed":1})"),
                     "UnsupportedVersion");
}

TEST_CASE("missing files raise FileNotFound") {
    CHECK_ERROR_CODE(read_file("/nonexistent/ktune/file"), "FileNotFound");
}
