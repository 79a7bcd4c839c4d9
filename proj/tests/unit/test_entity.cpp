#include "check.hpp"

#include <algorithm>
#include <fstream>

#include "ktune/entity_graph.hpp"
#include "ktune/random.hpp"
#include "support.hpp"

using namespace ktune;

namespace {

QAPair qa(std::string id, std::string q, std::string a) {
    return QAPair{std::move(id), std::move(q), {std::move(a)}, Split::Train, {}};
}

std::vector<const QAPair*> ptrs(const std::vector<QAPair>& v) {
    std::vector<const QAPair*> out;
    for (const auto& p : v) out.push_back(&p);
    return out;
}

} // namespace

TEST_CASE("performer question extraction") {
    const auto e = extract_entities(qa("x", "Who performed Rodney Crowell - Greatest Hits?", "Rodney Crowell"),
                                    EntityRules::defaults());
    CHECK(e.question_entity == "Rodney Crowell - Greatest Hits");
    CHECK(e.answer_entity == "Rodney Crowell");
}

TEST_CASE("default templates") {
    const auto rules = EntityRules::defaults();
    CHECK(extract_entities(qa("x", "Who wrote Dune?", "Frank Herbert"), rules).question_entity == "Dune");
    CHECK(extract_entities(qa("x", "What is the capital of Chad?", "N'Djamena"), rules).question_entity == "Chad");
}

TEST_CASE("fallback strips the interrogative scaffolding") {
    const auto e = extract_entities(qa("x", "Which river crosses Paris?", "Seine"), EntityRules::defaults());
    CHECK(e.question_entity == "crosses Paris");
}

TEST_CASE("no entity and no rules") {
    CHECK_ERROR_CODE(extract_entities(qa("x", "?", "y"), EntityRules::defaults()), "NoEntity");
    CHECK_ERROR_CODE(extract_entities(qa("x", "Who wrote Dune?", "y"), EntityRules({})), "NoRules");
    CHECK_ERROR_CODE(EntityRules({{"(unclosed", 1}}), "BadRule");
    CHECK_ERROR_CODE(EntityRules({{"no group", 1}}), "BadRule");
}

TEST_CASE("shared entity gets degree two") {
    const std::vector<QAPair> pairs = {qa("1", "Who wrote Dune?", "Frank Herbert"),
                                       qa("2", "What is the capital of Arrakis?", "Dune")};
    const auto g = build_graph(ptrs(pairs), EntityRules::defaults());
    CHECK(g.nodes.size() == 3);
    CHECK(g.edges.size() == 2);
    CHECK(g.neighbors("dune").size() == 2);
    CHECK(g.neighbors("frank herbert") == std::set<std::string>{"dune"});
}

TEST_CASE("self loops and empty questions are skipped") {
    const std::vector<QAPair> pairs = {qa("1", "Who performed Rodney Crowell?", "rodney  crowell"),
                                       qa("2", "?", "x"), qa("3", "Who wrote Dune?", "Frank Herbert")};
    const auto g = build_graph(ptrs(pairs), EntityRules::defaults());
    CHECK(g.skipped_self_loop == 1);
    CHECK(g.skipped_no_entity == 1);
    CHECK(g.edges.size() == 1);
}

TEST_CASE("node labels on the five-node fixture") {
    const auto f = test::entity_fixture();
    const auto pairs = entity_analysis_pairs(f.corpus, f.initial, f.after);
    CHECK(pairs.size() == 3);
    const auto g = build_graph(pairs, EntityRules::defaults());
    CHECK(g.nodes.size() == 5);
    const auto l = label_nodes(g, f.initial, f.after);
    CHECK(l.initial.size() == 2);
    CHECK(l.reclassified.size() == 4);
    CHECK(l.linked_reclassified.size() == 2);
    CHECK(l.linked_reclassified == std::set<std::string>{"arrakis", "dune"});
    const auto sidecar = node_label_sidecar(g, l);
    CHECK(sidecar.find("dune\tInitial,Reclassified,LinkedReclassified\n") != std::string::npos);
    CHECK(sidecar.find("giedi\tReclassified\n") != std::string::npos);
}

TEST_CASE("linked nodes are reclassified nodes next to an initial node") {
    Rng rng(3);
    const char* names[] = {"A", "B", "C", "D", "E", "F", "G", "H"};
    for (int t = 0; t < 1000; ++t) {
        std::vector<QAPair> pairs;
        ClassificationSnapshot a, b;
        const auto n = 1 + rng.below(8);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto id = "p" + std::to_string(i);
            pairs.push_back(qa(id, std::string("Who wrote ") + names[rng.below(8)] + "?", names[rng.below(8)]));
            a.labels[id] = kAllClasses[rng.below(4)];
            b.labels[id] = kAllClasses[rng.below(4)];
        }
        const auto g = build_graph(ptrs(pairs), EntityRules::defaults());
        const auto l = label_nodes(g, a, b);
        for (const auto& node : l.linked_reclassified) {
            REQUIRE(l.reclassified.count(node) == 1);
            const auto& nb = g.neighbors(node);
            REQUIRE(std::any_of(nb.begin(), nb.end(), [&](const auto& x) { return l.initial.count(x) > 0; }));
        }
        for (const auto& node : l.reclassified) {
            const auto& nb = g.neighbors(node);
            const bool adjacent = std::any_of(nb.begin(), nb.end(), [&](const auto& x) { return l.initial.count(x) > 0; });
            REQUIRE(adjacent == (l.linked_reclassified.count(node) == 1));
        }
    }
}

TEST_CASE("rule file round trip") {
    const auto dir = test::scratch_dir("rules");
    const auto path = dir / "rules.json";
    {
        std::ofstream(path) << entity_rules_to_json(EntityRules::defaults());
    }
    const auto loaded = load_entity_rules(path);
    CHECK(loaded.size() == EntityRules::defaults().size());
    {
        std::ofstream(path) << R"([{"pattern": "^Name (.+)$"}])";
    }
    const auto custom = load_entity_rules(path);
    CHECK(custom.capture("Name Zed") == std::optional<std::string>("Zed"));
    {
        std::ofstream(path) << "{";
    }
    CHECK_ERROR_CODE(load_entity_rules(path), "BadRuleFile");
}

TEST_CASE("edge list format") {
    const std::vector<QAPair> pairs = {qa("1", "Who wrote Dune?", "Frank Herbert"),
                                       qa("2", "Who wrote  dune?", "frank herbert")};
    const auto g = build_graph(ptrs(pairs), EntityRules::defaults());
    CHECK(graph_edge_list(g) == "dune\tfrank herbert\t1,2\n");
}

TEST_CASE("shipped rule file matches the built-in defaults") {
    const auto path = fs::path(KTUNE_REPO_DATA) / "entity_rules.json";
    CHECK(read_file(path) == entity_rules_to_json(EntityRules::defaults()));
}
