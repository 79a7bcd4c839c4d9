#pragma once

#include <cstdint>
#include <map>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ktune/io.hpp"
#include "ktune/prompt.hpp"
#include "ktune/types.hpp"

namespace ktune {

struct EntityRule {
    std::string pattern;  // ECMAScript regex matched against the whole question
    std::size_t group = 1;
};

class EntityRules {
public:
    explicit EntityRules(std::vector<EntityRule> rules);

    // Templates of the form "Who performed X?", "Who wrote X?", "What is the capital of X?".
    static EntityRules defaults();

    const std::vector<EntityRule>& rules() const noexcept { return rules_; }
    std::size_t size() const noexcept { return rules_.size(); }

    // First capture of the first matching rule, if any.
    std::optional<std::string> capture(const std::string& question) const;

private:
    std::vector<EntityRule> rules_;
    std::vector<std::regex> compiled_;
};

// Rule file: JSON array of {"pattern": "...", "group": 1}, applied in order.
EntityRules load_entity_rules(const fs::path& path);
std::string entity_rules_to_json(const EntityRules& rules);

struct ExtractedEntities {
    std::string question_entity;
    std::string answer_entity;
};

// answer_entity is the canonical answer verbatim. question_entity comes from the
// rules, else from the question minus its leading interrogative word, the word after
// it, and trailing punctuation. Throws ValidationError(NoEntity, NoRules).
ExtractedEntities extract_entities(const QAPair& pair, const EntityRules& rules);

using Edge = std::pair<std::string, std::string>;  // first < second

struct EntityGraph {
    std::set<std::string> nodes;
    std::set<Edge> edges;
    std::map<Edge, std::vector<std::string>> provenance;  // edge -> qa ids
    std::map<std::string, Edge> pair_edge;                // qa id -> its edge
    std::map<std::string, std::set<std::string>> adjacency;
    std::size_t skipped_no_entity = 0;
    std::size_t skipped_self_loop = 0;

    const std::set<std::string>& neighbors(const std::string& node) const;
};

// One undirected edge per pair between its normalized entities. Pairs without an
// entity, or whose two entities normalize equal, are skipped and counted.
EntityGraph build_graph(std::span<const QAPair* const> pairs, const EntityRules& rules,
                        const MatcherPolicy& normalization = {});

struct NodeLabeling {
    std::set<std::string> initial;
    std::set<std::string> reclassified;
    std::set<std::string> linked_reclassified;
};

// initial: nodes of pairs MaybeKnown in `initial`; reclassified: nodes of pairs that
// went WeaklyKnown -> MaybeKnown; linked: reclassified nodes adjacent to an initial node.
// Only pairs present in the graph contribute.
NodeLabeling label_nodes(const EntityGraph& graph, const ClassificationSnapshot& initial,
                         const ClassificationSnapshot& after_stage1);

// Pairs the entity analysis is built over: initially MaybeKnown, or WeaklyKnown -> MaybeKnown.
std::vector<const QAPair*> entity_analysis_pairs(const Corpus& corpus, const ClassificationSnapshot& initial,
                                                 const ClassificationSnapshot& after_stage1);

// "u\tv\tqa_id,qa_id,..." per edge.
std::string graph_edge_list(const EntityGraph& graph);
// "node\tInitial,Reclassified,LinkedReclassified" (labels present only) per labelled node.
std::string node_label_sidecar(const EntityGraph& graph, const NodeLabeling& labeling);

} // namespace ktune
