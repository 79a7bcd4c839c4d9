#include "ktune/entity_graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>

#include "ktune/error.hpp"

namespace ktune {

using nlohmann::json;

namespace {

const std::set<std::string> kInterrogatives = {"who", "whom", "whose", "what", "which", "where",
                                               "when", "why", "how"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view next_word(std::string_view& s) {
    s = trim(s);
    auto end = s.find_first_of(" \t\n");
    auto word = s.substr(0, end);
    s = end == std::string_view::npos ? std::string_view{} : s.substr(end);
    return word;
}

std::string strip_scaffolding(std::string_view question) {
    auto rest = trim(question);
    while (!rest.empty() && (rest.back() == '?' || rest.back() == '.' || std::isspace(static_cast<unsigned char>(rest.back())))) {
        rest.remove_suffix(1);
    }
    auto probe = rest;
    if (kInterrogatives.count(lower(next_word(probe)))) {
        next_word(probe);  // the predicate, e.g. "performed", "is"
        rest = probe;
    }
    return std::string(trim(rest));
}

} // namespace

EntityRules::EntityRules(std::vector<EntityRule> rules) : rules_(std::move(rules)) {
    compiled_.reserve(rules_.size());
    for (const auto& r : rules_) {
        try {
            compiled_.emplace_back(r.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ValidationError("BadRule", "invalid pattern '" + r.pattern + "': " + e.what());
        }
        if (r.group > compiled_.back().mark_count()) {
            throw ValidationError("BadRule", "pattern '" + r.pattern + "' has no capture group " + std::to_string(r.group));
        }
    }
}

EntityRules EntityRules::defaults() {
    return EntityRules({
        {R"(^\s*Who (?:performed|wrote|directed|produced|created|founded|composed|designed|developed|invented|discovered) (.+?)\s*\?*\s*$)", 1},
        {R"(^\s*Who (?:is|was) the (?:author|performer|director|producer|creator|founder|composer) of (.+?)\s*\?*\s*$)", 1},
        {R"(^\s*What is the capital of (.+?)\s*\?*\s*$)", 1},
        {R"(^\s*Where (?:is|was) (.+?) (?:located|born|founded|based)\s*\?*\s*$)", 1},
        {R"(^\s*(?:Who|What) is (.+?) married to\s*\?*\s*$)", 1},
    });
}

std::optional<std::string> EntityRules::capture(const std::string& question) const {
    std::smatch m;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (std::regex_match(question, m, compiled_[i]) && m[rules_[i].group].matched) {
            return m[rules_[i].group].str();
        }
    }
    return std::nullopt;
}

EntityRules load_entity_rules(const fs::path& path) {
    try {
        const auto j = json::parse(read_file(path));
        std::vector<EntityRule> rules;
        for (const auto& r : j) rules.push_back({r.at("pattern").get<std::string>(), r.value("group", std::size_t{1})});
        return EntityRules(std::move(rules));
    } catch (const json::exception& e) {
        throw ValidationError("BadRuleFile", path.string() + ": " + e.what());
    }
}

std::string entity_rules_to_json(const EntityRules& rules) {
    json arr = json::array();
    for (const auto& r : rules.rules()) arr.push_back({{"pattern", r.pattern}, {"group", r.group}});
    return arr.dump(2) + "\n";
}

ExtractedEntities extract_entities(const QAPair& pair, const EntityRules& rules) {
    if (rules.size() == 0) throw ValidationError("NoRules", "entity extraction needs at least one rule");
    ExtractedEntities e;
    e.answer_entity = pair.canonical_answer();
    if (auto captured = rules.capture(pair.question)) {
        e.question_entity = std::string(trim(*captured));
    }
    if (e.question_entity.empty()) e.question_entity = strip_scaffolding(pair.question);
    if (e.question_entity.empty() || trim(e.answer_entity).empty()) {
        throw ValidationError("NoEntity", "no entity found in pair '" + pair.id + "'");
    }
    return e;
}

const std::set<std::string>& EntityGraph::neighbors(const std::string& node) const {
    static const std::set<std::string> none;
    auto it = adjacency.find(node);
    return it == adjacency.end() ? none : it->second;
}

EntityGraph build_graph(std::span<const QAPair* const> pairs, const EntityRules& rules,
                        const MatcherPolicy& normalization) {
    EntityGraph g;
    for (const auto* p : pairs) {
        ExtractedEntities e;
        try {
            e = extract_entities(*p, rules);
        } catch (const ValidationError& err) {
            if (err.code() != "NoEntity") throw;
            ++g.skipped_no_entity;
            continue;
        }
        auto a = normalize(e.question_entity, normalization);
        auto b = normalize(e.answer_entity, normalization);
        if (a.empty() || b.empty()) {
            ++g.skipped_no_entity;
            continue;
        }
        if (a == b) {
            ++g.skipped_self_loop;
            continue;
        }
        if (b < a) std::swap(a, b);
        Edge edge{a, b};
        g.nodes.insert(a);
        g.nodes.insert(b);
        g.adjacency[a].insert(b);
        g.adjacency[b].insert(a);
        g.edges.insert(edge);
        g.provenance[edge].push_back(p->id);
        g.pair_edge.emplace(p->id, std::move(edge));
    }
    return g;
}

NodeLabeling label_nodes(const EntityGraph& graph, const ClassificationSnapshot& initial,
                         const ClassificationSnapshot& after_stage1) {
    NodeLabeling out;
    for (const auto& [id, edge] : graph.pair_edge) {
        const auto before = initial.label(id);
        if (before == KnowledgeClass::MaybeKnown) {
            out.initial.insert(edge.first);
            out.initial.insert(edge.second);
        }
        if (before == KnowledgeClass::WeaklyKnown && after_stage1.label(id) == KnowledgeClass::MaybeKnown) {
            out.reclassified.insert(edge.first);
            out.reclassified.insert(edge.second);
        }
    }
    for (const auto& node : out.reclassified) {
        const auto& nb = graph.neighbors(node);
        if (std::any_of(nb.begin(), nb.end(), [&](const std::string& n) { return out.initial.count(n) > 0; })) {
            out.linked_reclassified.insert(node);
        }
    }
    return out;
}

std::vector<const QAPair*> entity_analysis_pairs(const Corpus& corpus, const ClassificationSnapshot& initial,
                                                 const ClassificationSnapshot& after_stage1) {
    std::vector<const QAPair*> out;
    for (const auto& p : corpus.pairs()) {
        const auto before = initial.label(p.id);
        if (before == KnowledgeClass::MaybeKnown ||
            (before == KnowledgeClass::WeaklyKnown && after_stage1.label(p.id) == KnowledgeClass::MaybeKnown)) {
            out.push_back(&p);
        }
    }
    return out;
}

std::string graph_edge_list(const EntityGraph& graph) {
    std::string out;
    for (const auto& edge : graph.edges) {
        out += edge.first + "\t" + edge.second + "\t";
        const auto& ids = graph.provenance.at(edge);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out += ",";
            out += ids[i];
        }
        out += "\n";
    }
    return out;
}

std::string node_label_sidecar(const EntityGraph& graph, const NodeLabeling& labeling) {
    std::string out;
    for (const auto& node : graph.nodes) {
        std::vector<std::string_view> labels;
        if (labeling.initial.count(node)) labels.push_back("Initial");
        if (labeling.reclassified.count(node)) labels.push_back("Reclassified");
        if (labeling.linked_reclassified.count(node)) labels.push_back("LinkedReclassified");
        if (labels.empty()) continue;
        out += node + "\t";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (i) out += ",";
            out += labels[i];
        }
        out += "\n";
    }
    return out;
}

} // namespace ktune
