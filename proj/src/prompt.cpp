#include "ktune/prompt.hpp"

#include "ktune/error.hpp"

namespace ktune {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Sample k distinct positions from [0, n) skipping `excluded` (when set), in draw order.
std::vector<std::size_t> sample_excluding(std::size_t n, std::optional<std::size_t> excluded, std::size_t k,
                                          Rng& rng) {
    const std::size_t eligible = excluded ? n - 1 : n;
    auto picks = rng.sample_indices(eligible, k);
    if (excluded) {
        for (auto& p : picks) {
            if (p >= *excluded) ++p;
        }
    }
    return picks;
}

PromptTemplate assemble(const QAPair& target, std::span<const QAPair* const> pool,
                        const std::vector<std::size_t>& picks) {
    PromptTemplate t;
    t.target_question = target.question;
    t.exemplars.reserve(picks.size());
    for (auto i : picks) t.exemplars.emplace_back(pool[i]->question, pool[i]->canonical_answer());
    return t;
}

[[noreturn]] void pool_too_small(const QAPair& target, std::size_t have, std::size_t k) {
    throw ValidationError("PoolTooSmall", "pair '" + target.id + "' has " + std::to_string(have) +
                                              " candidate exemplar(s), needs " + std::to_string(k));
}

} // namespace

std::string MatcherPolicy::describe() const {
    std::string s = "case_fold=";
    s += case_fold ? "1" : "0";
    s += ";whitespace_collapse=";
    s += whitespace_collapse ? "1" : "0";
    s += ";multi_answer=first";
    return s;
}

std::string normalize(std::string_view text, const MatcherPolicy& policy) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (policy.whitespace_collapse && is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (policy.case_fold && c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
        out.push_back(static_cast<char>(c));
    }
    return out;
}

bool match_answer(std::string_view model_output, const QAPair& pair, const MatcherPolicy& policy) {
    if (pair.answers.empty()) return false;
    const auto answer = normalize(pair.answers.front(), policy);
    if (answer.empty()) return false;
    return normalize(model_output, policy).find(answer) != std::string::npos;
}

std::string PromptTemplate::render() const {
    std::string out;
    for (const auto& [q, a] : exemplars) {
        out += "Q: ";
        out += q;
        out += "\nA: ";
        out += a;
        out += "\n\n";
    }
    out += "Q: ";
    out += target_question;
    out += "\nA:";
    return out;
}

PromptTemplate build_fewshot_prompt(const QAPair& target, std::span<const QAPair* const> pool, std::size_t k,
                                    Rng& rng) {
    std::optional<std::size_t> self;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i]->id == target.id) {
            self = i;
            break;
        }
    }
    const std::size_t eligible = self ? pool.size() - 1 : pool.size();
    if (eligible < k) pool_too_small(target, eligible, k);
    return assemble(target, pool, sample_excluding(pool.size(), self, k, rng));
}

ExemplarIndex::ExemplarIndex(const Corpus& source, std::string type_key) : type_key_(std::move(type_key)) {
    auto add = [](Group& g, const QAPair& p) {
        g.position.emplace(p.id, g.members.size());
        g.members.push_back(&p);
    };
    for (const auto& p : source.pairs()) {
        add(all_, p);
        if (auto it = p.meta.find(type_key_); it != p.meta.end()) add(by_tag_[it->second], p);
    }
}

const ExemplarIndex::Group& ExemplarIndex::group_for(const QAPair& target, std::size_t k) const {
    if (auto tag = target.meta.find(type_key_); tag != target.meta.end()) {
        if (auto g = by_tag_.find(tag->second); g != by_tag_.end()) {
            const std::size_t others = g->second.members.size() - g->second.position.count(target.id);
            if (others >= k) return g->second;
        }
    }
    return all_;
}

std::span<const QAPair* const> ExemplarIndex::pool_for(const QAPair& target, std::size_t k) const {
    return group_for(target, k).members;
}

PromptTemplate ExemplarIndex::build(const QAPair& target, std::size_t k, Rng& rng) const {
    const auto& g = group_for(target, k);
    std::optional<std::size_t> self;
    if (auto it = g.position.find(target.id); it != g.position.end()) self = it->second;
    const std::size_t eligible = self ? g.members.size() - 1 : g.members.size();
    if (eligible < k) pool_too_small(target, eligible, k);
    return assemble(target, g.members, sample_excluding(g.members.size(), self, k, rng));
}

} // namespace ktune
