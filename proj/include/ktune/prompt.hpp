#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ktune/random.hpp"
#include "ktune/types.hpp"

namespace ktune {

enum class MultiAnswerRule { FirstAnswerOnly };

struct MatcherPolicy {
    bool case_fold = true;
    bool whitespace_collapse = true;
    MultiAnswerRule multi_answer = MultiAnswerRule::FirstAnswerOnly;

    // Stable textual form; feeds the probe-config digest.
    std::string describe() const;

    friend bool operator==(const MatcherPolicy&, const MatcherPolicy&) = default;
};

// ASCII case folding (bytes >= 0x80 untouched so UTF-8 survives) and collapsing of
// whitespace runs to one space with both ends trimmed. Idempotent.
std::string normalize(std::string_view text, const MatcherPolicy& policy);

// True iff the normalized canonical answer is a contiguous substring of the
// normalized output. Alternate answers never count.
bool match_answer(std::string_view model_output, const QAPair& pair, const MatcherPolicy& policy);

struct PromptTemplate {
    std::vector<std::pair<std::string, std::string>> exemplars;  // (question, canonical answer)
    std::string target_question;

    // "Q: {q}\nA: {a}\n\n" per exemplar, then "Q: {target}\nA:". Byte-exact.
    std::string render() const;

    friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

inline constexpr std::size_t kDefaultShots = 4;
inline constexpr std::string_view kPromptLayoutId = "qa-fewshot-v1";

// Draws k exemplars uniformly without replacement from pool minus target (matched by
// id), in draw order. Throws ValidationError(PoolTooSmall).
PromptTemplate build_fewshot_prompt(const QAPair& target, std::span<const QAPair* const> pool,
                                    std::size_t k, Rng& rng);

// Exemplar source for a whole campaign. Pairs sharing the target's meta tag
// `type_key` form its pool when that group holds at least k other pairs; otherwise
// the pool is the whole source. Lookups are O(k) per prompt.
class ExemplarIndex {
public:
    explicit ExemplarIndex(const Corpus& source, std::string type_key = "pattern");

    PromptTemplate build(const QAPair& target, std::size_t k, Rng& rng) const;

    // The pool `build` would draw from (target included if present).
    std::span<const QAPair* const> pool_for(const QAPair& target, std::size_t k) const;

private:
    struct Group {
        std::vector<const QAPair*> members;
        std::unordered_map<std::string_view, std::size_t> position;
    };

    const Group& group_for(const QAPair& target, std::size_t k) const;

    std::string type_key_;
    Group all_;
    std::unordered_map<std::string, Group> by_tag_;
};

} // namespace ktune
