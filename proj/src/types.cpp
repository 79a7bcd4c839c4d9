#include "ktune/types.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "ktune/error.hpp"

namespace ktune {

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

const QAPair* Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &pairs_[it->second];
}

const QAPair& Corpus::at(std::string_view id) const {
    if (const auto* p = find(id)) return *p;
    throw ValidationError("UnknownId", "no QA pair with id '" + std::string(id) + "'");
}

Corpus Corpus::subset(Split split) const {
    std::vector<QAPair> picked;
    for (const auto& p : pairs_) {
        if (p.split == split) picked.push_back(p);
    }
    return validate_corpus(std::move(picked));
}

Corpus validate_corpus(std::vector<QAPair> pairs) {
    Corpus corpus;
    corpus.index_.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.id.empty()) throw ValidationError("EmptyId", "pair at position " + std::to_string(i) + " has no id");
        if (blank(p.question)) throw ValidationError("EmptyQuestion", "pair '" + p.id + "' has an empty question");
        if (p.answers.empty()) throw ValidationError("EmptyAnswerList", "pair '" + p.id + "' has no answers");
        for (const auto& a : p.answers) {
            if (blank(a)) throw ValidationError("EmptyAnswer", "pair '" + p.id + "' has an empty answer");
        }
        if (!corpus.index_.emplace(p.id, i).second) {
            throw ValidationError("DuplicateId", "duplicate id '" + p.id + "'");
        }
    }
    corpus.pairs_ = std::move(pairs);
    return corpus;
}

DecodingSpec DecodingSpec::greedy() {
    return DecodingSpec{};
}

DecodingSpec DecodingSpec::sampled() {
    DecodingSpec s;
    s.temperature = 0.5;
    s.samples_per_round = 16;
    s.top_k = 40;
    return s;
}

void DecodingSpec::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("InvalidDecodingSpec", why); };
    if (!(temperature >= 0.0)) fail("temperature must be non-negative");
    if (samples_per_round == 0) fail("samples_per_round must be positive");
    if (temperature == 0.0 && samples_per_round != 1) fail("greedy decoding takes exactly one sample per round");
    if (top_k && *top_k == 0) fail("top_k must be positive or unlimited");
    if (rounds == 0) fail("rounds must be at least 1");
    if (max_new_tokens == 0) fail("max_new_tokens must be positive");
}

std::string_view to_string(KnowledgeClass c) {
    switch (c) {
    case KnowledgeClass::HighlyKnown: return "HighlyKnown";
    case KnowledgeClass::MaybeKnown: return "MaybeKnown";
    case KnowledgeClass::WeaklyKnown: return "WeaklyKnown";
    case KnowledgeClass::Unknown: return "Unknown";
    }
    return "Unknown";
}

std::string_view to_string(CoarseClass c) {
    switch (c) {
    case CoarseClass::HighlyKnown: return "HighlyKnown";
    case CoarseClass::MaybeKnown: return "MaybeKnown";
    case CoarseClass::Residual: return "WeaklyKnown&Unknown";
    }
    return "WeaklyKnown&Unknown";
}

std::string_view to_string(Split s) {
    return s == Split::Train ? "train" : "test";
}

KnowledgeClass parse_knowledge_class(std::string_view s) {
    for (auto c : kAllClasses) {
        if (to_string(c) == s) return c;
    }
    throw ValidationError("BadClass", "unknown knowledge class '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    const auto l = lower(s);
    if (l == "train") return Split::Train;
    if (l == "test") return Split::Test;
    throw ValidationError("BadSplit", "unknown split '" + std::string(s) + "'");
}

KnowledgeClass ClassificationSnapshot::label(std::string_view id) const {
    auto it = labels.find(std::string(id));
    if (it == labels.end()) throw ValidationError("MissingLabel", "snapshot has no label for '" + std::string(id) + "'");
    return it->second;
}

bool ClassificationSnapshot::same_content(const ClassificationSnapshot& o) const {
    return model_ref == o.model_ref && probe_config_digest == o.probe_config_digest && seed == o.seed &&
           labels == o.labels;
}

std::uint64_t TransitionMatrix::row_sum(std::size_t row) const {
    std::uint64_t s = 0;
    for (auto v : counts.at(row)) s += v;
    return s;
}

std::uint64_t TransitionMatrix::col_sum(std::size_t col) const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s += row.at(col);
    return s;
}

std::uint64_t TransitionMatrix::total() const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) s += row_sum(r);
    return s;
}

std::uint64_t TransitionMatrix::diagonal_total() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < counts.size() && i < col_labels.size(); ++i) s += counts[i][i];
    return s;
}

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::Stage1MaybeKnown: return "stage1";
    case Strategy::S1: return "s1";
    case Strategy::S2: return "s2";
    case Strategy::S3: return "s3";
    case Strategy::S4: return "s4";
    case Strategy::S5: return "s5";
    }
    return "stage1";
}

Strategy parse_strategy(std::string_view s) {
    const auto l = lower(s);
    for (auto st : {Strategy::Stage1MaybeKnown, Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4, Strategy::S5}) {
        if (to_string(st) == l) return st;
    }
    throw ValidationError("UnknownStrategy", "unknown strategy '" + std::string(s) + "'");
}

std::string_view to_string(ReplayBase b) {
    return b == ReplayBase::Pool ? "pool" : "members";
}

ReplayBase parse_replay_base(std::string_view s) {
    const auto l = lower(s);
    if (l == "pool") return ReplayBase::Pool;
    if (l == "members") return ReplayBase::Members;
    throw ValidationError("BadReplayBase", "replay base must be 'pool' or 'members', got '" + std::string(s) + "'");
}

void CurriculumSpec::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("InvalidCurriculum", why); };
    if (!(replay_ratio >= 0.0 && replay_ratio <= 1.0)) fail("replay_ratio must lie in [0,1]");
    if (replay_ratio > 0.0 && strategy != Strategy::S5) fail("replay is only defined for strategy s5");
    std::unordered_set<std::string_view> members(member_ids.begin(), member_ids.end());
    if (members.size() != member_ids.size()) fail("member_ids contains duplicates");
    for (const auto& id : replay_pool_ids) {
        if (members.count(id)) fail("replay pool id '" + id + "' is also a member");
    }
}

TrainerConfig TrainerConfig::stage1_defaults() {
    return TrainerConfig{};
}

TrainerConfig TrainerConfig::stage2_defaults() {
    TrainerConfig c;
    c.learning_rate = 1.5e-4;
    c.weight_decay = 0.01;
    c.max_epochs = 3;
    return c;
}

void TrainerConfig::validate() const {
    auto fail = [](const std::string& why) { throw ValidationError("InvalidTrainerConfig", why); };
    if (adapter_rank == 0) fail("adapter_rank must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (batch_size == 0) fail("batch_size must be positive");
    if (max_epochs == 0) fail("max_epochs must be positive");
    if (schedule != "cosine") fail("schedule must be 'cosine'");
    if (optimizer != "adamw") fail("optimizer must be 'adamw'");
}

} // namespace ktune
