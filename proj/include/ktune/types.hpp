#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ktune/rational.hpp"

namespace ktune {

enum class Split { Train, Test };

// One question with its ordered answer list. answers[0] is the canonical answer
// and the only one the matcher scores against.
struct QAPair {
    std::string id;
    std::string question;
    std::vector<std::string> answers;
    Split split = Split::Train;
    std::map<std::string, std::string> meta;

    const std::string& canonical_answer() const { return answers.front(); }

    friend bool operator==(const QAPair&, const QAPair&) = default;
};

// Validated, id-indexed collection of QA pairs. Order is the input order.
class Corpus {
public:
    Corpus() = default;

    const std::vector<QAPair>& pairs() const noexcept { return pairs_; }
    std::size_t size() const noexcept { return pairs_.size(); }
    bool empty() const noexcept { return pairs_.empty(); }

    const QAPair* find(std::string_view id) const;
    const QAPair& at(std::string_view id) const;

    // Pairs of one split, in corpus order.
    Corpus subset(Split split) const;

    friend Corpus validate_corpus(std::vector<QAPair> pairs);

private:
    std::vector<QAPair> pairs_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Throws ValidationError: DuplicateId, EmptyQuestion, EmptyAnswerList, EmptyAnswer.
Corpus validate_corpus(std::vector<QAPair> pairs);

struct DecodingSpec {
    double temperature = 0.0;
    std::uint32_t samples_per_round = 1;
    std::optional<std::uint32_t> top_k;  // nullopt = unlimited
    std::uint32_t rounds = 10;
    std::uint32_t max_new_tokens = 32;

    static DecodingSpec greedy();   // T=0, one sample, 10 rounds
    static DecodingSpec sampled();  // T=0.5, 16 samples, top-k 40, 10 rounds

    bool is_greedy() const noexcept { return temperature == 0.0; }

    // Throws ValidationError (InvalidDecodingSpec).
    void validate() const;

    friend bool operator==(const DecodingSpec&, const DecodingSpec&) = default;
};

struct ProbeOutcome {
    std::string qa_id;
    std::uint32_t greedy_correct = 0;
    std::uint32_t greedy_total = 0;
    std::uint32_t sampled_correct = 0;
    std::uint32_t sampled_total = 0;

    friend bool operator==(const ProbeOutcome&, const ProbeOutcome&) = default;
};

struct ProbeEstimate {
    Rational p_greedy;   // P_correct at T=0
    Rational p_sampled;  // P_correct at T>0

    friend bool operator==(const ProbeEstimate&, const ProbeEstimate&) = default;
};

enum class KnowledgeClass { HighlyKnown, MaybeKnown, WeaklyKnown, Unknown };
enum class CoarseClass { HighlyKnown, MaybeKnown, Residual };

inline constexpr KnowledgeClass kAllClasses[] = {
    KnowledgeClass::HighlyKnown, KnowledgeClass::MaybeKnown,
    KnowledgeClass::WeaklyKnown, KnowledgeClass::Unknown};
inline constexpr CoarseClass kAllCoarseClasses[] = {
    CoarseClass::HighlyKnown, CoarseClass::MaybeKnown, CoarseClass::Residual};

std::string_view to_string(KnowledgeClass c);
std::string_view to_string(CoarseClass c);
std::string_view to_string(Split s);
KnowledgeClass parse_knowledge_class(std::string_view s);
Split parse_split(std::string_view s);

// Four-way labels for every id of a corpus at one point of the pipeline.
struct ClassificationSnapshot {
    std::string model_ref;
    std::string probe_config_digest;
    std::map<std::string, KnowledgeClass> labels;
    std::string created_at;  // ISO-8601; persisted in the sidecar, not the primary file
    std::uint64_t seed = 0;

    KnowledgeClass label(std::string_view id) const;

    // Equality over everything except created_at.
    bool same_content(const ClassificationSnapshot& other) const;
};

// Counts of label movement between two snapshots. Rows are "before" labels.
struct TransitionMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::uint64_t>> counts;

    std::uint64_t at(std::size_t row, std::size_t col) const { return counts.at(row).at(col); }
    std::uint64_t row_sum(std::size_t row) const;
    std::uint64_t col_sum(std::size_t col) const;
    std::uint64_t total() const;
    std::uint64_t diagonal_total() const;
    std::uint64_t off_diagonal_total() const { return total() - diagonal_total(); }

    friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;
};

enum class Strategy { Stage1MaybeKnown, S1, S2, S3, S4, S5 };

std::string_view to_string(Strategy s);
// Accepts "s1".."s5" (any case) and "stage1".
Strategy parse_strategy(std::string_view s);

// Which population the replay ratio is a fraction of.
enum class ReplayBase { Pool, Members };

std::string_view to_string(ReplayBase b);
ReplayBase parse_replay_base(std::string_view s);

struct CurriculumSpec {
    Strategy strategy = Strategy::Stage1MaybeKnown;
    double replay_ratio = 0.0;
    ReplayBase replay_base = ReplayBase::Pool;
    std::uint64_t seed = 0;
    std::vector<std::string> member_ids;
    std::vector<std::string> replay_pool_ids;
    std::vector<std::string> snapshot_digests;

    // Throws ValidationError (InvalidCurriculum).
    void validate() const;

    friend bool operator==(const CurriculumSpec&, const CurriculumSpec&) = default;
};

struct TrainerConfig {
    std::uint32_t adapter_rank = 64;
    double learning_rate = 3e-4;
    double weight_decay = 0.0;
    std::uint32_t batch_size = 32;
    std::uint32_t max_epochs = 10;
    std::string schedule = "cosine";
    std::string optimizer = "adamw";

    static TrainerConfig stage1_defaults();
    static TrainerConfig stage2_defaults();

    // Throws ValidationError (InvalidTrainerConfig).
    void validate() const;

    friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

} // namespace ktune
