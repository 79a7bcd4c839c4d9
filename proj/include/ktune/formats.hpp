#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

#include "ktune/io.hpp"
#include "ktune/types.hpp"

// Line-delimited JSON file formats. Every writer emits objects with sorted keys
// and records sorted by id, so identical content gives identical bytes.
namespace ktune {

// Corpus: one {id, question, answers, split, meta} object per line.
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus corpus_from_jsonl(std::string_view text);
Corpus load_corpus(const fs::path& path);
void save_corpus(const fs::path& path, const Corpus& corpus);

// Snapshot: header {kind, version, model_ref, digest, seed} then {id, class} records.
// created_at goes to the "<path>.meta.json" sidecar.
std::string snapshot_to_jsonl(const ClassificationSnapshot& snap);
ClassificationSnapshot snapshot_from_jsonl(std::string_view text);
ClassificationSnapshot load_snapshot(const fs::path& path);
void save_snapshot(const fs::path& path, const ClassificationSnapshot& snap);

// Content digest of the primary snapshot bytes.
std::string snapshot_digest(const ClassificationSnapshot& snap);

struct CampaignCheckpoint {
    std::string config_digest;
    std::string model_ref;
    std::uint64_t seed = 0;
    std::map<std::string, ProbeOutcome> completed;
    std::set<std::string> pending;

    bool complete() const noexcept { return pending.empty(); }
};

// Outcome/checkpoint file: header {kind, version, digest, model_ref, seed, pending}
// then one outcome record per completed id.
std::string checkpoint_to_jsonl(const CampaignCheckpoint& cp);
CampaignCheckpoint checkpoint_from_jsonl(std::string_view text);
CampaignCheckpoint load_checkpoint(const fs::path& path);
void save_checkpoint(const fs::path& path, const CampaignCheckpoint& cp);

// Curriculum: header {kind, version, strategy, replay_ratio, replay_base, seed,
// snapshot_digests} then {id, role} records in member order, then replay pool.
std::string curriculum_to_jsonl(const CurriculumSpec& spec);
CurriculumSpec curriculum_from_jsonl(std::string_view text);
CurriculumSpec load_curriculum(const fs::path& path);
void save_curriculum(const fs::path& path, const CurriculumSpec& spec);
std::string curriculum_digest(const CurriculumSpec& spec);

} // namespace ktune
