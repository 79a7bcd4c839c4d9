#include "ktune/formats.hpp"

#include <json.hpp>

#include "ktune/error.hpp"

namespace ktune {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json parse_line(std::string_view line, std::string_view what) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRecord", std::string(what) + ": " + e.what());
    }
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) out.push_back(line);
        start = end + 1;
    }
    return out;
}

template <typename T>
T field(const json& j, const char* key, std::string_view what) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError("MalformedRecord", std::string(what) + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw ValidationError("MalformedRecord", std::string(what) + ": field '" + key + "': " + e.what());
    }
}

void expect_kind(const json& header, std::string_view kind) {
    const auto got = field<std::string>(header, "kind", "header");
    if (got != kind) throw ValidationError("WrongFileKind", "expected a '" + std::string(kind) + "' file, got '" + got + "'");
    if (field<int>(header, "version", "header") != kFormatVersion) {
        throw ValidationError("UnsupportedVersion", "unsupported " + std::string(kind) + " format version");
    }
}

void write_meta_sidecar(const fs::path& path, const std::string& created_at) {
    fs::path meta = path;
    meta += ".meta.json";
    write_file_atomic(meta, json{{"created_at", created_at}}.dump() + "\n");
}

} // namespace

std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& p : corpus.pairs()) {
        json j{{"id", p.id}, {"question", p.question}, {"answers", p.answers},
               {"split", to_string(p.split)}, {"meta", p.meta}};
        out += j.dump() + "\n";
    }
    return out;
}

Corpus corpus_from_jsonl(std::string_view text) {
    std::vector<QAPair> pairs;
    std::size_t lineno = 0;
    for (auto line : split_lines(text)) {
        ++lineno;
        const auto what = "corpus line " + std::to_string(lineno);
        const auto j = parse_line(line, what);
        QAPair p;
        p.id = field<std::string>(j, "id", what);
        p.question = field<std::string>(j, "question", what);
        p.answers = field<std::vector<std::string>>(j, "answers", what);
        if (j.contains("split")) p.split = parse_split(field<std::string>(j, "split", what));
        if (j.contains("meta")) p.meta = field<std::map<std::string, std::string>>(j, "meta", what);
        pairs.push_back(std::move(p));
    }
    return validate_corpus(std::move(pairs));
}

Corpus load_corpus(const fs::path& path) {
    return corpus_from_jsonl(read_file(path));
}

void save_corpus(const fs::path& path, const Corpus& corpus) {
    write_file_atomic(path, corpus_to_jsonl(corpus));
}

std::string snapshot_to_jsonl(const ClassificationSnapshot& snap) {
    std::string out = json{{"kind", "snapshot"}, {"version", kFormatVersion}, {"model_ref", snap.model_ref},
                           {"digest", snap.probe_config_digest}, {"seed", snap.seed}}
                          .dump() +
                      "\n";
    for (const auto& [id, cls] : snap.labels) {
        out += json{{"id", id}, {"class", to_string(cls)}}.dump() + "\n";
    }
    return out;
}

ClassificationSnapshot snapshot_from_jsonl(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError("MalformedRecord", "snapshot file is empty");
    const auto header = parse_line(lines[0], "snapshot header");
    expect_kind(header, "snapshot");
    ClassificationSnapshot snap;
    snap.model_ref = field<std::string>(header, "model_ref", "snapshot header");
    snap.probe_config_digest = field<std::string>(header, "digest", "snapshot header");
    snap.seed = field<std::uint64_t>(header, "seed", "snapshot header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto what = "snapshot line " + std::to_string(i + 1);
        const auto j = parse_line(lines[i], what);
        auto id = field<std::string>(j, "id", what);
        const auto cls = parse_knowledge_class(field<std::string>(j, "class", what));
        if (!snap.labels.emplace(id, cls).second) throw ValidationError("DuplicateId", "snapshot repeats id '" + id + "'");
    }
    return snap;
}

ClassificationSnapshot load_snapshot(const fs::path& path) {
    auto snap = snapshot_from_jsonl(read_file(path));
    fs::path meta = path;
    meta += ".meta.json";
    if (fs::exists(meta)) {
        const auto j = parse_line(read_file(meta), "snapshot metadata");
        snap.created_at = j.value("created_at", "");
    }
    return snap;
}

void save_snapshot(const fs::path& path, const ClassificationSnapshot& snap) {
    write_file_atomic(path, snapshot_to_jsonl(snap));
    write_meta_sidecar(path, snap.created_at);
}

std::string snapshot_digest(const ClassificationSnapshot& snap) {
    return sha256_hex(snapshot_to_jsonl(snap));
}

std::string checkpoint_to_jsonl(const CampaignCheckpoint& cp) {
    json header{{"kind", cp.complete() ? "outcomes" : "checkpoint"}, {"version", kFormatVersion},
                {"digest", cp.config_digest}, {"model_ref", cp.model_ref}, {"seed", cp.seed},
                {"pending", cp.pending}};
    std::string out = header.dump() + "\n";
    for (const auto& [id, o] : cp.completed) {
        out += json{{"id", id}, {"greedy_correct", o.greedy_correct}, {"greedy_total", o.greedy_total},
                    {"sampled_correct", o.sampled_correct}, {"sampled_total", o.sampled_total}}
                   .dump() +
               "\n";
    }
    return out;
}

CampaignCheckpoint checkpoint_from_jsonl(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError("MalformedRecord", "outcome file is empty");
    const auto header = parse_line(lines[0], "outcome header");
    const auto kind = field<std::string>(header, "kind", "outcome header");
    expect_kind(header, kind == "checkpoint" ? "checkpoint" : "outcomes");
    CampaignCheckpoint cp;
    cp.config_digest = field<std::string>(header, "digest", "outcome header");
    cp.model_ref = field<std::string>(header, "model_ref", "outcome header");
    cp.seed = field<std::uint64_t>(header, "seed", "outcome header");
    cp.pending = field<std::set<std::string>>(header, "pending", "outcome header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto what = "outcome line " + std::to_string(i + 1);
        const auto j = parse_line(lines[i], what);
        ProbeOutcome o;
        o.qa_id = field<std::string>(j, "id", what);
        o.greedy_correct = field<std::uint32_t>(j, "greedy_correct", what);
        o.greedy_total = field<std::uint32_t>(j, "greedy_total", what);
        o.sampled_correct = field<std::uint32_t>(j, "sampled_correct", what);
        o.sampled_total = field<std::uint32_t>(j, "sampled_total", what);
        if (o.greedy_correct > o.greedy_total || o.sampled_correct > o.sampled_total) {
            throw ValidationError("MalformedRecord", what + ": correct count exceeds total");
        }
        if (cp.pending.count(o.qa_id)) throw ValidationError("MalformedRecord", what + ": id is both completed and pending");
        auto id = o.qa_id;
        if (!cp.completed.emplace(std::move(id), std::move(o)).second) {
            throw ValidationError("DuplicateId", what + ": repeated id");
        }
    }
    return cp;
}

CampaignCheckpoint load_checkpoint(const fs::path& path) {
    return checkpoint_from_jsonl(read_file(path));
}

void save_checkpoint(const fs::path& path, const CampaignCheckpoint& cp) {
    write_file_atomic(path, checkpoint_to_jsonl(cp));
}

std::string curriculum_to_jsonl(const CurriculumSpec& spec) {
    json header{{"kind", "curriculum"}, {"version", kFormatVersion}, {"strategy", to_string(spec.strategy)},
                {"replay_ratio", spec.replay_ratio}, {"replay_base", to_string(spec.replay_base)},
                {"seed", spec.seed}, {"snapshot_digests", spec.snapshot_digests}};
    std::string out = header.dump() + "\n";
    for (const auto& id : spec.member_ids) out += json{{"id", id}, {"role", "member"}}.dump() + "\n";
    for (const auto& id : spec.replay_pool_ids) out += json{{"id", id}, {"role", "replay_pool"}}.dump() + "\n";
    return out;
}

CurriculumSpec curriculum_from_jsonl(std::string_view text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ValidationError("MalformedRecord", "curriculum file is empty");
    const auto header = parse_line(lines[0], "curriculum header");
    expect_kind(header, "curriculum");
    CurriculumSpec spec;
    spec.strategy = parse_strategy(field<std::string>(header, "strategy", "curriculum header"));
    spec.replay_ratio = field<double>(header, "replay_ratio", "curriculum header");
    spec.replay_base = parse_replay_base(field<std::string>(header, "replay_base", "curriculum header"));
    spec.seed = field<std::uint64_t>(header, "seed", "curriculum header");
    spec.snapshot_digests = field<std::vector<std::string>>(header, "snapshot_digests", "curriculum header");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto what = "curriculum line " + std::to_string(i + 1);
        const auto j = parse_line(lines[i], what);
        auto id = field<std::string>(j, "id", what);
        const auto role = field<std::string>(j, "role", what);
        if (role == "member") {
            spec.member_ids.push_back(std::move(id));
        } else if (role == "replay_pool") {
            spec.replay_pool_ids.push_back(std::move(id));
        } else {
            throw ValidationError("MalformedRecord", what + ": unknown role '" + role + "'");
        }
    }
    spec.validate();
    return spec;
}

CurriculumSpec load_curriculum(const fs::path& path) {
    return curriculum_from_jsonl(read_file(path));
}

void save_curriculum(const fs::path& path, const CurriculumSpec& spec) {
    write_file_atomic(path, curriculum_to_jsonl(spec));
}

std::string curriculum_digest(const CurriculumSpec& spec) {
    return sha256_hex(curriculum_to_jsonl(spec));
}

} // namespace ktune
