#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fairjudge/util.hpp"

namespace fairjudge {

using json = nlohmann::ordered_json;

enum class JudgmentLabel { AWin, BWin, Tie };
enum class Winner { AWin, BWin, Tie, BothBad };
enum class Difficulty { Easy, Medium, Hard };
enum class Mode { Pointwise, Pairwise };

inline const char* to_string(JudgmentLabel l) {
    switch (l) {
        case JudgmentLabel::AWin: return "A_win";
        case JudgmentLabel::BWin: return "B_win";
        case JudgmentLabel::Tie: return "tie";
    }
    return "?";
}

inline const char* to_string(Winner w) {
    switch (w) {
        case Winner::AWin: return "A_win";
        case Winner::BWin: return "B_win";
        case Winner::Tie: return "tie";
        case Winner::BothBad: return "both_bad";
    }
    return "?";
}

inline const char* to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "?";
}

inline const char* to_string(Mode m) {
    return m == Mode::Pairwise ? "pairwise" : "pointwise";
}

inline std::optional<JudgmentLabel> judgment_label_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "a_win") return JudgmentLabel::AWin;
    if (t == "b_win") return JudgmentLabel::BWin;
    if (t == "tie") return JudgmentLabel::Tie;
    return std::nullopt;
}

inline std::optional<Mode> mode_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "pairwise") return Mode::Pairwise;
    if (t == "pointwise") return Mode::Pointwise;
    return std::nullopt;
}

inline std::optional<Difficulty> difficulty_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "easy") return Difficulty::Easy;
    if (t == "medium") return Difficulty::Medium;
    if (t == "hard") return Difficulty::Hard;
    return std::nullopt;
}

inline std::optional<Winner> winner_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "a_win") return Winner::AWin;
    if (t == "b_win") return Winner::BWin;
    if (t == "tie") return Winner::Tie;
    if (t == "both_bad") return Winner::BothBad;
    return std::nullopt;
}

// Maps A_win <-> B_win, fixes tie. The relabeling applied when the two
// answers of an instance trade positions.
inline JudgmentLabel swap_label(JudgmentLabel l) {
    switch (l) {
        case JudgmentLabel::AWin: return JudgmentLabel::BWin;
        case JudgmentLabel::BWin: return JudgmentLabel::AWin;
        case JudgmentLabel::Tie: return JudgmentLabel::Tie;
    }
    return l;
}

struct ScoreRange {
    int lo = 1;
    int hi = 10;

    bool contains(int s) const { return s >= lo && s <= hi; }
    int width() const { return hi - lo + 1; }
};

// Thresholds governing label derivation. All values are the defaults the
// rest of the library assumes; every one is overridable.
struct RecordConfig {
    ScoreRange score_range{};
    int both_bad_threshold = 2;  // both scores <= threshold -> both_bad
    int easy_min_gap = 4;        // |gap| >= this -> easy
    int hard_max_gap = 1;        // |gap| <= this -> hard; in between -> medium
};

struct SourceRecord {
    std::string question;
    std::string answer_a;
    std::string answer_b;
    int score_a = 0;
    int score_b = 0;
};

struct TagLabels {
    Winner winner = Winner::Tie;
    Difficulty difficulty = Difficulty::Hard;
    int cluster_id = 0;
};

inline void validate_score(int s, const ScoreRange& range, const char* which) {
    if (!range.contains(s)) {
        throw std::invalid_argument(std::string(which) + " score " + std::to_string(s) +
                                    " outside range [" + std::to_string(range.lo) + ", " +
                                    std::to_string(range.hi) + "]");
    }
}

inline Winner derive_winner(int score_a, int score_b, int both_bad_threshold,
                            const ScoreRange& range = {}) {
    validate_score(score_a, range, "answer_a");
    validate_score(score_b, range, "answer_b");
    if (score_a <= both_bad_threshold && score_b <= both_bad_threshold) return Winner::BothBad;
    if (score_a > score_b) return Winner::AWin;
    if (score_b > score_a) return Winner::BWin;
    return Winner::Tie;
}

inline Difficulty derive_difficulty(int score_a, int score_b, const RecordConfig& cfg = {}) {
    validate_score(score_a, cfg.score_range, "answer_a");
    validate_score(score_b, cfg.score_range, "answer_b");
    int gap = std::abs(score_a - score_b);
    if (gap >= cfg.easy_min_gap) return Difficulty::Easy;
    if (gap <= cfg.hard_max_gap) return Difficulty::Hard;
    return Difficulty::Medium;
}

inline TagLabels derive_tags(const SourceRecord& rec, const RecordConfig& cfg, int cluster_id) {
    return TagLabels{derive_winner(rec.score_a, rec.score_b, cfg.both_bad_threshold, cfg.score_range),
                     derive_difficulty(rec.score_a, rec.score_b, cfg), cluster_id};
}

// Gold annotation of an EvaluationInstance. Pairwise instances carry a
// label; pointwise instances carry the score of the single evaluated answer
// (held in answer_a), or a score pair when both answers are annotated.
struct PointGold {
    int score_a = 0;
    std::optional<int> score_b;

    bool operator==(const PointGold&) const = default;
};

using Gold = std::variant<JudgmentLabel, PointGold>;

struct EvaluationInstance {
    std::string id;
    std::string task;
    std::optional<std::string> reference;
    std::string answer_a;
    std::string answer_b;
    std::optional<std::string> rubric;
    Mode mode = Mode::Pairwise;
    Gold gold = JudgmentLabel::Tie;

    const JudgmentLabel* gold_label() const { return std::get_if<JudgmentLabel>(&gold); }
    const PointGold* gold_scores() const { return std::get_if<PointGold>(&gold); }
};

inline void validate_instance(const EvaluationInstance& inst) {
    if (inst.mode == Mode::Pairwise && !inst.gold_label())
        throw std::invalid_argument("pairwise instance '" + inst.id + "' must carry a label gold");
    if (inst.mode == Mode::Pointwise && !inst.gold_scores())
        throw std::invalid_argument("pointwise instance '" + inst.id + "' must carry score gold");
}

// ---------------------------------------------------------------------------
// JSONL ingestion / emission
// ---------------------------------------------------------------------------

struct LoadReport {
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<int> read_int_field(const json& j, const char* key, const char* alias) {
    const json* v = nullptr;
    if (j.contains(key)) v = &j.at(key);
    else if (alias && j.contains(alias)) v = &j.at(alias);
    if (!v) return std::nullopt;
    if (v->is_number_integer()) return v->get<int>();
    if (v->is_string()) {
        try {
            return std::stoi(v->get<std::string>());
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> read_text_field(const json& j, const char* key, const char* alias) {
    const json* v = nullptr;
    if (j.contains(key)) v = &j.at(key);
    else if (alias && j.contains(alias)) v = &j.at(alias);
    if (!v || !v->is_string()) return std::nullopt;
    return v->get<std::string>();
}

}  // namespace detail

// Parses one JSONL line into a record. Returns nullopt (with a reason) for
// malformed lines so callers can skip-and-warn per the ingestion contract.
inline std::optional<SourceRecord> parse_record_line(std::string_view line, const RecordConfig& cfg,
                                                     std::string* reason = nullptr) {
    auto fail = [&](const std::string& why) -> std::optional<SourceRecord> {
        if (reason) *reason = why;
        return std::nullopt;
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return fail("invalid JSON object");

    auto question = detail::read_text_field(j, "question", nullptr);
    auto answer_a = detail::read_text_field(j, "answer_1", "answer_a");
    auto answer_b = detail::read_text_field(j, "answer_2", "answer_b");
    auto score_a = detail::read_int_field(j, "answer_1_score", "answer_a_score");
    auto score_b = detail::read_int_field(j, "answer_2_score", "answer_b_score");
    if (!question || !answer_a || !answer_b) return fail("missing question/answer field");
    if (!score_a || !score_b) return fail("missing or non-integer score field");
    if (trim(*question).empty()) return fail("empty question");
    if (trim(*answer_a).empty() || trim(*answer_b).empty()) return fail("empty answer");
    if (!cfg.score_range.contains(*score_a) || !cfg.score_range.contains(*score_b))
        return fail("score outside configured range");
    return SourceRecord{*question, *answer_a, *answer_b, *score_a, *score_b};
}

inline json record_to_json(const SourceRecord& rec) {
    json j;
    j["question"] = rec.question;
    j["answer_1"] = rec.answer_a;
    j["answer_2"] = rec.answer_b;
    j["answer_1_score"] = rec.score_a;
    j["answer_2_score"] = rec.score_b;
    return j;
}

inline std::vector<SourceRecord> load_records(const std::filesystem::path& path,
                                              const RecordConfig& cfg = {},
                                              LoadReport* report = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<SourceRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::string reason;
        auto rec = parse_record_line(line, cfg, &reason);
        if (rec) {
            records.push_back(std::move(*rec));
        } else if (report) {
            report->skipped++;
            report->warnings.push_back("line " + std::to_string(lineno) + ": " + reason);
        }
    }
    return records;
}

inline void save_records(const std::filesystem::path& path, const std::vector<SourceRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& rec : records) out << record_to_json(rec).dump() << '\n';
}

inline json instance_to_json(const EvaluationInstance& inst) {
    json j;
    j["id"] = inst.id;
    j["task"] = inst.task;
    j["reference"] = inst.reference ? json(*inst.reference) : json(nullptr);
    j["answer_a"] = inst.answer_a;
    j["answer_b"] = inst.answer_b;
    j["rubric"] = inst.rubric ? json(*inst.rubric) : json(nullptr);
    j["mode"] = to_string(inst.mode);
    if (const auto* lab = inst.gold_label()) {
        j["gold"] = to_string(*lab);
    } else {
        const auto& pg = std::get<PointGold>(inst.gold);
        if (pg.score_b) j["gold"] = json::array({pg.score_a, *pg.score_b});
        else j["gold"] = pg.score_a;
    }
    return j;
}

inline EvaluationInstance instance_from_json(const json& j) {
    EvaluationInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.task = j.at("task").get<std::string>();
    if (j.contains("reference") && j.at("reference").is_string())
        inst.reference = j.at("reference").get<std::string>();
    inst.answer_a = j.at("answer_a").get<std::string>();
    inst.answer_b = j.value("answer_b", std::string{});
    if (j.contains("rubric") && j.at("rubric").is_string())
        inst.rubric = j.at("rubric").get<std::string>();
    auto mode = mode_from_string(j.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("instance '" + inst.id + "': unknown mode");
    inst.mode = *mode;
    const json& g = j.at("gold");
    if (g.is_string()) {
        auto lab = judgment_label_from_string(g.get<std::string>());
        if (!lab) throw std::invalid_argument("instance '" + inst.id + "': unknown gold label");
        inst.gold = *lab;
    } else if (g.is_number_integer()) {
        inst.gold = PointGold{g.get<int>(), std::nullopt};
    } else if (g.is_array() && g.size() == 2) {
        inst.gold = PointGold{g.at(0).get<int>(), g.at(1).get<int>()};
    } else {
        throw std::invalid_argument("instance '" + inst.id + "': malformed gold");
    }
    validate_instance(inst);
    return inst;
}

inline std::vector<EvaluationInstance> load_instances(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<EvaluationInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(instance_from_json(json::parse(line)));
    }
    return out;
}

inline void save_instances(const std::filesystem::path& path,
                           const std::vector<EvaluationInstance>& instances) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& inst : instances) out << instance_to_json(inst).dump() << '\n';
}

}  // namespace fairjudge
