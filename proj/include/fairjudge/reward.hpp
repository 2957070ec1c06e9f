#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>

#include <json.hpp>

#include "fairjudge/parser.hpp"
#include "fairjudge/records.hpp"

namespace fairjudge {

// pp aligns pairwise preferences with pointwise ground-truth scores;
// sp_point / sp_pair align fast-mode outputs with full-mode judgments in the
// pointwise and pairwise settings.
enum class TaskType { PairwisePreference, ScalarPoint, ExactPair };

inline const char* to_string(TaskType t) {
    switch (t) {
        case TaskType::PairwisePreference: return "pp";
        case TaskType::ScalarPoint: return "sp_point";
        case TaskType::ExactPair: return "sp_pair";
    }
    return "?";
}

inline std::optional<TaskType> task_type_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "pp") return TaskType::PairwisePreference;
    if (t == "sp_point") return TaskType::ScalarPoint;
    if (t == "sp_pair") return TaskType::ExactPair;
    return std::nullopt;
}

struct RewardResult {
    double value = 0.0;
    bool parse_ok = false;
    std::string detail;
};

inline bool consistent_predicate(JudgmentLabel label, std::int64_t g1, std::int64_t g2) {
    switch (label) {
        case JudgmentLabel::AWin: return g1 > g2;
        case JudgmentLabel::BWin: return g2 > g1;
        case JudgmentLabel::Tie: return g1 == g2;
    }
    return false;
}

// g1 is an integer ground-truth score for pp / sp_point and the reference
// judgement text for sp_pair.
using GroundTruth = std::variant<int, std::string>;

struct RewardOptions {
    ParseMode parse_mode = ParseMode::Full;
    bool strict = true;
};

// Unified consistency reward R(c, t, g1, g2), strictly bounded in [0, 2].
// Any parse failure yields 0.0 with parse_ok = false; misuse of the
// signature (e.g. pp without g2) is a usage error, not a zero reward.
inline RewardResult consistency_reward(std::string_view completion, TaskType task,
                                       const GroundTruth& g1, std::optional<int> g2 = std::nullopt,
                                       RewardOptions opts = {}) {
    RewardResult res;
    switch (task) {
        case TaskType::PairwisePreference: {
            const int* s1 = std::get_if<int>(&g1);
            if (!s1) throw std::invalid_argument("pp reward requires integer g1");
            if (!g2) throw std::invalid_argument("pp reward requires g2");
            LabelParse parsed =
                extract_judgment(completion, ParserOptions{opts.parse_mode, opts.strict});
            if (!parsed.ok()) {
                res.detail = parsed.error;
                return res;
            }
            res.parse_ok = true;
            res.value = consistent_predicate(*parsed.label, *s1, *g2) ? 2.0 : 0.0;
            res.detail = to_string(*parsed.label);
            return res;
        }
        case TaskType::ScalarPoint: {
            const int* s1 = std::get_if<int>(&g1);
            if (!s1) throw std::invalid_argument("sp_point reward requires integer g1");
            IntParse parsed = extract_point_score(completion, opts.parse_mode);
            if (!parsed.ok()) {
                res.detail = parsed.error;
                return res;
            }
            res.parse_ok = true;
            // Linear decay, clipped at zero. The deviation is computed in
            // double so absurdly large parsed values cannot overflow.
            double dev = std::abs(static_cast<double>(*s1) - static_cast<double>(*parsed.value));
            res.value = std::clamp(2.0 - dev, 0.0, 2.0);
            res.detail = "parsed " + std::to_string(*parsed.value);
            return res;
        }
        case TaskType::ExactPair: {
            const std::string* ref = std::get_if<std::string>(&g1);
            if (!ref) throw std::invalid_argument("sp_pair reward requires text g1");
            res.parse_ok = true;
            res.value = trim(completion) == trim(*ref) ? 2.0 : 0.0;
            return res;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Batch scoring: JSONL in (completion, task_type, g1, g2), out adds
// reward and parse_ok.
// ---------------------------------------------------------------------------

inline std::size_t score_rewards_jsonl(std::istream& in, std::ostream& out,
                                       RewardOptions opts = {}) {
    std::string line;
    std::size_t scored = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw std::runtime_error("line " + std::to_string(lineno) + ": invalid JSON");
        auto task = task_type_from_string(j.at("task_type").get<std::string>());
        if (!task)
            throw std::runtime_error("line " + std::to_string(lineno) + ": unknown task_type");
        GroundTruth g1;
        const json& jg1 = j.at("g1");
        if (jg1.is_number_integer()) g1 = jg1.get<int>();
        else if (jg1.is_string()) g1 = jg1.get<std::string>();
        else throw std::runtime_error("line " + std::to_string(lineno) + ": g1 must be int or text");
        std::optional<int> g2;
        if (j.contains("g2") && j.at("g2").is_number_integer()) g2 = j.at("g2").get<int>();
        RewardResult res =
            consistency_reward(j.at("completion").get<std::string>(), *task, g1, g2, opts);
        j["reward"] = res.value;
        j["parse_ok"] = res.parse_ok;
        out << j.dump() << '\n';
        ++scored;
    }
    return scored;
}

}  // namespace fairjudge
