#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairjudge/records.hpp"
#include "fairjudge/reward.hpp"

namespace fairjudge {

// 3x3 gold-by-predicted counts over {A_win, B_win, tie}, plus a bucket for
// predictions that failed to parse.
struct ConfusionTable {
    std::array<std::array<std::uint64_t, 3>, 3> counts{};
    std::uint64_t unparseable = 0;

    void add(JudgmentLabel gold, std::optional<JudgmentLabel> pred) {
        if (pred) counts[static_cast<int>(gold)][static_cast<int>(*pred)]++;
        else unparseable++;
    }

    std::uint64_t total() const {
        std::uint64_t t = unparseable;
        for (const auto& row : counts)
            for (auto c : row) t += c;
        return t;
    }
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct F1Report {
    std::array<ClassScores, 3> per_class{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

// Macro scores are unweighted means over the three classes; 0/0 counts as 0
// so the report stays defined on small or degenerate tables. Unparseable
// predictions depress recall (they are gold rows never predicted correctly).
inline F1Report macro_f1(const ConfusionTable& table) {
    if (table.total() == 0) throw std::invalid_argument("macro_f1: empty table");
    F1Report rep;
    for (int c = 0; c < 3; ++c) {
        std::uint64_t tp = table.counts[c][c];
        std::uint64_t pred = 0, gold = 0;
        for (int g = 0; g < 3; ++g) {
            pred += table.counts[g][c];
            gold += table.counts[c][g];
        }
        ClassScores& s = rep.per_class[c];
        s.precision = pred > 0 ? static_cast<double>(tp) / static_cast<double>(pred) : 0.0;
        s.recall = gold > 0 ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        rep.macro_precision += s.precision / 3.0;
        rep.macro_recall += s.recall / 3.0;
        rep.macro_f1 += s.f1 / 3.0;
    }
    return rep;
}

// Fraction of exact label matches; unparseable predictions count as
// mismatches rather than being excluded.
inline double agreement(std::span<const std::optional<JudgmentLabel>> preds,
                        std::span<const JudgmentLabel> golds) {
    if (preds.size() != golds.size()) throw std::invalid_argument("agreement: length mismatch");
    if (preds.empty()) throw std::invalid_argument("agreement: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] && *preds[i] == golds[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct CrossModeItem {
    std::optional<int> point_a;
    std::optional<int> point_b;
    std::optional<JudgmentLabel> label;
};

// Pointwise-pairwise consistency: the fraction of items whose pairwise label
// agrees with the pointwise score ordering. Items with any unparseable
// component count as inconsistent.
inline double consistency_score(std::span<const CrossModeItem> items) {
    if (items.empty()) throw std::invalid_argument("consistency_score: empty input");
    std::size_t consistent = 0;
    for (const auto& it : items) {
        if (it.point_a && it.point_b && it.label &&
            consistent_predicate(*it.label, *it.point_a, *it.point_b))
            ++consistent;
    }
    return static_cast<double>(consistent) / static_cast<double>(items.size());
}

// A flip: the prediction on the order-swapped input, relabeled A_win<->B_win,
// differs from the original prediction. Unparseable predictions on either
// side count as flips.
inline double position_flip_rate(std::span<const std::optional<JudgmentLabel>> original_preds,
                                 std::span<const std::optional<JudgmentLabel>> swapped_preds) {
    if (original_preds.size() != swapped_preds.size())
        throw std::invalid_argument("position_flip_rate: length mismatch");
    if (original_preds.empty()) throw std::invalid_argument("position_flip_rate: empty input");
    std::size_t flips = 0;
    for (std::size_t i = 0; i < original_preds.size(); ++i) {
        const auto& orig = original_preds[i];
        const auto& swap = swapped_preds[i];
        if (!orig || !swap || swap_label(*swap) != *orig) ++flips;
    }
    return static_cast<double>(flips) / static_cast<double>(original_preds.size());
}

struct LengthBias {
    // Among non-tie predictions on items with unequal lengths: fraction
    // preferring the longer answer. Absent when no item qualifies.
    std::optional<double> predicted_longer_rate;
    std::optional<double> gold_longer_rate;  // same statistic over gold labels
    std::size_t predicted_count = 0;
    std::size_t gold_count = 0;
};

inline LengthBias length_preference_rate(std::span<const std::optional<JudgmentLabel>> preds,
                                         std::span<const std::size_t> length_a,
                                         std::span<const std::size_t> length_b,
                                         std::span<const JudgmentLabel> golds = {}) {
    if (preds.size() != length_a.size() || preds.size() != length_b.size())
        throw std::invalid_argument("length_preference_rate: length mismatch");
    if (!golds.empty() && golds.size() != preds.size())
        throw std::invalid_argument("length_preference_rate: golds length mismatch");
    LengthBias bias;
    std::size_t pred_longer = 0, gold_longer = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (length_a[i] == length_b[i]) continue;
        bool a_longer = length_a[i] > length_b[i];
        if (preds[i] && *preds[i] != JudgmentLabel::Tie) {
            bias.predicted_count++;
            if ((*preds[i] == JudgmentLabel::AWin) == a_longer) ++pred_longer;
        }
        if (!golds.empty() && golds[i] != JudgmentLabel::Tie) {
            bias.gold_count++;
            if ((golds[i] == JudgmentLabel::AWin) == a_longer) ++gold_longer;
        }
    }
    if (bias.predicted_count > 0)
        bias.predicted_longer_rate =
            static_cast<double>(pred_longer) / static_cast<double>(bias.predicted_count);
    if (bias.gold_count > 0)
        bias.gold_longer_rate =
            static_cast<double>(gold_longer) / static_cast<double>(bias.gold_count);
    return bias;
}

}  // namespace fairjudge
