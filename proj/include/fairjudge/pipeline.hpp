#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairjudge/parser.hpp"
#include "fairjudge/records.hpp"
#include "fairjudge/rng.hpp"
#include "fairjudge/util.hpp"

namespace fairjudge {

// ---------------------------------------------------------------------------
// Text embedding
// ---------------------------------------------------------------------------

struct FeatureVector {
    std::vector<double> values;
    bool degenerate = false;  // no n-grams; not normalized
};

// Hashed character-trigram frequency vector, L2-normalized. Deterministic
// and dependency-free; precomputed vectors can be swapped in via the sidecar
// loader below.
inline FeatureVector embed_text(std::string_view text, std::size_t dim = 256) {
    if (dim == 0) throw std::invalid_argument("embed_text: dim must be > 0");
    FeatureVector fv;
    fv.values.assign(dim, 0.0);
    if (text.size() < 3) {
        fv.degenerate = true;
        return fv;
    }
    for (std::size_t i = 0; i + 3 <= text.size(); ++i)
        fv.values[fnv1a64(text.substr(i, 3)) % dim] += 1.0;
    double norm = 0.0;
    for (double v : fv.values) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : fv.values) v /= norm;
    return fv;
}

// Sidecar format: one JSON array of numbers per line, in record order.
inline std::vector<std::vector<double>> load_embedding_sidecar(const std::filesystem::path& path,
                                                               std::size_t expected_count) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding sidecar " + path.string());
    std::vector<std::vector<double>> vectors;
    std::string line;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_array())
            throw std::runtime_error("sidecar line " + std::to_string(vectors.size() + 1) +
                                     ": expected a JSON array");
        std::vector<double> v = j.get<std::vector<double>>();
        if (dim == 0) dim = v.size();
        if (v.size() != dim)
            throw std::runtime_error("sidecar dimension mismatch at line " +
                                     std::to_string(vectors.size() + 1));
        vectors.push_back(std::move(v));
    }
    if (vectors.size() != expected_count)
        throw std::runtime_error("sidecar has " + std::to_string(vectors.size()) +
                                 " vectors, expected " + std::to_string(expected_count));
    return vectors;
}

// ---------------------------------------------------------------------------
// KMeans (Lloyd + k-means++ init)
// ---------------------------------------------------------------------------

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    int iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// Nearest centroid; ties broken by lowest index.
inline int nearest_centroid(std::span<const double> point,
                            const std::vector<std::vector<double>>& centroids, double* dist2) {
    int best = 0;
    double best_d = sq_dist(point, centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        double d = sq_dist(point, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist2) *dist2 = best_d;
    return best;
}

}  // namespace detail

inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                           std::uint64_t seed, int max_iters = 100, double tol = 1e-6) {
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (points.empty() || static_cast<std::size_t>(k) > points.size())
        throw std::invalid_argument("kmeans: k exceeds number of points");
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    for (const auto& p : points)
        if (p.size() != dim) throw std::invalid_argument("kmeans: inconsistent dimensions");

    Rng rng(seed);
    KMeansResult res;
    res.centroids.push_back(points[rng.next_below(n)]);
    std::vector<double> min_d2(n, 0.0);
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            detail::nearest_centroid(points[i], res.centroids, &min_d2[i]);
            total += min_d2[i];
        }
        std::size_t chosen;
        if (total > 0.0) {
            chosen = rng.pick_weighted(min_d2);
        } else {
            chosen = rng.next_below(n);  // all points coincide with a centroid
        }
        res.centroids.push_back(points[chosen]);
    }

    res.assignments.assign(n, 0);
    for (int iter = 0; iter < max_iters; ++iter) {
        res.iterations = iter + 1;
        for (std::size_t i = 0; i < n; ++i)
            res.assignments[i] = detail::nearest_centroid(points[i], res.centroids, nullptr);

        double max_move = 0.0;
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(dim, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.assignments[i] != c) continue;
                ++count;
                for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
            }
            if (count == 0) continue;  // empty cluster keeps its centroid
            for (double& v : mean) v /= static_cast<double>(count);
            max_move = std::max(max_move, std::sqrt(detail::sq_dist(mean, res.centroids[c])));
            res.centroids[c] = std::move(mean);
        }
        if (max_move < tol) break;
    }

    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d2 = 0.0;
        res.assignments[i] = detail::nearest_centroid(points[i], res.centroids, &d2);
        res.inertia += d2;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Tagging
// ---------------------------------------------------------------------------

struct TaggedRecord {
    SourceRecord record;
    TagLabels tags;
};

struct TagOptions {
    int k = 8;
    std::size_t embedding_dim = 256;
    std::uint64_t seed = 0;
};

// Clusters records by question embedding and derives difficulty/winner tags
// from the score pair.
inline std::vector<TaggedRecord> tag_records(const std::vector<SourceRecord>& records,
                                             const RecordConfig& cfg, const TagOptions& opts,
                                             const std::vector<std::vector<double>>* embeddings = nullptr) {
    if (records.empty()) return {};
    std::vector<std::vector<double>> points;
    if (embeddings) {
        if (embeddings->size() != records.size())
            throw std::invalid_argument("tag_records: embedding count mismatch");
        points = *embeddings;
    } else {
        points.reserve(records.size());
        for (const auto& rec : records)
            points.push_back(embed_text(rec.question, opts.embedding_dim).values);
    }
    int k = std::min<int>(opts.k, static_cast<int>(points.size()));
    KMeansResult km = kmeans(points, k, opts.seed);
    std::vector<TaggedRecord> tagged;
    tagged.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        tagged.push_back({records[i], derive_tags(records[i], cfg, km.assignments[i])});
    return tagged;
}

// ---------------------------------------------------------------------------
// Stratified sampling
// ---------------------------------------------------------------------------

struct StratumKey {
    int cluster = 0;
    Difficulty difficulty = Difficulty::Hard;
    Winner winner = Winner::Tie;

    auto operator<=>(const StratumKey&) const = default;
};

struct StratumStat {
    std::size_t available = 0;
    std::size_t quota = 0;
    std::size_t sampled = 0;
};

struct SampleReport {
    std::map<StratumKey, StratumStat> strata;
    std::size_t requested = 0;
    std::size_t selected = 0;
    std::size_t excluded_both_bad = 0;
};

namespace detail {

// Even apportionment of `remaining` draws over strata, capped by stratum
// size, using largest-remainder top-ups; deterministic (ties favor earlier
// strata in key order).
inline void apportion_quotas(std::vector<std::pair<StratumKey, StratumStat*>>& strata,
                             std::size_t n) {
    std::size_t remaining = n;
    while (remaining > 0) {
        std::vector<StratumStat*> open;
        for (auto& [key, stat] : strata)
            if (stat->quota < stat->available) open.push_back(stat);
        if (open.empty()) break;
        std::size_t share = remaining / open.size();
        std::size_t extras = remaining % open.size();
        std::size_t granted = 0;
        for (std::size_t i = 0; i < open.size(); ++i) {
            std::size_t want = share + (i < extras ? 1 : 0);
            std::size_t room = open[i]->available - open[i]->quota;
            std::size_t take = std::min(want, room);
            open[i]->quota += take;
            granted += take;
        }
        if (granted == 0) break;
        remaining -= granted;
    }
}

}  // namespace detail

// Balanced subset of ~n records over (cluster x difficulty x winner) strata.
// both_bad records are never selected. Returns indices in input order.
inline std::vector<std::size_t> stratified_sample(std::span<const TagLabels> tags, std::size_t n,
                                                  std::uint64_t seed,
                                                  SampleReport* report = nullptr) {
    if (n < 1) throw std::invalid_argument("stratified_sample: n must be >= 1");
    std::map<StratumKey, std::vector<std::size_t>> strata;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i].winner == Winner::BothBad) {
            ++excluded;
            continue;
        }
        strata[{tags[i].cluster_id, tags[i].difficulty, tags[i].winner}].push_back(i);
    }
    if (strata.empty())
        throw std::invalid_argument("stratified_sample: no sampleable records (all both_bad)");

    SampleReport local;
    SampleReport& rep = report ? *report : local;
    rep.requested = n;
    rep.excluded_both_bad = excluded;
    std::vector<std::pair<StratumKey, StratumStat*>> ordered;
    for (const auto& [key, members] : strata) {
        rep.strata[key].available = members.size();
        ordered.emplace_back(key, &rep.strata[key]);
    }
    detail::apportion_quotas(ordered, n);

    std::vector<std::size_t> selected;
    for (auto& [key, stat] : ordered) {
        auto& members = strata[key];
        Rng rng(derive_seed(seed, fnv1a64(std::string(to_string(key.difficulty)) + "/" +
                                          to_string(key.winner)) ^
                                      static_cast<std::uint64_t>(key.cluster)));
        std::vector<std::size_t> pool = members;
        // Partial Fisher-Yates: draw quota elements without replacement.
        for (std::size_t i = 0; i < stat->quota; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            selected.push_back(pool[i]);
        }
        stat->sampled = stat->quota;
    }
    std::sort(selected.begin(), selected.end());
    rep.selected = selected.size();
    return selected;
}

inline json sample_report_to_json(const SampleReport& rep) {
    json strata = json::array();
    double total = static_cast<double>(rep.selected);
    for (const auto& [key, stat] : rep.strata) {
        json s;
        s["cluster"] = key.cluster;
        s["difficulty"] = to_string(key.difficulty);
        s["winner"] = to_string(key.winner);
        s["available"] = stat.available;
        s["quota"] = stat.quota;
        s["sampled"] = stat.sampled;
        s["share_pct"] = total > 0 ? 100.0 * static_cast<double>(stat.sampled) / total : 0.0;
        strata.push_back(std::move(s));
    }
    json j;
    j["requested"] = rep.requested;
    j["selected"] = rep.selected;
    j["excluded_both_bad"] = rep.excluded_both_bad;
    j["strata"] = std::move(strata);
    return j;
}

// ---------------------------------------------------------------------------
// Debiasing contrast pairs (DPO data)
// ---------------------------------------------------------------------------

enum class Perturbation { OrderSwap, LengthPad, FormatChange };

inline const char* to_string(Perturbation p) {
    switch (p) {
        case Perturbation::OrderSwap: return "order_swap";
        case Perturbation::LengthPad: return "length_pad";
        case Perturbation::FormatChange: return "format_change";
    }
    return "?";
}

inline std::optional<Perturbation> perturbation_from_string(std::string_view s) {
    std::string t = to_lower(trim(s));
    if (t == "order_swap") return Perturbation::OrderSwap;
    if (t == "length_pad") return Perturbation::LengthPad;
    if (t == "format_change") return Perturbation::FormatChange;
    return std::nullopt;
}

struct PreferencePair {
    EvaluationInstance input;
    std::string chosen;
    std::string rejected;
    Perturbation perturbation = Perturbation::OrderSwap;
};

struct DpoPairOptions {
    double length_pad_factor = 1.5;
};

namespace detail {

// Content-free filler sentences for length padding.
inline const std::vector<std::string>& pad_sentences() {
    static const std::vector<std::string> fillers = {
        "To elaborate further on the points above.",
        "In summary, the considerations already stated apply here as well.",
        "It is worth reiterating the same conclusion once more.",
        "As previously mentioned, the reasoning above remains unchanged.",
        "Additional detail does not alter the substance of this answer.",
    };
    return fillers;
}

inline std::string pad_answer(const std::string& answer, double factor, Rng& rng) {
    std::string padded = answer;
    std::size_t target = static_cast<std::size_t>(static_cast<double>(answer.size()) * factor);
    const auto& fillers = pad_sentences();
    while (padded.size() < target || padded.size() == answer.size()) {
        padded += ' ';
        padded += fillers[rng.next_below(fillers.size())];
    }
    return padded;
}

inline std::string decorate_answer(const std::string& answer) {
    return "**Key points**\n\n> " + answer + "\n\n---";
}

}  // namespace detail

struct MakeDpoResult {
    std::vector<PreferencePair> pairs;
    std::vector<std::string> skipped;  // kind + reason, e.g. tie gold for order_swap
};

// For each perturbation kind, renders a chosen completion that tracks answer
// content on the perturbed input and a rejected completion exhibiting the
// targeted bias. Perturbed inputs preserve answer semantics.
inline MakeDpoResult make_dpo_pairs(const EvaluationInstance& instance,
                                    const std::set<Perturbation>& kinds, std::uint64_t seed,
                                    const DpoPairOptions& opts = {}) {
    if (instance.mode != Mode::Pairwise || !instance.gold_label())
        throw std::invalid_argument("make_dpo_pairs: requires a pairwise instance with gold label");
    const JudgmentLabel gold = *instance.gold_label();
    MakeDpoResult result;

    for (Perturbation kind : kinds) {
        Rng rng(derive_seed(seed, fnv1a64(instance.id) ^ static_cast<std::uint64_t>(kind)));
        EvaluationInstance perturbed = instance;
        perturbed.id = instance.id + "#" + to_string(kind);
        JudgmentLabel chosen_label;
        JudgmentLabel rejected_label;

        switch (kind) {
            case Perturbation::OrderSwap: {
                if (gold == JudgmentLabel::Tie) {
                    result.skipped.push_back(std::string(to_string(kind)) +
                                             ": tie gold has no position-following flip");
                    continue;
                }
                std::swap(perturbed.answer_a, perturbed.answer_b);
                perturbed.gold = swap_label(gold);
                chosen_label = swap_label(gold);  // tracks content in new positions
                rejected_label = gold;            // tracks the original position
                break;
            }
            case Perturbation::LengthPad: {
                // Pad the losing answer (B on ties) so preferring the longer
                // answer contradicts the gold.
                bool pad_b = gold != JudgmentLabel::BWin;
                std::string& target = pad_b ? perturbed.answer_b : perturbed.answer_a;
                target = detail::pad_answer(target, opts.length_pad_factor, rng);
                chosen_label = gold;
                rejected_label = pad_b ? JudgmentLabel::BWin : JudgmentLabel::AWin;
                break;
            }
            case Perturbation::FormatChange: {
                bool decorate_b = gold != JudgmentLabel::BWin;
                std::string& target = decorate_b ? perturbed.answer_b : perturbed.answer_a;
                target = detail::decorate_answer(target);
                chosen_label = gold;
                rejected_label = decorate_b ? JudgmentLabel::BWin : JudgmentLabel::AWin;
                break;
            }
        }
        PreferencePair pair;
        pair.input = std::move(perturbed);
        pair.chosen = render_judgment(chosen_label);
        pair.rejected = render_judgment(rejected_label);
        pair.perturbation = kind;
        result.pairs.push_back(std::move(pair));
    }
    return result;
}

inline json preference_pair_to_json(const PreferencePair& pair) {
    json j;
    j["input"] = instance_to_json(pair.input);
    j["chosen"] = pair.chosen;
    j["rejected"] = pair.rejected;
    j["perturbation"] = to_string(pair.perturbation);
    return j;
}

inline PreferencePair preference_pair_from_json(const json& j) {
    PreferencePair pair;
    pair.input = instance_from_json(j.at("input"));
    pair.chosen = j.at("chosen").get<std::string>();
    pair.rejected = j.at("rejected").get<std::string>();
    auto kind = perturbation_from_string(j.at("perturbation").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown perturbation kind");
    pair.perturbation = *kind;
    return pair;
}

// ---------------------------------------------------------------------------
// Cross-mode pairs (GRPO data)
// ---------------------------------------------------------------------------

struct CrossModePair {
    EvaluationInstance pointwise_a;
    EvaluationInstance pointwise_b;
    EvaluationInstance pairwise;
    std::string linkage_id;
};

// Two pointwise instances (one per answer, gold = that answer's score) and
// one pairwise instance (gold = derived winner) over the same answer texts.
// The gold triple satisfies consistent_predicate by construction. both_bad
// records are skipped.
inline std::optional<CrossModePair> make_crossmode_pair(const SourceRecord& record,
                                                        std::string_view id,
                                                        const RecordConfig& cfg = {}) {
    Winner w = derive_winner(record.score_a, record.score_b, cfg.both_bad_threshold,
                             cfg.score_range);
    if (w == Winner::BothBad) return std::nullopt;
    JudgmentLabel label = w == Winner::AWin   ? JudgmentLabel::AWin
                          : w == Winner::BWin ? JudgmentLabel::BWin
                                              : JudgmentLabel::Tie;
    CrossModePair pair;
    pair.linkage_id = std::string(id);

    EvaluationInstance base;
    base.task = record.question;
    base.answer_a = record.answer_a;
    base.answer_b = record.answer_b;

    pair.pairwise = base;
    pair.pairwise.id = pair.linkage_id + "/pairwise";
    pair.pairwise.mode = Mode::Pairwise;
    pair.pairwise.gold = label;

    pair.pointwise_a = base;
    pair.pointwise_a.id = pair.linkage_id + "/point_a";
    pair.pointwise_a.mode = Mode::Pointwise;
    pair.pointwise_a.answer_a = record.answer_a;
    pair.pointwise_a.answer_b.clear();
    pair.pointwise_a.gold = PointGold{record.score_a, std::nullopt};

    pair.pointwise_b = base;
    pair.pointwise_b.id = pair.linkage_id + "/point_b";
    pair.pointwise_b.mode = Mode::Pointwise;
    pair.pointwise_b.answer_a = record.answer_b;
    pair.pointwise_b.answer_b.clear();
    pair.pointwise_b.gold = PointGold{record.score_b, std::nullopt};

    return pair;
}

inline json crossmode_pair_to_json(const CrossModePair& pair) {
    json j;
    j["linkage_id"] = pair.linkage_id;
    j["pointwise_a"] = instance_to_json(pair.pointwise_a);
    j["pointwise_b"] = instance_to_json(pair.pointwise_b);
    j["pairwise"] = instance_to_json(pair.pairwise);
    return j;
}

inline CrossModePair crossmode_pair_from_json(const json& j) {
    CrossModePair pair;
    pair.linkage_id = j.at("linkage_id").get<std::string>();
    pair.pointwise_a = instance_from_json(j.at("pointwise_a"));
    pair.pointwise_b = instance_from_json(j.at("pointwise_b"));
    pair.pairwise = instance_from_json(j.at("pairwise"));
    return pair;
}

}  // namespace fairjudge
