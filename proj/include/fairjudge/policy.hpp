#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairjudge/losses.hpp"
#include "fairjudge/metrics.hpp"
#include "fairjudge/parser.hpp"
#include "fairjudge/pipeline.hpp"
#include "fairjudge/records.hpp"
#include "fairjudge/reward.hpp"
#include "fairjudge/rng.hpp"

namespace fairjudge {

// ---------------------------------------------------------------------------
// Context featurization
// ---------------------------------------------------------------------------

namespace detail {

inline int length_bucket(std::size_t len) {
    if (len < 32) return 0;
    if (len < 128) return 1;
    if (len < 512) return 2;
    return 3;
}

}  // namespace detail

// Packs (mode, rubric presence, unordered length buckets, order-sensitive
// answer fingerprint) into a small context id. Swapping the answers of an
// instance changes only the fingerprint bits.
inline int featurize(const EvaluationInstance& inst) {
    int mode_bit = inst.mode == Mode::Pairwise ? 1 : 0;
    int rubric_bit = inst.rubric && !trim(*inst.rubric).empty() ? 1 : 0;
    int ba = detail::length_bucket(inst.answer_a.size());
    int bb = detail::length_bucket(inst.answer_b.size());
    int lo = std::min(ba, bb);
    int hi = std::max(ba, bb);
    int fp = static_cast<int>(fnv1a64(inst.answer_a + '\x1f' + inst.answer_b) & 0xF);
    return mode_bit | rubric_bit << 1 | lo << 2 | hi << 4 | fp << 6;
}

inline bool context_is_pairwise(int context_id) { return (context_id & 1) != 0; }

// ---------------------------------------------------------------------------
// Toy judge policy: a softmax logit table over discrete contexts
// ---------------------------------------------------------------------------

// Pairwise contexts emit {A_win, B_win, tie}; pointwise contexts emit the
// score grid of the configured range through a categorical head, so Int(c)
// and the sp_point reward apply unchanged. Unseen contexts are uniform.
class ToyJudgePolicy {
  public:
    explicit ToyJudgePolicy(ScoreRange score_range = {}) : score_range_(score_range) {}

    const ScoreRange& score_range() const { return score_range_; }

    int arity(int context_id) const {
        return context_is_pairwise(context_id) ? 3 : score_range_.width();
    }

    bool has_context(int context_id) const { return rows_.count(context_id) > 0; }

    // Mutable row access; creates a zero (uniform) row on first touch.
    std::vector<double>& row(int context_id) {
        auto it = rows_.find(context_id);
        if (it == rows_.end())
            it = rows_.emplace(context_id, std::vector<double>(arity(context_id), 0.0)).first;
        return it->second;
    }

    std::vector<double> probs(int context_id) const {
        auto it = rows_.find(context_id);
        if (it == rows_.end()) {
            int n = arity(context_id);
            return std::vector<double>(n, 1.0 / n);
        }
        return softmax(it->second);
    }

    double logprob(int context_id, int output_id) const {
        int n = arity(context_id);
        if (output_id < 0 || output_id >= n)
            throw std::out_of_range("policy: output id " + std::to_string(output_id) +
                                    " out of range for context " + std::to_string(context_id));
        auto it = rows_.find(context_id);
        if (it == rows_.end()) return -std::log(static_cast<double>(n));
        const auto& logits = it->second;
        double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - mx);
        return logits[output_id] - mx - std::log(sum);
    }

    // Deterministic greedy decision; ties resolve to the lowest index.
    int argmax(int context_id) const {
        auto it = rows_.find(context_id);
        if (it == rows_.end()) return 0;
        const auto& logits = it->second;
        return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }

    int score_to_output(int score) const {
        if (!score_range_.contains(score))
            throw std::out_of_range("policy: score " + std::to_string(score) + " out of range");
        return score - score_range_.lo;
    }
    int output_to_score(int output_id) const { return score_range_.lo + output_id; }

    const std::map<int, std::vector<double>>& rows() const { return rows_; }

    static std::vector<double> softmax(std::span<const double> logits) {
        double mx = *std::max_element(logits.begin(), logits.end());
        std::vector<double> p(logits.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            p[i] = std::exp(logits[i] - mx);
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return p;
    }

  private:
    ScoreRange score_range_;
    std::map<int, std::vector<double>> rows_;
};

inline double policy_logprob(const ToyJudgePolicy& policy, int context_id, int output_id) {
    return policy.logprob(context_id, output_id);
}

// M independent draws from the policy distribution at a context.
inline std::vector<int> sample_group(const ToyJudgePolicy& policy, int context_id, int m,
                                     Rng& rng) {
    if (m < 1) throw std::invalid_argument("sample_group: M must be >= 1");
    std::vector<double> p = policy.probs(context_id);
    std::vector<int> out;
    out.reserve(m);
    for (int j = 0; j < m; ++j) {
        double u = rng.next_double();
        double acc = 0.0;
        int pick = static_cast<int>(p.size()) - 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) {
                pick = static_cast<int>(i);
                break;
            }
        }
        out.push_back(pick);
    }
    return out;
}

inline std::vector<int> sample_group(const ToyJudgePolicy& policy, int context_id, int m,
                                     std::uint64_t seed) {
    Rng rng(seed);
    return sample_group(policy, context_id, m, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline json policy_to_json(const ToyJudgePolicy& policy) {
    json j;
    j["format"] = "fairjudge-policy";
    j["version"] = 1;
    j["score_range"] = json::array({policy.score_range().lo, policy.score_range().hi});
    json rows = json::object();
    for (const auto& [ctx, logits] : policy.rows()) rows[std::to_string(ctx)] = logits;
    j["rows"] = std::move(rows);
    return j;
}

inline ToyJudgePolicy policy_from_json(const json& j) {
    if (j.value("format", std::string{}) != "fairjudge-policy")
        throw std::invalid_argument("not a policy checkpoint");
    if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported checkpoint version");
    ScoreRange range{j.at("score_range").at(0).get<int>(), j.at("score_range").at(1).get<int>()};
    ToyJudgePolicy policy(range);
    for (const auto& [key, logits] : j.at("rows").items()) {
        int ctx = std::stoi(key);
        auto values = logits.get<std::vector<double>>();
        if (static_cast<int>(values.size()) != policy.arity(ctx))
            throw std::invalid_argument("checkpoint row arity mismatch at context " + key);
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit in checkpoint");
        policy.row(ctx) = std::move(values);
    }
    return policy;
}

inline void save_policy(const std::filesystem::path& path, const ToyJudgePolicy& policy) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << policy_to_json(policy).dump(2) << '\n';
}

inline ToyJudgePolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return policy_from_json(j);
}

// ---------------------------------------------------------------------------
// Per-datum objectives and analytic gradients (shared by trainer and checks)
// ---------------------------------------------------------------------------

inline double sft_datum_loss(const ToyJudgePolicy& policy, int ctx, int target) {
    return -policy.logprob(ctx, target);
}

inline std::vector<double> sft_datum_grad(const ToyJudgePolicy& policy, int ctx, int target) {
    std::vector<double> grad = policy.probs(ctx);
    grad[target] -= 1.0;
    return grad;
}

inline double dpo_datum_loss(const ToyJudgePolicy& policy, const ToyJudgePolicy& ref, int ctx,
                             int y_pos, int y_neg, double beta) {
    DpoExample ex{policy.logprob(ctx, y_pos), policy.logprob(ctx, y_neg),
                  ref.logprob(ctx, y_pos), ref.logprob(ctx, y_neg), beta};
    return -detail::log_sigmoid(dpo_margin(ex));
}

inline std::vector<double> dpo_datum_grad(const ToyJudgePolicy& policy, const ToyJudgePolicy& ref,
                                          int ctx, int y_pos, int y_neg, double beta) {
    DpoExample ex{policy.logprob(ctx, y_pos), policy.logprob(ctx, y_neg),
                  ref.logprob(ctx, y_pos), ref.logprob(ctx, y_neg), beta};
    double coeff = -detail::stable_sigmoid(-dpo_margin(ex)) * beta;
    std::vector<double> grad(policy.arity(ctx), 0.0);
    grad[y_pos] += coeff;
    grad[y_neg] -= coeff;
    return grad;
}

// Clipped-surrogate objective for one sampled group with fixed outputs and
// rewards: (1/M) sum min(rho*A, clip(rho)*A) - lambda * KL(pi_phi || pi_ref)
// at this context. Returned as an objective to maximize.
inline double grpo_datum_objective(const ToyJudgePolicy& policy, const ToyJudgePolicy& ref,
                                   int ctx, std::span<const int> outputs,
                                   std::span<const double> rewards, double epsilon,
                                   double lambda_kl) {
    GrpoGroup group;
    group.epsilon = epsilon;
    group.lambda_kl = lambda_kl;
    for (std::size_t j = 0; j < outputs.size(); ++j) {
        group.rewards.push_back(rewards[j]);
        group.logp_pol.push_back(policy.logprob(ctx, outputs[j]));
        group.logp_ref.push_back(ref.logprob(ctx, outputs[j]));
    }
    std::vector<double> adv = grpo_advantages(group.rewards);
    double kl = exact_kl(policy.probs(ctx), ref.probs(ctx));
    return grpo_surrogate(group, adv, kl);
}

inline std::vector<double> grpo_datum_grad(const ToyJudgePolicy& policy, const ToyJudgePolicy& ref,
                                           int ctx, std::span<const int> outputs,
                                           std::span<const double> rewards, double epsilon,
                                           double lambda_kl) {
    const std::vector<double> p = policy.probs(ctx);
    const std::vector<double> q = ref.probs(ctx);
    std::vector<double> adv = grpo_advantages(rewards);
    const double m = static_cast<double>(outputs.size());
    std::vector<double> grad(p.size(), 0.0);

    for (std::size_t j = 0; j < outputs.size(); ++j) {
        int y = outputs[j];
        double rho = std::exp(policy.logprob(ctx, y) - ref.logprob(ctx, y));
        double lo = 1.0 - epsilon, hi = 1.0 + epsilon;
        double u = rho * adv[j];
        double v = std::clamp(rho, lo, hi) * adv[j];
        double coeff;
        if (u <= v) {
            coeff = adv[j] * rho;  // unclipped branch active
        } else if (rho > lo && rho < hi) {
            coeff = adv[j] * rho;  // clip is the identity inside the interval
        } else {
            coeff = 0.0;  // saturated clip blocks the gradient
        }
        if (coeff == 0.0) continue;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            double indicator = static_cast<int>(i) == y ? 1.0 : 0.0;
            grad[i] += coeff * (indicator - p[i]) / m;
        }
    }

    if (lambda_kl > 0.0) {
        double kl = exact_kl(p, q);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            double ell = std::log(p[i]) - std::log(q[i]);
            grad[i] -= lambda_kl * p[i] * (ell - kl);
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    double tolerance = 0.0;
    bool pass = false;
};

// Compares an analytic gradient against central differences of `objective`
// over every entry of `params`, perturbing in place.
template <class Objective>
GradCheckReport compare_gradients(std::vector<double>& params,
                                  std::span<const double> analytic, Objective&& objective,
                                  double step, double tol) {
    if (step <= 0.0) throw std::invalid_argument("compare_gradients: step must be > 0");
    if (analytic.size() != params.size())
        throw std::invalid_argument("compare_gradients: gradient size mismatch");
    GradCheckReport rep;
    rep.tolerance = tol;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = params[i];
        params[i] = saved + step;
        double up = objective();
        params[i] = saved - step;
        double down = objective();
        params[i] = saved;
        double fd = (up - down) / (2.0 * step);
        double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - fd) / denom);
        ++rep.checked;
    }
    rep.pass = rep.max_rel_error < tol;
    return rep;
}

inline GradCheckReport grad_check_sft(ToyJudgePolicy& policy, int ctx, int target, double step,
                                      double tol) {
    std::vector<double> grad = sft_datum_grad(policy, ctx, target);
    return compare_gradients(
        policy.row(ctx), grad, [&] { return sft_datum_loss(policy, ctx, target); }, step, tol);
}

inline GradCheckReport grad_check_dpo(ToyJudgePolicy& policy, const ToyJudgePolicy& ref, int ctx,
                                      int y_pos, int y_neg, double beta, double step, double tol) {
    std::vector<double> grad = dpo_datum_grad(policy, ref, ctx, y_pos, y_neg, beta);
    return compare_gradients(
        policy.row(ctx), grad,
        [&] { return dpo_datum_loss(policy, ref, ctx, y_pos, y_neg, beta); }, step, tol);
}

inline GradCheckReport grad_check_grpo(ToyJudgePolicy& policy, const ToyJudgePolicy& ref, int ctx,
                                       const std::vector<int>& outputs,
                                       const std::vector<double>& rewards, double epsilon,
                                       double lambda_kl, double step, double tol) {
    std::vector<double> grad =
        grpo_datum_grad(policy, ref, ctx, outputs, rewards, epsilon, lambda_kl);
    return compare_gradients(
        policy.row(ctx), grad,
        [&] { return grpo_datum_objective(policy, ref, ctx, outputs, rewards, epsilon, lambda_kl); },
        step, tol);
}

// ---------------------------------------------------------------------------
// Curriculum training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int sft_epochs = 20;
    int dpo_epochs = 20;
    int grpo_epochs = 20;
    double learning_rate = 0.5;
    int group_size = 8;
    std::uint64_t seed = 0;
    CurriculumWeights weights{};
    double beta = 0.1;
    double epsilon = 0.2;
    double lambda_kl = 0.01;

    enum class RefRefresh { PerStage, Never };
    RefRefresh ref_refresh = RefRefresh::PerStage;

    void validate() const {
        if (sft_epochs < 0 || dpo_epochs < 0 || grpo_epochs < 0)
            throw std::invalid_argument("train: epochs must be >= 0");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
        if (grpo_epochs > 0 && group_size < 2)
            throw std::invalid_argument("train: group_size must be >= 2 for the GRPO stage");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("train: epsilon must be in (0, 1)");
        if (lambda_kl < 0.0) throw std::invalid_argument("train: lambda_kl must be >= 0");
        if (!(beta > 0.0)) throw std::invalid_argument("train: beta must be > 0");
        if (weights.lambda_dpo < 0.0 || weights.lambda_grpo < 0.0)
            throw std::invalid_argument("train: curriculum weights must be >= 0");
    }
};

// One consistency-reward task for the GRPO stage: sample judgments at the
// instance's context and score them against the ground truths.
struct GrpoTask {
    EvaluationInstance instance;
    TaskType task = TaskType::PairwisePreference;
    int g1 = 0;
    int g2 = 0;
    std::string g1_text;  // sp_pair reference
};

// Expands a cross-mode pair into its consistency-reward tasks: pp on the
// pairwise instance, sp_point per pointwise instance, and optionally an
// sp_pair fast-mode echo of the pairwise gold.
inline std::vector<GrpoTask> crossmode_to_grpo_tasks(const CrossModePair& pair,
                                                     bool include_sp_pair = true) {
    const PointGold* ga = pair.pointwise_a.gold_scores();
    const PointGold* gb = pair.pointwise_b.gold_scores();
    const JudgmentLabel* lab = pair.pairwise.gold_label();
    if (!ga || !gb || !lab)
        throw std::invalid_argument("crossmode_to_grpo_tasks: malformed pair " + pair.linkage_id);
    std::vector<GrpoTask> tasks;
    tasks.push_back({pair.pairwise, TaskType::PairwisePreference, ga->score_a, gb->score_a, {}});
    tasks.push_back({pair.pointwise_a, TaskType::ScalarPoint, ga->score_a, 0, {}});
    tasks.push_back({pair.pointwise_b, TaskType::ScalarPoint, gb->score_a, 0, {}});
    if (include_sp_pair)
        tasks.push_back({pair.pairwise, TaskType::ExactPair, 0, 0, to_string(*lab)});
    return tasks;
}

struct CurriculumDataset {
    std::vector<EvaluationInstance> sft;
    std::vector<PreferencePair> dpo;
    std::vector<GrpoTask> grpo;
    std::vector<CrossModePair> eval;  // held-out metric snapshots
};

struct StageSnapshot {
    bool present = false;
    double consistency = 0.0;
    double flip_rate = 0.0;
    double agreement = 0.0;
};

struct TrainReport {
    std::vector<double> sft_loss;
    std::vector<double> dpo_loss;
    std::vector<double> grpo_objective;
    std::vector<double> grpo_reward_mean;
    StageSnapshot init, post_sft, post_dpo, post_grpo;
    std::size_t dpo_skipped = 0;
};

inline JudgmentLabel output_to_label(int output_id) {
    switch (output_id) {
        case 0: return JudgmentLabel::AWin;
        case 1: return JudgmentLabel::BWin;
        case 2: return JudgmentLabel::Tie;
    }
    throw std::out_of_range("output id is not a judgment label");
}

inline JudgmentLabel predict_pairwise(const ToyJudgePolicy& policy,
                                      const EvaluationInstance& inst) {
    if (inst.mode != Mode::Pairwise)
        throw std::invalid_argument("predict_pairwise: instance is not pairwise");
    return output_to_label(policy.argmax(featurize(inst)));
}

inline int predict_point_score(const ToyJudgePolicy& policy, const EvaluationInstance& inst) {
    if (inst.mode != Mode::Pointwise)
        throw std::invalid_argument("predict_point_score: instance is not pointwise");
    return policy.output_to_score(policy.argmax(featurize(inst)));
}

inline EvaluationInstance swap_answers(const EvaluationInstance& inst) {
    EvaluationInstance swapped = inst;
    std::swap(swapped.answer_a, swapped.answer_b);
    if (const auto* lab = inst.gold_label()) swapped.gold = swap_label(*lab);
    return swapped;
}

// Held-out snapshot: the policy's own cross-mode consistency, its position
// flip rate under answer swaps, and agreement with the gold labels.
inline StageSnapshot evaluate_policy(const ToyJudgePolicy& policy,
                                     std::span<const CrossModePair> pairs) {
    StageSnapshot snap;
    if (pairs.empty()) return snap;
    std::vector<CrossModeItem> items;
    std::vector<std::optional<JudgmentLabel>> preds, swapped_preds;
    std::vector<JudgmentLabel> golds;
    for (const auto& pair : pairs) {
        CrossModeItem item;
        item.point_a = predict_point_score(policy, pair.pointwise_a);
        item.point_b = predict_point_score(policy, pair.pointwise_b);
        item.label = predict_pairwise(policy, pair.pairwise);
        items.push_back(item);
        preds.push_back(item.label);
        swapped_preds.push_back(predict_pairwise(policy, swap_answers(pair.pairwise)));
        golds.push_back(*pair.pairwise.gold_label());
    }
    snap.present = true;
    snap.consistency = consistency_score(items);
    snap.flip_rate = position_flip_rate(preds, swapped_preds);
    snap.agreement = agreement(preds, golds);
    return snap;
}

namespace detail {

inline void check_finite_loss(double loss, const char* stage, int epoch, std::size_t step) {
    if (!std::isfinite(loss))
        throw std::runtime_error(std::string("train: non-finite loss in ") + stage + " epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step));
}

struct SftDatum {
    int ctx;
    int target;
};

inline SftDatum sft_datum(const ToyJudgePolicy& policy, const EvaluationInstance& inst) {
    validate_instance(inst);
    int ctx = featurize(inst);
    if (inst.mode == Mode::Pairwise)
        return {ctx, static_cast<int>(*inst.gold_label())};
    return {ctx, policy.score_to_output(inst.gold_scores()->score_a)};
}

inline std::string render_task_completion(const ToyJudgePolicy& policy, const GrpoTask& task,
                                          int output_id) {
    switch (task.task) {
        case TaskType::PairwisePreference:
            return render_judgment(output_to_label(output_id));
        case TaskType::ScalarPoint:
            return render_point_score(policy.output_to_score(output_id));
        case TaskType::ExactPair:
            return render_judgment(output_to_label(output_id), ParseMode::Fast);
    }
    return {};
}

inline GroundTruth task_g1(const GrpoTask& task) {
    if (task.task == TaskType::ExactPair) return task.g1_text;
    return task.g1;
}

}  // namespace detail

// SFT -> DPO -> GRPO curriculum over the toy policy. Each stage descends its
// own objective scaled by the curriculum weight; reference policies freeze
// at stage boundaries per config. Deterministic under the config seed.
inline ToyJudgePolicy train_curriculum(ToyJudgePolicy policy, const CurriculumDataset& data,
                                       const TrainConfig& cfg, TrainReport* report = nullptr) {
    cfg.validate();
    if (cfg.sft_epochs > 0 && data.sft.empty())
        throw std::invalid_argument("train: SFT stage scheduled but no SFT instances");
    if (cfg.dpo_epochs > 0 && data.dpo.empty())
        throw std::invalid_argument("train: DPO stage scheduled but no preference pairs");
    if (cfg.grpo_epochs > 0 && data.grpo.empty())
        throw std::invalid_argument("train: GRPO stage scheduled but no group tasks");

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep = TrainReport{};
    rep.init = evaluate_policy(policy, data.eval);

    ToyJudgePolicy ref = policy;  // reference for DPO/GRPO; refreshed below

    // Stage I: supervised fine-tuning.
    for (int epoch = 0; epoch < cfg.sft_epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t i = 0; i < data.sft.size(); ++i) {
            auto [ctx, target] = detail::sft_datum(policy, data.sft[i]);
            double loss = sft_datum_loss(policy, ctx, target);
            detail::check_finite_loss(loss, "sft", epoch, i);
            total += loss;
            std::vector<double> grad = sft_datum_grad(policy, ctx, target);
            auto& row = policy.row(ctx);
            for (std::size_t k = 0; k < row.size(); ++k)
                row[k] -= cfg.learning_rate * grad[k];
        }
        rep.sft_loss.push_back(total / static_cast<double>(data.sft.size()));
    }
    rep.post_sft = evaluate_policy(policy, data.eval);
    ref = policy;  // freeze the SFT checkpoint

    // Stage II: debiasing via DPO on chosen/rejected judgment pairs.
    struct DpoDatum {
        int ctx;
        int y_pos;
        int y_neg;
    };
    std::vector<DpoDatum> dpo_data;
    for (const auto& pair : data.dpo) {
        LabelParse chosen = extract_judgment(pair.chosen);
        LabelParse rejected = extract_judgment(pair.rejected);
        if (!chosen.ok() || !rejected.ok()) {
            rep.dpo_skipped++;
            continue;
        }
        dpo_data.push_back({featurize(pair.input), static_cast<int>(*chosen.label),
                            static_cast<int>(*rejected.label)});
    }
    if (cfg.dpo_epochs > 0 && dpo_data.empty())
        throw std::invalid_argument("train: no parseable preference pairs for DPO stage");
    for (int epoch = 0; epoch < cfg.dpo_epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t i = 0; i < dpo_data.size(); ++i) {
            const auto& d = dpo_data[i];
            double loss = dpo_datum_loss(policy, ref, d.ctx, d.y_pos, d.y_neg, cfg.beta);
            detail::check_finite_loss(loss, "dpo", epoch, i);
            total += loss;
            std::vector<double> grad =
                dpo_datum_grad(policy, ref, d.ctx, d.y_pos, d.y_neg, cfg.beta);
            auto& row = policy.row(d.ctx);
            for (std::size_t k = 0; k < row.size(); ++k)
                row[k] -= cfg.learning_rate * cfg.weights.lambda_dpo * grad[k];
        }
        if (!dpo_data.empty())
            rep.dpo_loss.push_back(total / static_cast<double>(dpo_data.size()));
    }
    rep.post_dpo = evaluate_policy(policy, data.eval);
    if (cfg.ref_refresh == TrainConfig::RefRefresh::PerStage) ref = policy;

    // Stage III: consistency optimization via GRPO. Groups are sampled from
    // the reference policy and scored through the real parser/reward path.
    Rng grpo_rng(derive_seed(cfg.seed, fnv1a64("grpo-stage")));
    for (int epoch = 0; epoch < cfg.grpo_epochs; ++epoch) {
        double obj_total = 0.0;
        double reward_total = 0.0;
        std::size_t reward_count = 0;
        for (std::size_t i = 0; i < data.grpo.size(); ++i) {
            const GrpoTask& task = data.grpo[i];
            int ctx = featurize(task.instance);
            std::vector<int> outputs = sample_group(ref, ctx, cfg.group_size, grpo_rng);
            std::vector<double> rewards;
            rewards.reserve(outputs.size());
            for (int out : outputs) {
                RewardResult r = consistency_reward(
                    detail::render_task_completion(policy, task, out), task.task,
                    detail::task_g1(task),
                    task.task == TaskType::PairwisePreference ? std::optional<int>(task.g2)
                                                              : std::nullopt);
                rewards.push_back(r.value);
                reward_total += r.value;
                ++reward_count;
            }
            double obj = grpo_datum_objective(policy, ref, ctx, outputs, rewards, cfg.epsilon,
                                              cfg.lambda_kl);
            detail::check_finite_loss(obj, "grpo", epoch, i);
            obj_total += obj;
            std::vector<double> grad =
                grpo_datum_grad(policy, ref, ctx, outputs, rewards, cfg.epsilon, cfg.lambda_kl);
            auto& row = policy.row(ctx);
            // Ascent: the surrogate is maximized.
            for (std::size_t k = 0; k < row.size(); ++k)
                row[k] += cfg.learning_rate * cfg.weights.lambda_grpo * grad[k];
        }
        if (!data.grpo.empty()) {
            rep.grpo_objective.push_back(obj_total / static_cast<double>(data.grpo.size()));
            rep.grpo_reward_mean.push_back(reward_total / static_cast<double>(reward_count));
        }
    }
    rep.post_grpo = evaluate_policy(policy, data.eval);
    return policy;
}

inline json snapshot_to_json(const StageSnapshot& snap) {
    if (!snap.present) return json(nullptr);
    json j;
    j["consistency"] = snap.consistency;
    j["flip_rate"] = snap.flip_rate;
    j["agreement"] = snap.agreement;
    return j;
}

inline json train_report_to_json(const TrainReport& rep) {
    json j;
    j["sft_loss"] = rep.sft_loss;
    j["dpo_loss"] = rep.dpo_loss;
    j["grpo_objective"] = rep.grpo_objective;
    j["grpo_reward_mean"] = rep.grpo_reward_mean;
    j["dpo_skipped"] = rep.dpo_skipped;
    j["snapshots"] = {{"init", snapshot_to_json(rep.init)},
                      {"post_sft", snapshot_to_json(rep.post_sft)},
                      {"post_dpo", snapshot_to_json(rep.post_dpo)},
                      {"post_grpo", snapshot_to_json(rep.post_grpo)}};
    return j;
}

}  // namespace fairjudge
