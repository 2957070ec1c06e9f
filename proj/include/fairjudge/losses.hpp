#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairjudge {

namespace detail {

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " is not finite");
}

// log(sigmoid(z)) = -softplus(-z), stable for large |z|.
inline double log_sigmoid(double z) {
    if (z >= 0.0) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

inline double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace detail

struct DpoExample {
    double logp_pol_chosen = 0.0;
    double logp_pol_rejected = 0.0;
    double logp_ref_chosen = 0.0;
    double logp_ref_rejected = 0.0;
    double beta = 0.1;
};

// Reference-normalized preference margin beta * [(pol+ - pol-) - (ref+ - ref-)].
inline double dpo_margin(const DpoExample& ex) {
    if (!(ex.beta > 0.0)) throw std::invalid_argument("dpo: beta must be > 0");
    detail::require_finite(ex.logp_pol_chosen, "logp_pol_chosen");
    detail::require_finite(ex.logp_pol_rejected, "logp_pol_rejected");
    detail::require_finite(ex.logp_ref_chosen, "logp_ref_chosen");
    detail::require_finite(ex.logp_ref_rejected, "logp_ref_rejected");
    return ex.beta * ((ex.logp_pol_chosen - ex.logp_pol_rejected) -
                      (ex.logp_ref_chosen - ex.logp_ref_rejected));
}

inline double dpo_preference_prob(const DpoExample& ex) {
    return detail::stable_sigmoid(dpo_margin(ex));
}

// Mean negative log preference likelihood, evaluated in log space so large
// margins do not underflow through an intermediate sigmoid.
inline double dpo_loss(std::span<const DpoExample> batch) {
    if (batch.empty()) throw std::invalid_argument("dpo_loss: empty batch");
    double total = 0.0;
    for (const DpoExample& ex : batch) total += -detail::log_sigmoid(dpo_margin(ex));
    return total / static_cast<double>(batch.size());
}

// Group-relative advantages (r_j - mean) / population std. A zero-variance
// group is a no-op: all advantages are zero.
inline std::vector<double> grpo_advantages(std::span<const double> rewards) {
    if (rewards.empty()) throw std::invalid_argument("grpo_advantages: empty group");
    const double m = static_cast<double>(rewards.size());
    double mean = 0.0;
    bool all_equal = true;
    for (double r : rewards) {
        detail::require_finite(r, "reward");
        mean += r;
        all_equal = all_equal && r == rewards[0];
    }
    mean /= m;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= m;
    std::vector<double> adv(rewards.size(), 0.0);
    // sigma = 0 iff the rewards coincide; the equality test avoids declaring
    // spurious variance when the accumulated mean rounds.
    if (all_equal || var <= 0.0) return adv;
    double sd = std::sqrt(var);
    for (std::size_t j = 0; j < rewards.size(); ++j) adv[j] = (rewards[j] - mean) / sd;
    return adv;
}

struct GrpoGroup {
    std::vector<double> rewards;
    std::vector<double> logp_pol;
    std::vector<double> logp_ref;
    double epsilon = 0.2;
    double lambda_kl = 0.01;
};

inline void validate_group(const GrpoGroup& g) {
    if (g.rewards.empty()) throw std::invalid_argument("grpo: empty group");
    if (g.logp_pol.size() != g.rewards.size() || g.logp_ref.size() != g.rewards.size())
        throw std::invalid_argument("grpo: rewards/logp vectors must have identical length");
    // The trained configuration keeps epsilon in (0,1); any positive value is
    // accepted here so the unclipped limit is expressible.
    if (!(g.epsilon > 0.0)) throw std::invalid_argument("grpo: epsilon must be > 0");
    if (g.lambda_kl < 0.0) throw std::invalid_argument("grpo: lambda_kl must be >= 0");
    for (double r : g.rewards)
        if (!(r >= 0.0 && r <= 2.0)) throw std::invalid_argument("grpo: reward outside [0, 2]");
}

// Clipped surrogate (1/M) sum min(rho*A, clip(rho)*A) - lambda*kl. This is
// the objective to MAXIMIZE; combined_loss negates it.
inline double grpo_surrogate(const GrpoGroup& group, std::span<const double> advantages,
                             double kl) {
    validate_group(group);
    if (advantages.size() != group.rewards.size())
        throw std::invalid_argument("grpo_surrogate: advantages length mismatch");
    if (!(kl >= 0.0)) throw std::invalid_argument("grpo_surrogate: kl must be >= 0");
    double sum = 0.0;
    for (std::size_t j = 0; j < advantages.size(); ++j) {
        double ratio = std::exp(group.logp_pol[j] - group.logp_ref[j]);
        if (!std::isfinite(ratio))
            throw std::runtime_error("grpo_surrogate: non-finite importance ratio at index " +
                                     std::to_string(j));
        double clipped = std::clamp(ratio, 1.0 - group.epsilon, 1.0 + group.epsilon);
        sum += std::min(ratio * advantages[j], clipped * advantages[j]);
    }
    return sum / static_cast<double>(advantages.size()) - group.lambda_kl * kl;
}

// Exact discrete KL(p || q) with the 0*log(0) = 0 convention. Support
// violations (p_i > 0 where q_i = 0) are infinite divergence and rejected.
inline double exact_kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("exact_kl: length mismatch");
    if (p.empty()) throw std::invalid_argument("exact_kl: empty distributions");
    double sum_p = 0.0, sum_q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw std::invalid_argument("exact_kl: negative entry");
        sum_p += p[i];
        sum_q += q[i];
    }
    if (std::abs(sum_p - 1.0) > 1e-9 || std::abs(sum_q - 1.0) > 1e-9)
        throw std::invalid_argument("exact_kl: distributions must sum to 1");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0)
            throw std::domain_error("exact_kl: support violation at index " + std::to_string(i));
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

inline double sft_loss(std::span<const double> logp_targets) {
    if (logp_targets.empty()) throw std::invalid_argument("sft_loss: empty batch");
    double total = 0.0;
    for (double lp : logp_targets) {
        detail::require_finite(lp, "logp");
        total += -lp;
    }
    return total / static_cast<double>(logp_targets.size());
}

struct CurriculumWeights {
    double lambda_dpo = 1.0;
    double lambda_grpo = 1.0;
};

// L = L_SFT + lambda_DPO * L_DPO + lambda_GRPO * L_GRPO. The GRPO stage
// produces a surrogate to maximize, so its loss contribution is the
// negated objective.
inline double combined_loss(double sft, double dpo, double grpo_objective, CurriculumWeights w) {
    detail::require_finite(sft, "sft");
    detail::require_finite(dpo, "dpo");
    detail::require_finite(grpo_objective, "grpo_objective");
    if (w.lambda_dpo < 0.0 || w.lambda_grpo < 0.0)
        throw std::invalid_argument("combined_loss: curriculum weights must be >= 0");
    return sft + w.lambda_dpo * dpo + w.lambda_grpo * (-grpo_objective);
}

}  // namespace fairjudge
