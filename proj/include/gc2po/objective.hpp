#ifndef GC2PO_OBJECTIVE_HPP
#define GC2PO_OBJECTIVE_HPP

#include <span>
#include <vector>

#include "gc2po/hyperparams.hpp"
#include "gc2po/policy.hpp"

namespace gc2po {

/// rho = pi_theta / pi_old at one sampled token, from the two log-probs.
double prob_ratio(double logprob_theta, double logprob_old);

/// mu_KL = r - log r - 1 with r = pi_ref / pi_theta at the sampled token.
/// Nonnegative, zero iff the ratio is 1.
double kl_penalty(double logprob_ref, double logprob_theta);

/// Per-generated-token log-probs of `generated` under `params` given the
/// question prefix (the re-scoring route; matches sampling records exactly).
std::vector<double> rescore_logprobs(const PolicyParams& params, std::span<const int> question,
                                     std::span<const int> generated);

/// One question-group prepared for the surrogate objective. Advantages and
/// old/reference log-probs are constants; only theta's re-scored log-probs
/// carry gradient.
struct GroupBatchItem {
    std::vector<int> question;
    std::vector<std::vector<int>> generated;
    std::vector<std::vector<double>> old_logprobs;
    std::vector<std::vector<double>> ref_logprobs;
    std::vector<std::vector<double>> token_advantages;
    std::vector<int> r_out;  // used by the GRPO baseline
};

struct ObjectiveResult {
    double value = 0.0;
    std::vector<double> gradient;  // flat, PolicyParams::flatten() order; empty if not requested
    double clip_fraction = 0.0;    // fraction of tokens with ratio outside [1-eps, 1+eps]
    int token_count = 0;
};

/// J = (1/K) sum_k (1/T_k) sum_t [ min(rho A, clip(rho) A) - beta_KL mu_KL ]
/// for one group, with the provided token advantages.
ObjectiveResult gc2po_objective(const PolicyParams& theta, const GroupBatchItem& group, const HyperParams& hyper,
                                bool with_gradient = true);

/// Same machinery with Eq. 1 advantages on the outcome rewards, distributed
/// uniformly over tokens.
ObjectiveResult grpo_objective(const PolicyParams& theta, const GroupBatchItem& group, const HyperParams& hyper,
                               bool with_gradient = true);

/// Gradient-ascent step with decoupled weight decay:
/// theta <- theta (1 - lr wd) + lr g. Throws on non-finite gradient entries.
void update_step(PolicyParams& params, std::span<const double> gradient, const HyperParams& hyper);

}  // namespace gc2po

#endif
