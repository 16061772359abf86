#ifndef GC2PO_CREDIT_HPP
#define GC2PO_CREDIT_HPP

#include <span>
#include <vector>

#include "gc2po/hyperparams.hpp"
#include "gc2po/segmentation.hpp"

namespace gc2po {

/// S_{k,l} = R_out / L_k + lambda_cf * R_cf_l  (outcome evenly split across episodes).
double episodic_score(int r_out, int episode_count, double r_cf, double lambda_cf);

/// Surprise weights over one generated sequence: w~_t = -log pi_old(y_t | .),
/// normalized within each nonempty episode. Tokens outside scored episodes
/// (tags, answer region, zero-length episodes) get weight 0. An episode whose
/// weights all vanish (every token had probability 1) falls back to uniform.
std::vector<double> surprise_weights(std::span<const double> old_logprobs, const std::vector<EpisodeSpan>& episodes);

/// r_t = S_{l(t)} * w_t. `episode_scores` is aligned with `episodes`.
std::vector<double> token_rewards(std::span<const double> episode_scores, std::span<const double> weights,
                                  const std::vector<EpisodeSpan>& episodes, int token_count);

/// Symmetric truncated mean: sort, drop floor(trim * n / 2) from each end.
double truncated_mean(std::span<const double> values, double trim_fraction);

/// A^_k = (r~_k - mean) / sqrt(var + eps_std), population variance. All-equal
/// groups yield all-zero advantages.
std::vector<double> group_advantages(std::span<const double> trajectory_scores, double eps_std);

/// A_{k,t} = A^_k * r_t / r~_k, falling back to A^_k uniformly when |r~_k| < eps_r.
std::vector<double> token_advantages(double group_advantage, std::span<const double> token_rewards,
                                     double trajectory_score, double eps_r);

/// Inputs for one candidate of a group.
struct TrajectoryCredit {
    int token_count = 0;                // T_k (all generated tokens)
    std::vector<double> old_logprobs;   // length T_k
    std::vector<EpisodeSpan> episodes;  // parsed spans; empty for unparseable output
    bool valid = false;
    int r_out = 0;
    std::vector<double> r_cf;           // per episode, 0 where skipped
};

/// Full Eq. 5-7 pipeline for one group of K candidates.
struct CreditTable {
    std::vector<std::vector<double>> episode_scores;   // S_{k,l}
    std::vector<std::vector<double>> weights;          // w_{k,t}
    std::vector<std::vector<double>> token_rewards;    // r_{k,t}
    std::vector<double> trajectory_scores;             // r~_k
    double group_mean = 0.0;                           // r-bar
    double group_variance = 0.0;                       // s_r^2 (population)
    std::vector<double> group_advantages;              // A^_k
    std::vector<std::vector<double>> token_advantages; // A_{k,t}
};

CreditTable build_credit_table(const std::vector<TrajectoryCredit>& group, const HyperParams& hyper);

}  // namespace gc2po

#endif
