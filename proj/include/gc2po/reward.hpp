#ifndef GC2PO_REWARD_HPP
#define GC2PO_REWARD_HPP

#include <cstdint>
#include <vector>

#include "gc2po/hyperparams.hpp"
#include "gc2po/perturbation.hpp"
#include "gc2po/policy.hpp"
#include "gc2po/segmentation.hpp"

namespace gc2po {

/// Episodic causal counterfactual reward and its per-perturbation diagnostics.
/// The reward is a fixed scalar signal: nothing here touches a tape, so no
/// parameter gradients can flow through it.
struct CfRewardBreakdown {
    std::vector<double> distances;    // per-m ||q - q^(m)||_2^2
    std::vector<double> norm_ratios;  // per-m ||u~^(m)||^2 / (||u||^2 + eps_u)
    double s_sta = 0.0;               // in (0, 1]
    double s_exp = 0.0;               // >= 0
    double r_cf = 0.0;                // s_sta + lambda_exp * s_exp
    int m_used = 0;
    std::uint64_t operator_seed = 0;  // logged so rewards replay exactly
};

/// (1/M) sum_m exp(-(1/tau) * ||q_base - q^(m)||_2^2)
double stability_score(const Tensor& q_base, const std::vector<Tensor>& q_perturbed, double tau);

/// (1/M) sum_m ||u~^(m)||_2^2 / (||u||_2^2 + eps_u)
double expressiveness_score(const Tensor& u, const std::vector<Tensor>& u_perturbed, double eps_u);

/// Full per-episode reward: read u at the span's last token (the span is in
/// generated-sequence coordinates; `position_offset` shifts it into rows of
/// `out`, i.e. the question length), induce q(.|u), draw M operators from
/// `operator_seed`, score. Zero-length episodes are the caller's job to skip.
CfRewardBreakdown cf_reward(const PolicyParams& params, const PolicyOutput& out, const EpisodeSpan& span,
                            int position_offset, const PerturbationSpec& spec, const HyperParams& hyper,
                            std::uint64_t operator_seed);

}  // namespace gc2po

#endif
