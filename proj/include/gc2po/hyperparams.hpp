#ifndef GC2PO_HYPERPARAMS_HPP
#define GC2PO_HYPERPARAMS_HPP

#include <cstdint>

namespace gc2po {

/// Every scalar knob of the method in one place. Paper-scale optimizer values
/// (lr 1e-6, batch 256) target billion-parameter models; the defaults here are
/// the desk-scale ones.
struct HyperParams {
    int group_size = 8;        // K candidates per question
    int perturb_count = 8;     // M Monte-Carlo operators per episode
    double clip_eps = 0.2;     // clipping radius
    double kl_beta = 0.04;     // KL regularization weight
    double tau = 0.5;          // stability temperature
    double eps_u = 1e-6;       // expressiveness denominator guard
    double lambda_exp = 0.9;   // expressiveness weight
    double lambda_cf = 0.8;    // counterfactual weight in episodic scores
    double trim_fraction = 0.1;
    double eps_std = 1e-8;     // group-variance guard
    double eps_r = 1e-8;       // token-rescale guard
    double learning_rate = 3e-3;
    double weight_decay = 0.01;
    int batch_size = 64;       // questions per iteration
    double temperature = 1.0;  // rollout sampling temperature
    int max_len = 56;          // generated-token budget
    std::uint64_t seed = 1;

    void validate() const;
};

}  // namespace gc2po

#endif
