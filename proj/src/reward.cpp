#include "gc2po/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace gc2po {

double stability_score(const Tensor& q_base, const std::vector<Tensor>& q_perturbed, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("stability temperature tau must be positive");
    if (q_perturbed.empty()) throw std::invalid_argument("stability score needs at least one perturbed distribution");
    const auto n = q_base.size();
    double acc = 0.0;
    for (const Tensor& q : q_perturbed) {
        if (q.size() != n) {
            throw std::invalid_argument("answer-distribution support mismatch: " + std::to_string(q.size()) + " vs " +
                                        std::to_string(n));
        }
        double dist = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double diff = q_base.values[static_cast<size_t>(i)] - q.values[static_cast<size_t>(i)];
            dist += diff * diff;
        }
        acc += std::exp(-dist / tau);
    }
    return acc / static_cast<double>(q_perturbed.size());
}

double expressiveness_score(const Tensor& u, const std::vector<Tensor>& u_perturbed, double eps_u) {
    if (!(eps_u > 0.0)) throw std::invalid_argument("eps_u must be positive");
    if (u_perturbed.empty()) throw std::invalid_argument("expressiveness score needs at least one perturbed vector");
    const auto d = u.size();
    const double denom = kernels::squared_norm(u.values.data(), static_cast<int>(d)) + eps_u;
    double acc = 0.0;
    for (const Tensor& v : u_perturbed) {
        if (v.size() != d) {
            throw std::invalid_argument("representation dimension mismatch: " + std::to_string(v.size()) + " vs " +
                                        std::to_string(d));
        }
        acc += kernels::squared_norm(v.values.data(), static_cast<int>(d)) / denom;
    }
    return acc / static_cast<double>(u_perturbed.size());
}

CfRewardBreakdown cf_reward(const PolicyParams& params, const PolicyOutput& out, const EpisodeSpan& span,
                            int position_offset, const PerturbationSpec& spec, const HyperParams& hyper,
                            std::uint64_t operator_seed) {
    if (span.empty()) throw std::invalid_argument("zero-length episode has no representation to score");

    const Tensor u = episode_representation(out, position_offset + span.start, position_offset + span.end);
    const Tensor q_base = answer_distribution(params, u);
    const auto ops = sample_operators(spec, static_cast<int>(u.size()), operator_seed);

    CfRewardBreakdown b;
    b.operator_seed = operator_seed;
    b.m_used = static_cast<int>(ops.size());
    const double denom = kernels::squared_norm(u.values.data(), static_cast<int>(u.size())) + hyper.eps_u;

    std::vector<Tensor> q_perturbed;
    std::vector<Tensor> u_perturbed;
    q_perturbed.reserve(ops.size());
    u_perturbed.reserve(ops.size());
    for (const auto& op : ops) {
        Tensor ut = op.apply(u);
        Tensor qt = answer_distribution(params, ut);
        double dist = 0.0;
        for (std::int64_t i = 0; i < q_base.size(); ++i) {
            const double diff = q_base.values[static_cast<size_t>(i)] - qt.values[static_cast<size_t>(i)];
            dist += diff * diff;
        }
        b.distances.push_back(dist);
        b.norm_ratios.push_back(kernels::squared_norm(ut.values.data(), static_cast<int>(ut.size())) / denom);
        u_perturbed.push_back(std::move(ut));
        q_perturbed.push_back(std::move(qt));
    }
    b.s_sta = stability_score(q_base, q_perturbed, hyper.tau);
    b.s_exp = expressiveness_score(u, u_perturbed, hyper.eps_u);
    b.r_cf = b.s_sta + hyper.lambda_exp * b.s_exp;
    return b;
}

}  // namespace gc2po
