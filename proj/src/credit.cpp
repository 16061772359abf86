#include "gc2po/credit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gc2po {

double episodic_score(int r_out, int episode_count, double r_cf, double lambda_cf) {
    if (episode_count < 1) throw std::invalid_argument("episodic score needs at least one episode");
    if (r_out != 0 && r_out != 1) throw std::invalid_argument("outcome reward must be 0 or 1");
    return static_cast<double>(r_out) / static_cast<double>(episode_count) + lambda_cf * r_cf;
}

std::vector<double> surprise_weights(std::span<const double> old_logprobs, const std::vector<EpisodeSpan>& episodes) {
    const int n = static_cast<int>(old_logprobs.size());
    for (double lp : old_logprobs) {
        if (lp > 0.0) throw std::invalid_argument("log-probability above zero: " + std::to_string(lp));
    }
    std::vector<double> w(static_cast<size_t>(n), 0.0);
    for (const EpisodeSpan& e : episodes) {
        if (e.empty()) continue;
        if (e.start < 0 || e.end >= n) throw std::out_of_range("episode span outside token sequence");
        double total = 0.0;
        for (int t = e.start; t <= e.end; ++t) total += -old_logprobs[static_cast<size_t>(t)];
        if (total > 0.0) {
            for (int t = e.start; t <= e.end; ++t) w[static_cast<size_t>(t)] = -old_logprobs[static_cast<size_t>(t)] / total;
        } else {
            // every token had probability 1; the normalization is undefined, use uniform
            const double uniform = 1.0 / static_cast<double>(e.length());
            for (int t = e.start; t <= e.end; ++t) w[static_cast<size_t>(t)] = uniform;
        }
    }
    return w;
}

std::vector<double> token_rewards(std::span<const double> episode_scores, std::span<const double> weights,
                                  const std::vector<EpisodeSpan>& episodes, int token_count) {
    if (episode_scores.size() != episodes.size()) {
        throw std::invalid_argument("episode score count does not match episode count");
    }
    std::vector<double> r(static_cast<size_t>(token_count), 0.0);
    for (size_t l = 0; l < episodes.size(); ++l) {
        const EpisodeSpan& e = episodes[l];
        if (e.empty()) continue;
        for (int t = e.start; t <= e.end; ++t) {
            r[static_cast<size_t>(t)] = episode_scores[l] * weights[static_cast<size_t>(t)];
        }
    }
    return r;
}

double truncated_mean(std::span<const double> values, double trim_fraction) {
    if (values.empty()) throw std::invalid_argument("truncated mean of empty list");
    if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
        throw std::invalid_argument("trim fraction must be in [0, 0.5)");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const int n = static_cast<int>(sorted.size());
    const int drop = static_cast<int>(std::floor(trim_fraction * static_cast<double>(n) / 2.0));
    double acc = 0.0;
    for (int i = drop; i < n - drop; ++i) acc += sorted[static_cast<size_t>(i)];
    return acc / static_cast<double>(n - 2 * drop);
}

std::vector<double> group_advantages(std::span<const double> trajectory_scores, double eps_std) {
    const int k = static_cast<int>(trajectory_scores.size());
    if (k < 2) throw std::invalid_argument("group advantages need at least two candidates");
    double mean = 0.0;
    for (double r : trajectory_scores) mean += r;
    mean /= static_cast<double>(k);
    double var = 0.0;
    double scale = 1.0;
    for (double r : trajectory_scores) {
        var += (r - mean) * (r - mean);
        scale = std::max(scale, std::abs(r));
    }
    var /= static_cast<double>(k);
    const double denom = std::sqrt(var + eps_std);
    std::vector<double> adv(static_cast<size_t>(k), 0.0);
    // All-equal groups get zero advantages. The rounding residue of the mean
    // can leave var at ~1e-34 even then; relative to the score scale that is
    // zero variance, not signal, and must not be standardized into +-1.
    if (denom <= 1e-12 * scale) return adv;
    for (int i = 0; i < k; ++i) adv[static_cast<size_t>(i)] = (trajectory_scores[static_cast<size_t>(i)] - mean) / denom;
    return adv;
}

std::vector<double> token_advantages(double group_advantage, std::span<const double> token_rewards,
                                     double trajectory_score, double eps_r) {
    std::vector<double> adv(token_rewards.size(), 0.0);
    if (std::abs(trajectory_score) < eps_r) {
        std::fill(adv.begin(), adv.end(), group_advantage);
        return adv;
    }
    const double scale = group_advantage / trajectory_score;
    for (size_t t = 0; t < token_rewards.size(); ++t) adv[t] = token_rewards[t] * scale;
    return adv;
}

CreditTable build_credit_table(const std::vector<TrajectoryCredit>& group, const HyperParams& hyper) {
    const int k = static_cast<int>(group.size());
    if (k < 2) throw std::invalid_argument("credit table needs a group of at least two candidates");

    CreditTable table;
    table.episode_scores.resize(group.size());
    table.weights.resize(group.size());
    table.token_rewards.resize(group.size());
    table.trajectory_scores.resize(group.size());
    table.token_advantages.resize(group.size());

    for (size_t i = 0; i < group.size(); ++i) {
        const TrajectoryCredit& tc = group[i];
        if (static_cast<int>(tc.old_logprobs.size()) != tc.token_count) {
            throw std::invalid_argument("old log-prob count does not match token count");
        }
        const int episode_count = static_cast<int>(tc.episodes.size());
        std::vector<double> scores(tc.episodes.size(), 0.0);
        if (episode_count > 0) {
            if (tc.r_cf.size() != tc.episodes.size()) {
                throw std::invalid_argument("counterfactual reward count does not match episode count");
            }
            for (size_t l = 0; l < tc.episodes.size(); ++l) {
                scores[l] = episodic_score(tc.r_out, episode_count, tc.r_cf[l], hyper.lambda_cf);
            }
            table.weights[i] = surprise_weights(tc.old_logprobs, tc.episodes);
            table.token_rewards[i] = token_rewards(scores, table.weights[i], tc.episodes, tc.token_count);
        } else {
            table.weights[i].assign(static_cast<size_t>(tc.token_count), 0.0);
            table.token_rewards[i].assign(static_cast<size_t>(tc.token_count), 0.0);
        }
        table.episode_scores[i] = std::move(scores);
        table.trajectory_scores[i] = truncated_mean(table.token_rewards[i], hyper.trim_fraction);
    }

    double mean = 0.0;
    for (double r : table.trajectory_scores) mean += r;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (double r : table.trajectory_scores) var += (r - mean) * (r - mean);
    var /= static_cast<double>(k);
    table.group_mean = mean;
    table.group_variance = var;

    table.group_advantages = group_advantages(table.trajectory_scores, hyper.eps_std);
    for (size_t i = 0; i < group.size(); ++i) {
        table.token_advantages[i] =
            token_advantages(table.group_advantages[i], table.token_rewards[i], table.trajectory_scores[i], hyper.eps_r);
    }
    return table;
}

}  // namespace gc2po
