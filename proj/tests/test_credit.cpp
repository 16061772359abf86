#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "gc2po/credit.hpp"
#include "gc2po/rng.hpp"

using namespace gc2po;

namespace {

EpisodeSpan span(int index, int start, int end) {
    EpisodeSpan e;
    e.index = index;
    e.start = start;
    e.end = end;
    return e;
}

}  // namespace

TEST_CASE("episodic score examples") {
    CHECK(episodic_score(1, 4, 0.0, 0.8) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(episodic_score(0, 3, 1.9, 0.8) == doctest::Approx(1.52).epsilon(1e-15));
    CHECK_THROWS_AS(episodic_score(1, 0, 0.0, 0.8), std::invalid_argument);
    CHECK_THROWS_AS(episodic_score(2, 3, 0.0, 0.8), std::invalid_argument);
    // paper defaults
    HyperParams h;
    CHECK(h.lambda_cf == 0.8);
    CHECK(h.lambda_exp == 0.9);
}

TEST_CASE("surprise weights: hand arithmetic, degenerate guard, singleton") {
    // token probabilities (0.5, 0.25) -> weights (1/3, 2/3)
    const std::vector<double> lp = {std::log(0.5), std::log(0.25)};
    const auto w = surprise_weights(lp, {span(1, 0, 1)});
    CHECK(std::abs(w[0] - 1.0 / 3.0) <= 1e-15);
    CHECK(std::abs(w[1] - 2.0 / 3.0) <= 1e-15);

    // all tokens probability 1 -> uniform
    const auto wu = surprise_weights(std::vector<double>{0.0, 0.0, 0.0}, {span(1, 0, 2)});
    for (double x : wu) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    // single-token episode
    const auto w1 = surprise_weights(std::vector<double>{-0.7}, {span(1, 0, 0)});
    CHECK(w1[0] == 1.0);

    // tokens outside any episode carry weight 0
    const auto w0 = surprise_weights(std::vector<double>{-0.5, -0.5, -0.5}, {span(1, 1, 1)});
    CHECK(w0[0] == 0.0);
    CHECK(w0[1] == 1.0);
    CHECK(w0[2] == 0.0);

    CHECK_THROWS_AS(surprise_weights(std::vector<double>{0.1}, {span(1, 0, 0)}), std::invalid_argument);
}

TEST_CASE("token rewards multiply scores into weights and conserve the episode score") {
    const std::vector<double> scores = {0.25};
    const std::vector<double> w = {1.0 / 3.0, 2.0 / 3.0, 0.0};
    const auto r = token_rewards(scores, w, {span(1, 0, 1)}, 3);
    CHECK(std::abs(r[0] - 1.0 / 12.0) <= 1e-15);
    CHECK(std::abs(r[1] - 1.0 / 6.0) <= 1e-15);
    CHECK(r[2] == 0.0);  // unscored token
    CHECK(std::abs(r[0] + r[1] - scores[0]) <= 1e-12);
}

TEST_CASE("truncated mean: no-trim reduction, hand case, affine equivariance") {
    const std::vector<double> vals = {3.0, 1.0, 2.0};
    CHECK(truncated_mean(vals, 0.0) == doctest::Approx(2.0).epsilon(1e-15));

    const std::vector<double> spiky = {0.0, 1.0, 2.0, 3.0, 100.0};
    CHECK(truncated_mean(spiky, 0.4) == doctest::Approx(2.0).epsilon(1e-15));

    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 1 + rng.below(12);
        std::vector<double> xs(static_cast<size_t>(n));
        for (double& x : xs) x = rng.uniform(-5.0, 5.0);
        const double c = rng.uniform(-3.0, 3.0);
        const double b = rng.uniform(-2.0, 2.0);
        const double trim = rng.uniform(0.0, 0.49);
        std::vector<double> ys(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) ys[i] = c * xs[i] + b;
        CHECK(std::abs(truncated_mean(ys, trim) - (c * truncated_mean(xs, trim) + b)) <= 1e-9);
    }

    CHECK_THROWS_AS(truncated_mean(std::vector<double>{}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(truncated_mean(vals, 0.5), std::invalid_argument);
}

TEST_CASE("group advantages: hand case, degenerate group, standardization invariance") {
    const std::vector<double> scores = {1.0, 0.0, 0.0, 0.0};
    const auto adv = group_advantages(scores, 0.0);
    CHECK(std::abs(adv[0] - std::sqrt(3.0)) <= 1e-12);
    for (int k = 1; k < 4; ++k) CHECK(std::abs(adv[static_cast<size_t>(k)] + 1.0 / std::sqrt(3.0)) <= 1e-12);

    // all-equal group: the guard prevents 0/0; values are zero up to the
    // mean's rounding residue divided by sqrt(eps_std)
    const auto zeros = group_advantages(std::vector<double>{0.7, 0.7, 0.7}, 1e-8);
    for (double a : zeros) CHECK(std::abs(a) <= 1e-9);
    const auto zeros2 = group_advantages(std::vector<double>{0.7, 0.7}, 0.0);
    for (double a : zeros2) CHECK(a == 0.0);

    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        const int k = 2 + rng.below(6);
        std::vector<double> xs(static_cast<size_t>(k));
        for (double& x : xs) x = rng.uniform(-2.0, 2.0);
        xs[0] += 1.0;  // ensure spread
        const double shift = rng.uniform(-10.0, 10.0);
        const double scale = rng.uniform(0.1, 5.0);
        const auto base = group_advantages(xs, 0.0);
        std::vector<double> shifted(xs.size()), scaled(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) {
            shifted[i] = xs[i] + shift;
            scaled[i] = xs[i] * scale;
        }
        const auto a_shift = group_advantages(shifted, 0.0);
        const auto a_scale = group_advantages(scaled, 0.0);
        for (size_t i = 0; i < xs.size(); ++i) {
            CHECK(std::abs(a_shift[i] - base[i]) <= 1e-9);
            CHECK(std::abs(a_scale[i] - base[i]) <= 1e-9);
        }
    }

    CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("token advantages: hand case, guard path, truncated-mean consistency") {
    const std::vector<double> r = {0.2, 0.3, 0.5};
    const double r_tilde = truncated_mean(r, 0.0);  // 1/3
    const auto adv = token_advantages(1.0, r, r_tilde, 1e-8);
    CHECK(std::abs(adv[0] - 0.6) <= 1e-12);
    CHECK(std::abs(adv[1] - 0.9) <= 1e-12);
    CHECK(std::abs(adv[2] - 1.5) <= 1e-12);

    const auto guard = token_advantages(-0.4, std::vector<double>{0.0, 0.0}, 0.0, 1e-8);
    CHECK(guard == std::vector<double>{-0.4, -0.4});
}

TEST_CASE("pipeline invariants over 1000 seeded random groups") {
    HyperParams hyper;
    hyper.trim_fraction = 0.1;
    Rng rng(11);
    int checked = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int k = 2 + rng.below(5);
        std::vector<TrajectoryCredit> group(static_cast<size_t>(k));
        for (auto& tc : group) {
            const int t = 4 + rng.below(12);
            tc.token_count = t;
            tc.old_logprobs.resize(static_cast<size_t>(t));
            for (double& lp : tc.old_logprobs) lp = -rng.uniform(0.01, 3.0);
            // random episode layout: two disjoint spans when room allows
            const int e1_end = 1 + rng.below(t - 2);
            tc.episodes.push_back(span(1, 0, e1_end));
            if (e1_end + 2 < t - 1 && rng.bernoulli(0.7)) {
                tc.episodes.push_back(span(2, e1_end + 2, t - 2));
            }
            tc.valid = true;
            tc.r_out = rng.bernoulli(0.4) ? 1 : 0;
            tc.r_cf.resize(tc.episodes.size());
            for (double& r : tc.r_cf) r = rng.uniform(0.0, 1.9);
        }
        const CreditTable table = build_credit_table(group, hyper);

        for (size_t c = 0; c < group.size(); ++c) {
            for (size_t l = 0; l < group[c].episodes.size(); ++l) {
                const EpisodeSpan& e = group[c].episodes[l];
                double wsum = 0.0, rsum = 0.0;
                for (int t = e.start; t <= e.end; ++t) {
                    wsum += table.weights[c][static_cast<size_t>(t)];
                    rsum += table.token_rewards[c][static_cast<size_t>(t)];
                }
                CHECK(std::abs(wsum - 1.0) <= 1e-9);                            // weight normalization
                CHECK(std::abs(rsum - table.episode_scores[c][l]) <= 1e-12);    // score conservation
            }
            // rescaling consistency
            if (std::abs(table.trajectory_scores[c]) >= hyper.eps_r) {
                const double tm = truncated_mean(table.token_advantages[c], hyper.trim_fraction);
                CHECK(std::abs(tm - table.group_advantages[c]) <= 1e-9);
                ++checked;
            }
        }
        // group standardization; (1/K) sum A^2 = s^2/(s^2 + eps_std), so the
        // 1e-6 tolerance needs s^2 >= eps_std / 1e-6
        if (table.group_variance >= hyper.eps_std / 1e-6) {
            double mean = 0.0, second = 0.0;
            for (double a : table.group_advantages) mean += a;
            mean /= k;
            for (double a : table.group_advantages) second += a * a;
            second /= k;
            CHECK(std::abs(mean) <= 1e-9);
            CHECK(std::abs(second - 1.0) <= 1e-6);
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("sign property: R_out = 0 with high R_cf can out-rank R_out = 1 with a weak episode") {
    HyperParams hyper;
    hyper.trim_fraction = 0.0;
    std::vector<TrajectoryCredit> group(4);

    // A: wrong answer, single strongly counterfactual episode over 2 tokens
    group[0].token_count = 2;
    group[0].old_logprobs = {-1.0, -1.0};
    group[0].episodes = {span(1, 0, 1)};
    group[0].valid = true;
    group[0].r_out = 0;
    group[0].r_cf = {1.9};

    // B: correct answer but one episode with a weak counterfactual reward
    group[1].token_count = 4;
    group[1].old_logprobs = {-1.0, -1.0, -1.0, -1.0};
    group[1].episodes = {span(1, 0, 1), span(2, 2, 3)};
    group[1].valid = true;
    group[1].r_out = 1;
    group[1].r_cf = {0.3, 0.05};

    // C: correct answer, decent episodes
    group[2].token_count = 4;
    group[2].old_logprobs = {-1.0, -1.0, -1.0, -1.0};
    group[2].episodes = {span(1, 0, 1), span(2, 2, 3)};
    group[2].valid = true;
    group[2].r_out = 1;
    group[2].r_cf = {1.2, 1.2};

    // D: wrong answer, mediocre episode
    group[3].token_count = 4;
    group[3].old_logprobs = {-1.0, -1.0, -1.0, -1.0};
    group[3].episodes = {span(1, 0, 3)};
    group[3].valid = true;
    group[3].r_out = 0;
    group[3].r_cf = {0.5};

    const CreditTable table = build_credit_table(group, hyper);
    CHECK(table.group_advantages[0] > 0.0);  // unlucky but counterfactually strong
    CHECK(table.group_advantages[1] < 0.0);  // correct but containing a weak episode
}

TEST_CASE("GRPO reduction: credit pipeline equals Eq. 1 standardization") {
    HyperParams hyper;
    hyper.lambda_cf = 0.0;
    hyper.trim_fraction = 0.0;
    hyper.eps_std = 0.0;
    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const int k = 2 + rng.below(5);
        const int t = 4 + rng.below(8);  // equal lengths
        std::vector<TrajectoryCredit> group(static_cast<size_t>(k));
        std::vector<double> outcome(static_cast<size_t>(k));
        bool any_spread = false;
        for (int c = 0; c < k; ++c) {
            auto& tc = group[static_cast<size_t>(c)];
            tc.token_count = t;
            tc.old_logprobs.assign(static_cast<size_t>(t), -std::log(130.0));  // uniform old policy
            tc.episodes = {span(1, 0, t - 1)};                                 // full-coverage episode
            tc.valid = true;
            tc.r_out = rng.bernoulli(0.5) ? 1 : 0;
            tc.r_cf = {0.0};
            outcome[static_cast<size_t>(c)] = tc.r_out;
            if (tc.r_out != group[0].r_out) any_spread = true;
        }
        const CreditTable table = build_credit_table(group, hyper);
        const auto eq1 = group_advantages(outcome, 0.0);
        for (int c = 0; c < k; ++c) {
            CHECK(std::abs(table.group_advantages[static_cast<size_t>(c)] - eq1[static_cast<size_t>(c)]) <= 1e-9);
            // token advantages constant in t
            for (double a : table.token_advantages[static_cast<size_t>(c)]) {
                CHECK(std::abs(a - eq1[static_cast<size_t>(c)]) <= 1e-9);
            }
        }
        (void)any_spread;
    }
}
