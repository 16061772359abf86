#include "gc2po/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "gc2po/credit.hpp"

namespace gc2po {

double prob_ratio(double logprob_theta, double logprob_old) { return std::exp(logprob_theta - logprob_old); }

double kl_penalty(double logprob_ref, double logprob_theta) {
    const double delta = logprob_ref - logprob_theta;  // log r
    return std::exp(delta) - delta - 1.0;
}

std::vector<double> rescore_logprobs(const PolicyParams& params, std::span<const int> question,
                                     std::span<const int> generated) {
    std::vector<int> seq(question.begin(), question.end());
    seq.insert(seq.end(), generated.begin(), generated.end());
    const PolicyOutput out = forward(params, seq);
    std::vector<double> lp(generated.size());
    const int offset = static_cast<int>(question.size());
    for (size_t i = 0; i < generated.size(); ++i) {
        lp[i] = out.logprobs.at(offset + static_cast<int>(i) - 1, generated[i]);
    }
    return lp;
}

namespace {

void check_group(const GroupBatchItem& g) {
    if (g.generated.empty()) throw std::invalid_argument("objective over an empty group");
    const size_t k = g.generated.size();
    if (g.old_logprobs.size() != k || g.token_advantages.size() != k) {
        throw std::invalid_argument("group batch item has inconsistent candidate counts");
    }
    for (size_t i = 0; i < k; ++i) {
        const size_t t = g.generated[i].size();
        if (t == 0) throw std::invalid_argument("candidate with no generated tokens");
        if (g.old_logprobs[i].size() != t || g.token_advantages[i].size() != t ||
            (!g.ref_logprobs.empty() && g.ref_logprobs[i].size() != t)) {
            throw std::invalid_argument("per-token arrays do not match generated length");
        }
    }
}

ObjectiveResult surrogate_objective(const PolicyParams& theta, const GroupBatchItem& group,
                                    const std::vector<std::vector<double>>& advantages, const HyperParams& hyper,
                                    bool with_gradient) {
    const int k = static_cast<int>(group.generated.size());
    Tape tape;
    const PolicyLeaves leaves = make_policy_leaves(tape, theta);

    Tape::NodeId acc = -1;
    int clipped = 0;
    int total_tokens = 0;
    for (int i = 0; i < k; ++i) {
        const auto& gen = group.generated[static_cast<size_t>(i)];
        const int t_k = static_cast<int>(gen.size());
        std::vector<int> seq = group.question;
        seq.insert(seq.end(), gen.begin(), gen.end());
        const TapeForward tf = tape_forward(tape, theta, leaves, seq);

        const int offset = static_cast<int>(group.question.size());
        std::vector<std::pair<int, int>> entries(gen.size());
        for (int t = 0; t < t_k; ++t) entries[static_cast<size_t>(t)] = {offset + t - 1, gen[static_cast<size_t>(t)]};
        const auto logp = tape.pick(tf.logprob_rows, std::move(entries));

        const auto old_leaf = tape.leaf(Tensor::vector(group.old_logprobs[static_cast<size_t>(i)]));
        const auto adv_leaf = tape.leaf(Tensor::vector(advantages[static_cast<size_t>(i)]));
        const auto ratio = tape.exp(tape.sub(logp, old_leaf));
        const auto surrogate = tape.minimum(
            tape.mul(ratio, adv_leaf),
            tape.mul(tape.clamp(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps), adv_leaf));

        Tape::NodeId per_token = surrogate;
        if (hyper.kl_beta != 0.0) {
            const auto ref_leaf = tape.leaf(Tensor::vector(group.ref_logprobs[static_cast<size_t>(i)]));
            const auto delta = tape.sub(ref_leaf, logp);
            const auto mu = tape.sub(tape.sub(tape.exp(delta), delta), 1.0);
            per_token = tape.sub(surrogate, tape.mul(mu, hyper.kl_beta));
        }
        const auto traj_term = tape.mean(per_token);
        acc = acc < 0 ? traj_term : tape.add(acc, traj_term);

        const Tensor& rho = tape.value(ratio);
        for (double r : rho.values) {
            if (r < 1.0 - hyper.clip_eps || r > 1.0 + hyper.clip_eps) ++clipped;
        }
        total_tokens += t_k;
    }
    const auto j = tape.mul(acc, 1.0 / static_cast<double>(k));

    ObjectiveResult res;
    res.value = tape.value(j).values[0];
    res.clip_fraction = total_tokens > 0 ? static_cast<double>(clipped) / static_cast<double>(total_tokens) : 0.0;
    res.token_count = total_tokens;
    if (with_gradient) {
        tape.backward(j);
        res.gradient = collect_gradient(tape, leaves, theta);
    }
    return res;
}

}  // namespace

ObjectiveResult gc2po_objective(const PolicyParams& theta, const GroupBatchItem& group, const HyperParams& hyper,
                                bool with_gradient) {
    check_group(group);
    return surrogate_objective(theta, group, group.token_advantages, hyper, with_gradient);
}

ObjectiveResult grpo_objective(const PolicyParams& theta, const GroupBatchItem& group, const HyperParams& hyper,
                               bool with_gradient) {
    if (group.generated.empty()) throw std::invalid_argument("objective over an empty group");
    if (group.r_out.size() != group.generated.size()) {
        throw std::invalid_argument("GRPO objective needs one outcome reward per candidate");
    }
    std::vector<double> scores(group.r_out.begin(), group.r_out.end());
    const std::vector<double> adv = group_advantages(scores, hyper.eps_std);
    std::vector<std::vector<double>> token_adv(group.generated.size());
    for (size_t i = 0; i < group.generated.size(); ++i) {
        token_adv[i].assign(group.generated[i].size(), adv[i]);
    }
    GroupBatchItem g = group;
    g.token_advantages = token_adv;
    check_group(g);
    return surrogate_objective(theta, g, token_adv, hyper, with_gradient);
}

void update_step(PolicyParams& params, std::span<const double> gradient, const HyperParams& hyper) {
    if (static_cast<std::int64_t>(gradient.size()) != params.param_count()) {
        throw std::invalid_argument("gradient size does not match parameter count");
    }
    for (size_t i = 0; i < gradient.size(); ++i) {
        if (!std::isfinite(gradient[i])) {
            throw std::domain_error("non-finite gradient at flat index " + std::to_string(i) +
                                    "; aborting update step");
        }
    }
    const double decay = 1.0 - hyper.learning_rate * hyper.weight_decay;
    size_t off = 0;
    for (auto& [name, t] : params.tensors()) {
        for (double& v : t->values) {
            v = v * decay + hyper.learning_rate * gradient[off];
            ++off;
        }
    }
}

}  // namespace gc2po
