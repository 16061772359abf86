#include "gc2po/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gc2po/credit.hpp"
#include "gc2po/objective.hpp"
#include "gc2po/parallel.hpp"
#include "gc2po/reward.hpp"
#include "gc2po/rng.hpp"
#include "gc2po/segmentation.hpp"

namespace gc2po {

namespace {

// Salts for independent seed streams within one run.
enum : std::uint64_t {
    kSaltTasks = 0x5441534bULL,
    kSaltEval = 0x4556414cULL,
    kSaltPolicy = 0x504f4c59ULL,
    kSaltWarmupBatch = 0x57424154ULL,
    kSaltProbe = 0x50524f42ULL,
    kSaltRollout = 0x524f4c4cULL,
    kSaltCf = 0x43464f50ULL,
};

bool uses_cf_reward(Method m) { return m != Method::Grpo && m != Method::Gc2poNoRcf; }
bool includes_s_sta(Method m) { return m != Method::Gc2poNoSsta; }
bool includes_s_exp(Method m) { return m != Method::Gc2poNoSexp; }

struct EvalSets {
    std::vector<ArithmeticTask> in_dist;  // the training questions
    ShiftedEvalSets shifted;
};

int answer_index_of(const Vocabulary& vocab, int answer_value) {
    const int id = vocab.number_id(answer_value);
    for (size_t i = 0; i < vocab.answer_ids.size(); ++i) {
        if (vocab.answer_ids[i] == id) return static_cast<int>(i);
    }
    throw std::logic_error("answer value not in answer vocabulary");
}

// ------------------------------------------------------------------ warmup

struct WarmupItemResult {
    double value = 0.0;
    std::vector<double> gradient;
};

int apply_chain_op(int value, char op, int operand) {
    switch (op) {
        case '+': return value + operand;
        case '-': return value - operand;
        default: return value * operand;
    }
}

/// Answer implied by continuing the task's chain from `value` after step l
/// (1-based); nullopt when it leaves the answer range.
std::optional<int> implied_answer(const ArithmeticTask& task, int after_step, int value) {
    for (size_t l = static_cast<size_t>(after_step); l < task.ops.size(); ++l) {
        value = apply_chain_op(value, task.ops[l].op, task.ops[l].operand);
        if (value < 0 || value > 99) return std::nullopt;
    }
    return value;
}

/// Behavior cloning on the canonical solution plus the answer probe. The probe
/// reads episode-end hidden states through a stop-gradient (fresh leaf) and
/// trains on dual targets: jittered correct states labeled with the true
/// answer (wide stable basins) and one unjittered corrupted state labeled with
/// the answer its wrong value implies (sharp contested point). Stability of
/// q(.|u) under perturbation then tracks process validity.
WarmupItemResult warmup_item(const PolicyParams& params, const ArithmeticTask& task, const RunConfig& cfg,
                             std::uint64_t jitter_seed) {
    Tape tape;
    const PolicyLeaves leaves = make_policy_leaves(tape, params);
    std::vector<int> seq = task.question;
    seq.insert(seq.end(), task.canonical.begin(), task.canonical.end());
    const TapeForward tf = tape_forward(tape, params, leaves, seq);

    const int offset = static_cast<int>(task.question.size());
    const int t_gen = static_cast<int>(task.canonical.size());
    std::vector<std::pair<int, int>> entries(static_cast<size_t>(t_gen));
    for (int t = 0; t < t_gen; ++t) {
        entries[static_cast<size_t>(t)] = {offset + t - 1, task.canonical[static_cast<size_t>(t)]};
    }
    Tape::NodeId objective = tape.mean(tape.pick(tf.logprob_rows, std::move(entries)));

    if (cfg.probe_weight > 0.0) {
        Rng jitter_rng(jitter_seed);
        const int d = params.dim;
        const int episodes = static_cast<int>(task.ops.size());
        // Probe gradients flow into the trunk: warmup is what makes episode
        // states answer-informative in the first place. The jitter scale is a
        // value-level constant (no gradient through the norm).
        auto probe_logp = [&](Tape::NodeId hidden_node, int result_pos, double jitter, int target_idx) {
            auto u_node = tape.rows(hidden_node, {result_pos});
            if (jitter > 0.0) {
                const Tensor& h = tape.value(hidden_node);
                double norm2 = 0.0;
                for (int i = 0; i < d; ++i) norm2 += h.at(result_pos, i) * h.at(result_pos, i);
                const double scale = jitter * std::sqrt(norm2) / std::sqrt(static_cast<double>(d));
                Tensor noise = Tensor::zeros({1, d});
                for (int i = 0; i < d; ++i) noise.at(0, i) = scale * jitter_rng.normal();
                u_node = tape.add(u_node, tape.leaf(std::move(noise)));
            }
            const auto alogp = tape.log_softmax_rows(tape.matmul(u_node, leaves.answer_head));
            return tape.pick(alogp, {{0, target_idx}});
        };

        Tape::NodeId probe_acc = -1;
        for (int l = 0; l < episodes; ++l) {
            // canonical episode layout: <el> prev op operand = result </el>
            // target: the value this episode concludes (the final episode's is
            // the task answer)
            const int target = answer_index_of(params.vocab, task.intermediates[static_cast<size_t>(l)]);
            const auto picked = probe_logp(tf.hidden, offset + l * 7 + 5, cfg.probe_jitter, target);
            probe_acc = probe_acc < 0 ? picked : tape.add(probe_acc, picked);
        }
        Tape::NodeId probe_term = tape.mul(tape.mul(probe_acc, 1.0 / static_cast<double>(episodes)), cfg.probe_weight);

        // corrupted counterpart: wrong result at one rotating episode
        const int cl = static_cast<int>(jitter_seed % static_cast<std::uint64_t>(episodes));
        int wrong = -1;
        std::optional<int> wrong_target;
        for (int attempt = 0; attempt < 64 && !wrong_target; ++attempt) {
            wrong = (task.intermediates[static_cast<size_t>(cl)] + 1 + jitter_rng.below(99)) % 100;
            wrong_target = implied_answer(task, cl + 1, wrong);
        }
        if (cfg.probe_corrupt_weight > 0.0 && wrong_target) {
            std::vector<int> corrupt_seq = seq;
            corrupt_seq[static_cast<size_t>(offset + cl * 7 + 5)] = params.vocab.number_id(wrong);
            const TapeForward cf = tape_forward(tape, params, leaves, corrupt_seq);
            const auto picked =
                probe_logp(cf.hidden, offset + cl * 7 + 5, 0.0, answer_index_of(params.vocab, *wrong_target));
            probe_term = tape.add(probe_term, tape.mul(picked, cfg.probe_corrupt_weight * cfg.probe_weight));
        }
        objective = tape.add(objective, probe_term);
    }

    tape.backward(objective);
    WarmupItemResult res;
    res.value = tape.value(objective).values[0];
    res.gradient = collect_gradient(tape, leaves, params);
    return res;
}

/// Warmup uses its own Adam; the spec's plain-ascent update_step stays the RL
/// optimizer. Behavior cloning needs the faster optimizer to stand in for
/// pretraining within seconds.
void run_warmup(PolicyParams& params, const std::vector<ArithmeticTask>& train_tasks, const RunConfig& cfg,
                std::uint64_t seed) {
    if (cfg.warmup_steps == 0) return;

    const size_t n_params = static_cast<size_t>(params.param_count());
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    Rng batch_rng(derive_seed(seed, kSaltWarmupBatch));
    const int n = static_cast<int>(train_tasks.size());
    const int batch = std::min(cfg.warmup_batch, n);
    for (int step = 0; step < cfg.warmup_steps; ++step) {
        std::vector<int> idx(static_cast<size_t>(batch));
        for (int& i : idx) i = batch_rng.below(n);

        std::vector<WarmupItemResult> results(static_cast<size_t>(batch));
        parallel_for(batch, cfg.threads, [&](int b) {
            const std::uint64_t jseed = derive_seed(seed, kSaltProbe, static_cast<std::uint64_t>(step),
                                                   static_cast<std::uint64_t>(b));
            results[static_cast<size_t>(b)] = warmup_item(params, train_tasks[static_cast<size_t>(idx[static_cast<size_t>(b)])], cfg, jseed);
        });

        std::vector<double> grad(results[0].gradient.size(), 0.0);
        double value = 0.0;
        for (const auto& r : results) {
            value += r.value;
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += r.gradient[i];
        }
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (double& g : grad) g *= inv_b;
        value *= inv_b;

        for (double g : grad) {
            if (!std::isfinite(g)) throw std::domain_error("non-finite warmup gradient at step " + std::to_string(step));
        }
        const double bc1 = 1.0 - std::pow(beta1, step + 1);
        const double bc2 = 1.0 - std::pow(beta2, step + 1);
        std::vector<double> flat = params.flatten();
        for (size_t i = 0; i < n_params; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            flat[i] += cfg.warmup_lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + adam_eps);
        }
        params.unflatten(flat);

        if ((step + 1) % 200 == 0 || step + 1 == cfg.warmup_steps) {
            std::fprintf(stderr, "[warmup %4d/%d] objective %.4f\n", step + 1, cfg.warmup_steps, value);
        }
    }
}

// ------------------------------------------------------------------ rollout

struct GroupStats {
    double sum_s_sta = 0.0, sum_s_exp = 0.0, sum_r_cf = 0.0;
    int scored_episodes = 0;
    int sum_r_out = 0;
};

struct GroupRollout {
    GroupBatchItem item;
    std::vector<SegmentedTrajectory> segs;
    std::vector<bool> truncated;
    std::vector<std::vector<CfRewardBreakdown>> breakdowns;  // per traj, aligned with segs episodes; empty if skipped
    std::vector<std::vector<double>> r_cf_used;              // ablation-adjusted values fed into credit
    CreditTable credit;                                       // gc2po-family methods
    ObjectiveResult obj;
    GroupStats stats;
};

GroupRollout rollout_group(const PolicyParams& theta_old, const PolicyParams& pi_ref, const ArithmeticTask& task,
                           const RunConfig& cfg, std::uint64_t run_seed, int iteration, int question_index) {
    const Vocabulary& vocab = theta_old.vocab;
    const int k = cfg.hyper.group_size;
    GroupRollout g;
    g.item.question = task.question;

    for (int c = 0; c < k; ++c) {
        const std::uint64_t sample_seed = derive_seed(run_seed, kSaltRollout, static_cast<std::uint64_t>(iteration),
                                                      static_cast<std::uint64_t>(question_index), static_cast<std::uint64_t>(c));
        SampledRollout roll =
            sample_trajectory_states(theta_old, task.question, cfg.hyper.temperature, cfg.hyper.max_len, sample_seed);
        Trajectory& traj = roll.traj;
        SegmentedTrajectory seg = parse_episodes(traj.generated, vocab);
        traj.answer_id = seg.single_answer_token(vocab);
        traj.r_out = verify(seg, task, vocab);
        g.stats.sum_r_out += traj.r_out;

        std::vector<double> ref_lp = rescore_logprobs(pi_ref, task.question, traj.generated);

        std::vector<CfRewardBreakdown> breakdowns;
        std::vector<double> r_used(seg.episodes.size(), 0.0);
        const bool compute_cf = uses_cf_reward(cfg.method) && cfg.hyper.lambda_cf != 0.0 && seg.valid;
        if (compute_cf) {
            const PolicyOutput& out_old = roll.states;
            breakdowns.resize(seg.episodes.size());
            for (size_t l = 0; l < seg.episodes.size(); ++l) {
                if (seg.episodes[l].empty()) continue;
                const std::uint64_t op_seed =
                    derive_seed(run_seed, kSaltCf, static_cast<std::uint64_t>(iteration),
                                static_cast<std::uint64_t>(question_index), static_cast<std::uint64_t>(c),
                                static_cast<std::uint64_t>(l));
                CfRewardBreakdown b = cf_reward(theta_old, out_old, seg.episodes[l], static_cast<int>(task.question.size()),
                                                cfg.perturbation, cfg.hyper, op_seed);
                r_used[l] = (includes_s_sta(cfg.method) ? b.s_sta : 0.0) +
                            (includes_s_exp(cfg.method) ? cfg.hyper.lambda_exp * b.s_exp : 0.0);
                g.stats.sum_s_sta += b.s_sta;
                g.stats.sum_s_exp += b.s_exp;
                g.stats.sum_r_cf += b.r_cf;
                ++g.stats.scored_episodes;
                breakdowns[l] = std::move(b);
            }
        }

        g.item.generated.push_back(traj.generated);
        g.item.old_logprobs.push_back(traj.old_logprobs);
        g.item.ref_logprobs.push_back(std::move(ref_lp));
        g.item.r_out.push_back(traj.r_out);
        g.truncated.push_back(traj.truncated);
        g.segs.push_back(std::move(seg));
        g.breakdowns.push_back(std::move(breakdowns));
        g.r_cf_used.push_back(std::move(r_used));
    }
    return g;
}

/// Advantages are constants computed once from the theta_old rollouts; the
/// surrogate is then re-evaluated per inner epoch as theta moves.
void prepare_group(GroupRollout& g, const RunConfig& cfg) {
    if (cfg.method == Method::Grpo) return;  // grpo_objective derives Eq. 1 advantages itself
    std::vector<TrajectoryCredit> credits(g.segs.size());
    for (size_t c = 0; c < g.segs.size(); ++c) {
        TrajectoryCredit& tc = credits[c];
        tc.token_count = static_cast<int>(g.item.generated[c].size());
        tc.old_logprobs = g.item.old_logprobs[c];
        tc.episodes = g.segs[c].episodes;
        tc.valid = g.segs[c].valid;
        tc.r_out = g.item.r_out[c];
        tc.r_cf = g.r_cf_used[c];
    }
    g.credit = build_credit_table(credits, cfg.hyper);
    g.item.token_advantages = g.credit.token_advantages;
}

ObjectiveResult group_objective(const GroupRollout& g, const PolicyParams& theta, const RunConfig& cfg) {
    return cfg.method == Method::Grpo ? grpo_objective(theta, g.item, cfg.hyper)
                                      : gc2po_objective(theta, g.item, cfg.hyper);
}

// ------------------------------------------------------------------ logging

void write_group_jsonl(std::ofstream& os, int iteration, int question_index, const GroupRollout& g,
                       const Vocabulary& vocab) {
    nlohmann::json trajs = nlohmann::json::array();
    for (size_t c = 0; c < g.segs.size(); ++c) {
        const SegmentedTrajectory& seg = g.segs[c];
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& e : seg.episodes) spans.push_back({e.start, e.end, e.index});
        nlohmann::json episodes = nlohmann::json::array();
        if (!g.breakdowns[c].empty()) {
            for (size_t l = 0; l < seg.episodes.size(); ++l) {
                if (seg.episodes[l].empty()) continue;
                const CfRewardBreakdown& b = g.breakdowns[c][l];
                episodes.push_back({{"index", seg.episodes[l].index},
                                    {"s_sta", b.s_sta},
                                    {"s_exp", b.s_exp},
                                    {"r_cf", b.r_cf},
                                    {"r_cf_used", g.r_cf_used[c][l]},
                                    {"operator_seed", b.operator_seed},
                                    {"m", b.m_used}});
            }
        }
        nlohmann::json jt = {{"tokens", g.item.generated[c]},
                             {"old_logprobs", g.item.old_logprobs[c]},
                             {"r_out", g.item.r_out[c]},
                             {"valid", seg.valid},
                             {"truncated", static_cast<bool>(g.truncated[c])},
                             {"spans", spans},
                             {"episodes", episodes}};
        if (const auto a = seg.single_answer_token(vocab)) jt["answer"] = *a;
        if (seg.answer_start) {
            jt["answer_tokens"] = std::vector<int>(seg.tokens.begin() + *seg.answer_start,
                                                   seg.tokens.begin() + *seg.answer_end + 1);
        }
        if (!g.credit.token_advantages.empty()) {
            jt["token_advantages"] = g.credit.token_advantages[c];
            jt["trajectory_score"] = g.credit.trajectory_scores[c];
            jt["group_advantage"] = g.credit.group_advantages[c];
        }
        trajs.push_back(std::move(jt));
    }
    nlohmann::json rec = {{"iteration", iteration},
                          {"question_index", question_index},
                          {"question", g.item.question},
                          {"clip_fraction", g.obj.clip_fraction},
                          {"trajectories", std::move(trajs)}};
    os << rec.dump() << "\n";
}

}  // namespace

std::vector<ArithmeticTask> training_tasks(const RunConfig& cfg, std::uint64_t seed) {
    const Vocabulary vocab = Vocabulary::arithmetic();
    return generate_tasks(vocab, cfg.tasks, cfg.train_questions, derive_seed(seed, kSaltTasks));
}

const char* kMetricsHeader =
    "iteration,mean_r_out,pass1_in,pass1_long,pass1_range,pass1_perm,mean_s_sta,mean_s_exp,mean_r_cf,"
    "grad_norm,objective,seconds";

std::string format_metric_row(const MetricRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f",
                  r.iteration, r.mean_r_out, r.pass1_in, r.pass1_long, r.pass1_range, r.pass1_perm, r.mean_s_sta,
                  r.mean_s_exp, r.mean_r_cf, r.grad_norm, r.objective, r.seconds);
    return buf;
}

double evaluate(const PolicyParams& params, const std::vector<ArithmeticTask>& tasks, int max_len, int threads) {
    if (tasks.empty()) throw std::invalid_argument("evaluate over an empty task set");
    std::vector<int> hits(tasks.size(), 0);
    parallel_for(static_cast<int>(tasks.size()), threads, [&](int i) {
        const ArithmeticTask& task = tasks[static_cast<size_t>(i)];
        for (int tok : task.question) {
            if (tok < 0 || tok >= params.vocab.size()) {
                throw std::invalid_argument("task vocabulary does not match checkpoint vocabulary");
            }
        }
        const Trajectory traj = sample_trajectory(params, task.question, 0.0, max_len, 0);
        const SegmentedTrajectory seg = parse_episodes(traj.generated, params.vocab);
        hits[static_cast<size_t>(i)] = verify(seg, task, params.vocab);
    });
    int total = 0;
    for (int h : hits) total += h;
    return static_cast<double>(total) / static_cast<double>(tasks.size());
}

TrainResult train(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream os(out_dir + "/config.resolved.json");
        os << resolved_config(cfg, seed).dump(2) << "\n";
        if (!os) throw std::runtime_error("cannot write resolved config under " + out_dir);
    }

    const Vocabulary vocab = Vocabulary::arithmetic();
    cfg.tasks.validate(vocab);

    const auto train_tasks = training_tasks(cfg, seed);
    EvalSets eval_sets;
    eval_sets.in_dist = train_tasks;
    eval_sets.shifted = shift_eval_set(vocab, cfg.tasks, cfg.eval_per_slice, derive_seed(seed, kSaltEval));

    PolicyParams theta = PolicyParams::init(vocab, cfg.policy_dim, cfg.policy_mlp_dim, cfg.policy_max_positions,
                                            derive_seed(seed, kSaltPolicy));

    std::ofstream metrics(out_dir + "/metrics.csv", std::ios::trunc);
    metrics << kMetricsHeader << "\n";
    metrics.flush();
    std::ofstream traj_log(out_dir + "/trajectories.jsonl", std::ios::trunc);

    TrainResult result;
    auto emit = [&](const MetricRecord& r) {
        metrics << format_metric_row(r) << "\n";
        metrics.flush();
        result.metrics.push_back(r);
    };
    auto abort_run = [&](int iteration, const std::exception& e, const PolicyParams& last_good) {
        save_checkpoint(last_good, out_dir + "/checkpoint_lastgood.bin");
        nlohmann::json diag = {{"iteration", iteration}, {"error", e.what()}};
        std::ofstream ds(out_dir + "/diagnostics.json");
        ds << diag.dump(2) << "\n";
        metrics.flush();
        result.aborted = true;
        result.abort_reason = e.what();
        result.final_params = last_good;
        std::fprintf(stderr, "[abort] iteration %d: %s\n", iteration, e.what());
    };

    {
        const PolicyParams before_warmup = theta;
        try {
            run_warmup(theta, train_tasks, cfg, seed);
        } catch (const std::exception& e) {
            abort_run(0, e, before_warmup);
            return result;
        }
    }

    const PolicyParams pi_ref = theta;  // frozen reference for the whole run
    save_checkpoint(theta, out_dir + "/checkpoint_init.bin");

    auto eval_all = [&](const PolicyParams& p, MetricRecord& r) {
        r.pass1_in = evaluate(p, eval_sets.in_dist, cfg.hyper.max_len, cfg.threads);
        r.pass1_long = evaluate(p, eval_sets.shifted.longer, cfg.hyper.max_len, cfg.threads);
        r.pass1_range = evaluate(p, eval_sets.shifted.range, cfg.hyper.max_len, cfg.threads);
        r.pass1_perm = evaluate(p, eval_sets.shifted.permuted, cfg.hyper.max_len, cfg.threads);
    };

    MetricRecord row0;
    row0.iteration = 0;
    eval_all(theta, row0);
    emit(row0);
    std::fprintf(stderr, "[iter %3d/%d] pass1 in/long/range/perm %.3f/%.3f/%.3f/%.3f (warmup policy)\n", 0,
                 cfg.iterations, row0.pass1_in, row0.pass1_long, row0.pass1_range, row0.pass1_perm);

    const int batch = std::min(cfg.hyper.batch_size, cfg.train_questions);
    Rng batch_rng(derive_seed(seed, kSaltWarmupBatch, 0x42ULL));
    MetricRecord last_eval = row0;

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const PolicyParams theta_backup = theta;
        try {
            const PolicyParams theta_old = theta;

            std::vector<int> batch_idx(static_cast<size_t>(batch));
            if (batch == cfg.train_questions) {
                for (int i = 0; i < batch; ++i) batch_idx[static_cast<size_t>(i)] = i;
            } else {
                for (int& i : batch_idx) i = batch_rng.below(cfg.train_questions);
            }

            std::vector<GroupRollout> rollouts(static_cast<size_t>(batch));
            parallel_for(batch, cfg.threads, [&](int b) {
                const int qi = batch_idx[static_cast<size_t>(b)];
                rollouts[static_cast<size_t>(b)] =
                    rollout_group(theta_old, pi_ref, train_tasks[static_cast<size_t>(qi)], cfg, seed, iter, qi);
                prepare_group(rollouts[static_cast<size_t>(b)], cfg);
            });

            GroupStats stats;
            for (const GroupRollout& g : rollouts) {
                stats.sum_s_sta += g.stats.sum_s_sta;
                stats.sum_s_exp += g.stats.sum_s_exp;
                stats.sum_r_cf += g.stats.sum_r_cf;
                stats.scored_episodes += g.stats.scored_episodes;
                stats.sum_r_out += g.stats.sum_r_out;
            }
            const double inv_batch = 1.0 / static_cast<double>(batch);

            MetricRecord r;
            r.iteration = iter;
            double clip_last = 0.0;
            for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
                parallel_for(batch, cfg.threads, [&](int b) {
                    rollouts[static_cast<size_t>(b)].obj = group_objective(rollouts[static_cast<size_t>(b)], theta, cfg);
                });
                // fixed-order reduction keeps any thread count bit-identical
                std::vector<double> grad(static_cast<size_t>(theta.param_count()), 0.0);
                double objective = 0.0;
                double clip_sum = 0.0;
                for (const GroupRollout& g : rollouts) {
                    objective += g.obj.value;
                    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g.obj.gradient[i];
                    clip_sum += g.obj.clip_fraction;
                }
                objective *= inv_batch;
                for (double& g : grad) g *= inv_batch;
                if (!std::isfinite(objective)) throw std::domain_error("non-finite objective value");

                if (epoch == 0) {
                    double grad_norm = 0.0;
                    for (double g : grad) grad_norm += g * g;
                    r.grad_norm = std::sqrt(grad_norm);
                    r.objective = objective;
                }
                clip_last = clip_sum * inv_batch;

                update_step(theta, grad, cfg.hyper);
                for (const auto& [name, t] : theta.tensors()) {
                    if (!t->all_finite()) throw std::domain_error("non-finite parameters in " + name + " after update");
                }
            }

            r.mean_r_out = static_cast<double>(stats.sum_r_out) / static_cast<double>(batch * cfg.hyper.group_size);
            if (stats.scored_episodes > 0) {
                r.mean_s_sta = stats.sum_s_sta / stats.scored_episodes;
                r.mean_s_exp = stats.sum_s_exp / stats.scored_episodes;
                r.mean_r_cf = stats.sum_r_cf / stats.scored_episodes;
            }
            if (iter % cfg.eval_every == 0 || iter == cfg.iterations) {
                eval_all(theta, r);
                last_eval = r;
            } else {
                r.pass1_in = last_eval.pass1_in;
                r.pass1_long = last_eval.pass1_long;
                r.pass1_range = last_eval.pass1_range;
                r.pass1_perm = last_eval.pass1_perm;
            }
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (cfg.log_wall_clock) r.seconds = elapsed;
            emit(r);

            if (iter == 1 || iter % cfg.traj_log_every == 0) {
                for (int b = 0; b < batch; ++b) {
                    write_group_jsonl(traj_log, iter, batch_idx[static_cast<size_t>(b)], rollouts[static_cast<size_t>(b)], vocab);
                }
                traj_log.flush();
            }
            if (cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof name, "/checkpoint_%04d.bin", iter);
                save_checkpoint(theta, out_dir + name);
            }
            std::fprintf(stderr,
                         "[iter %3d/%d] J %.5f r_out %.3f pass1 %.3f/%.3f/%.3f/%.3f grad %.3f clip %.3f (%.2fs)\n",
                         iter, cfg.iterations, r.objective, r.mean_r_out, r.pass1_in, r.pass1_long, r.pass1_range,
                         r.pass1_perm, r.grad_norm, clip_last, elapsed);
        } catch (const std::exception& e) {
            abort_run(iter, e, theta_backup);
            return result;
        }
    }

    save_checkpoint(theta, out_dir + "/checkpoint_final.bin");
    result.final_params = std::move(theta);
    return result;
}

// ------------------------------------------------------------------ analyze

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("correlation needs equal-length nonempty series");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // constant series: undefined
    return sxy / std::sqrt(sxx * syy);
}

CorrelationReport analyze_rewards(const std::vector<LabeledTrajectory>& labeled, const PolicyParams& params,
                                  const PerturbationSpec& spec, const HyperParams& hyper, std::uint64_t seed,
                                  int threads) {
    if (labeled.empty()) throw std::invalid_argument("analysis over an empty labeled set");
    const int n = static_cast<int>(labeled.size());
    std::vector<double> r_out(static_cast<size_t>(n)), r_cf(static_cast<size_t>(n)), f(static_cast<size_t>(n)),
        p(static_cast<size_t>(n));

    parallel_for(n, threads, [&](int i) {
        const LabeledTrajectory& lt = labeled[static_cast<size_t>(i)];
        f[static_cast<size_t>(i)] = lt.f;
        p[static_cast<size_t>(i)] = lt.p;
        r_out[static_cast<size_t>(i)] = verify(lt.seg, lt.task, params.vocab);

        std::vector<int> seq = lt.task.question;
        seq.insert(seq.end(), lt.seg.tokens.begin(), lt.seg.tokens.end());
        const PolicyOutput out = forward(params, seq);
        double acc = 0.0;
        int m = 0;
        for (size_t l = 0; l < lt.seg.episodes.size(); ++l) {
            if (lt.seg.episodes[l].empty()) continue;
            const std::uint64_t op_seed = derive_seed(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(l));
            const CfRewardBreakdown b = cf_reward(params, out, lt.seg.episodes[l],
                                                  static_cast<int>(lt.task.question.size()), spec, hyper, op_seed);
            acc += b.r_cf;
            ++m;
        }
        r_cf[static_cast<size_t>(i)] = m > 0 ? acc / m : 0.0;
    });

    CorrelationReport rep;
    rep.items = n;
    rep.cor_rout_f = pearson(r_out, f);
    rep.cor_rout_p = pearson(r_out, p);
    rep.cor_rcf_f = pearson(r_cf, f);
    rep.cor_rcf_p = pearson(r_cf, p);

    for (int g = 0; g < 4; ++g) {
        const TrajGroup group = static_cast<TrajGroup>(g);
        double sum_out = 0, sum_cf = 0;
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (labeled[static_cast<size_t>(i)].group != group) continue;
            sum_out += r_out[static_cast<size_t>(i)];
            sum_cf += r_cf[static_cast<size_t>(i)];
            ++count;
        }
        rep.group_names.push_back(traj_group_name(group));
        rep.group_mean_rout.push_back(count > 0 ? sum_out / count : 0.0);
        rep.group_mean_rcf.push_back(count > 0 ? sum_cf / count : 0.0);
    }
    return rep;
}

nlohmann::json report_to_json(const CorrelationReport& rep) {
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        if (!v) return nlohmann::json{{"undefined", true}};
        return *v;
    };
    nlohmann::json groups = nlohmann::json::array();
    for (size_t g = 0; g < rep.group_names.size(); ++g) {
        groups.push_back({{"group", rep.group_names[g]},
                          {"mean_r_out", rep.group_mean_rout[g]},
                          {"mean_r_cf", rep.group_mean_rcf[g]}});
    }
    return nlohmann::json{{"items", rep.items},
                          {"cor_rout_f", opt(rep.cor_rout_f)},
                          {"cor_rout_p", opt(rep.cor_rout_p)},
                          {"cor_rcf_f", opt(rep.cor_rcf_f)},
                          {"cor_rcf_p", opt(rep.cor_rcf_p)},
                          {"groups", std::move(groups)}};
}

// ------------------------------------------------------------------ compare

namespace {

struct SeedOutcome {
    double in = 0, lng = 0, rng = 0, perm = 0;
};

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    sd = 0.0;
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<CompareRow> compare(const RunConfig& base, const std::vector<Method>& methods,
                                const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                                bool parallel_seeds) {
    if (methods.empty() || seeds.empty()) throw std::invalid_argument("compare needs methods and seeds");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    const int n_runs = static_cast<int>(methods.size() * seeds.size());
    std::vector<SeedOutcome> outcomes(static_cast<size_t>(n_runs));

    auto run_one = [&](int r) {
        const Method m = methods[static_cast<size_t>(r) / seeds.size()];
        const std::uint64_t s = seeds[static_cast<size_t>(r) % seeds.size()];
        RunConfig cfg = base;
        cfg.method = m;
        if (parallel_seeds) cfg.threads = 1;  // runs are the parallel axis then
        const std::string dir = out_dir + "/" + method_name(m) + "_seed" + std::to_string(s);
        const TrainResult res = train(cfg, s, dir);
        if (res.aborted) throw std::runtime_error("run " + dir + " aborted: " + res.abort_reason);
        const MetricRecord& last = res.metrics.back();
        outcomes[static_cast<size_t>(r)] = {last.pass1_in, last.pass1_long, last.pass1_range, last.pass1_perm};
    };

    if (parallel_seeds) {
        parallel_for(n_runs, 0, run_one);
    } else {
        for (int r = 0; r < n_runs; ++r) run_one(r);
    }

    std::vector<CompareRow> rows;
    for (size_t mi = 0; mi < methods.size(); ++mi) {
        std::vector<double> in, lng, rng, perm, shifted;
        for (size_t si = 0; si < seeds.size(); ++si) {
            const SeedOutcome& o = outcomes[mi * seeds.size() + si];
            in.push_back(o.in);
            lng.push_back(o.lng);
            rng.push_back(o.rng);
            perm.push_back(o.perm);
            shifted.push_back((o.lng + o.rng + o.perm) / 3.0);
        }
        CompareRow row;
        row.method = method_name(methods[mi]);
        row.seeds = static_cast<int>(seeds.size());
        mean_std(in, row.in_mean, row.in_std);
        mean_std(lng, row.long_mean, row.long_std);
        mean_std(rng, row.range_mean, row.range_std);
        mean_std(perm, row.perm_mean, row.perm_std);
        mean_std(shifted, row.shifted_mean, row.shifted_std);
        rows.push_back(row);
    }

    std::ofstream os(out_dir + "/compare.csv", std::ios::trunc);
    os << "method,seeds,pass1_in_mean,pass1_in_std,pass1_long_mean,pass1_long_std,pass1_range_mean,"
          "pass1_range_std,pass1_perm_mean,pass1_perm_std,shifted_mean,shifted_std\n";
    for (const CompareRow& r : rows) {
        char buf[512];
        std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                      r.method.c_str(), r.seeds, r.in_mean, r.in_std, r.long_mean, r.long_std, r.range_mean,
                      r.range_std, r.perm_mean, r.perm_std, r.shifted_mean, r.shifted_std);
        os << buf << "\n";
    }
    if (!os) throw std::runtime_error("cannot write compare.csv under " + out_dir);
    return rows;
}

}  // namespace gc2po
