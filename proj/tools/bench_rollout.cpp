// Times the batch pipeline (rollout -> segmentation -> rewards -> credit ->
// objective gradient) with the serial reference path (threads=1) against the
// OpenMP path, and checks that both produce identical gradients.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "gc2po/credit.hpp"
#include "gc2po/hyperparams.hpp"
#include "gc2po/objective.hpp"
#include "gc2po/parallel.hpp"
#include "gc2po/reward.hpp"
#include "gc2po/rng.hpp"
#include "gc2po/tasks.hpp"

using namespace gc2po;

namespace {

struct PipelineResult {
    double objective = 0.0;
    std::vector<double> gradient;
};

PipelineResult run_batch(const PolicyParams& params, const std::vector<ArithmeticTask>& tasks,
                         const HyperParams& hyper, const PerturbationSpec& spec, int threads) {
    const int n = static_cast<int>(tasks.size());
    std::vector<ObjectiveResult> slots(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int q) {
        const ArithmeticTask& task = tasks[static_cast<size_t>(q)];
        GroupBatchItem item;
        item.question = task.question;
        std::vector<TrajectoryCredit> credits;
        for (int k = 0; k < hyper.group_size; ++k) {
            const Trajectory traj = sample_trajectory(params, task.question, hyper.temperature, hyper.max_len,
                                                      derive_seed(7, static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(k)));
            const SegmentedTrajectory seg = parse_episodes(traj.generated, params.vocab);

            TrajectoryCredit tc;
            tc.token_count = static_cast<int>(traj.generated.size());
            tc.old_logprobs = traj.old_logprobs;
            tc.episodes = seg.episodes;
            tc.valid = seg.valid;
            tc.r_out = verify(seg, task, params.vocab);
            tc.r_cf.assign(seg.episodes.size(), 0.0);
            if (seg.valid) {
                std::vector<int> seq = task.question;
                seq.insert(seq.end(), traj.generated.begin(), traj.generated.end());
                const PolicyOutput out = forward(params, seq);
                for (size_t l = 0; l < seg.episodes.size(); ++l) {
                    if (seg.episodes[l].empty()) continue;
                    const CfRewardBreakdown b =
                        cf_reward(params, out, seg.episodes[l], static_cast<int>(task.question.size()), spec, hyper,
                                  derive_seed(9, static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(l)));
                    tc.r_cf[l] = b.r_cf;
                }
            }
            item.generated.push_back(traj.generated);
            item.old_logprobs.push_back(traj.old_logprobs);
            item.ref_logprobs.push_back(traj.old_logprobs);  // ref == sampling snapshot here
            item.r_out.push_back(tc.r_out);
            credits.push_back(std::move(tc));
        }
        const CreditTable table = build_credit_table(credits, hyper);
        item.token_advantages = table.token_advantages;
        slots[static_cast<size_t>(q)] = gc2po_objective(params, item, hyper);
    });

    PipelineResult res;
    res.gradient.assign(slots[0].gradient.size(), 0.0);
    for (const auto& s : slots) {
        res.objective += s.value;
        for (size_t i = 0; i < res.gradient.size(); ++i) res.gradient[i] += s.gradient[i];
    }
    const double inv = 1.0 / static_cast<double>(n);
    res.objective *= inv;
    for (double& g : res.gradient) g *= inv;
    return res;
}

double time_ms(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    int questions = 32;
    int repeats = 3;
    if (argc > 1) questions = std::atoi(argv[1]);
    if (argc > 2) repeats = std::atoi(argv[2]);

    const Vocabulary vocab = Vocabulary::arithmetic();
    PolicyParams params = PolicyParams::init(vocab, 32, 64, 96, 11);
    // nudge the heads so rollouts are not uniform noise
    Rng rng(13);
    for (double& v : params.out_head.values) v = rng.uniform(-0.02, 0.02);
    for (double& v : params.answer_head.values) v = rng.uniform(-0.02, 0.02);

    TaskGenConfig task_cfg;
    const auto tasks = generate_tasks(vocab, task_cfg, questions, 3);
    HyperParams hyper;
    PerturbationSpec spec;

    std::printf("pipeline benchmark: %d questions x K=%d, %d repeats, %d hardware threads\n", questions,
                hyper.group_size, repeats, hardware_threads());

    PipelineResult serial, parallel;
    double t_serial = 1e300, t_parallel = 1e300;
    for (int r = 0; r < repeats; ++r) {
        t_serial = std::min(t_serial, time_ms([&] { serial = run_batch(params, tasks, hyper, spec, 1); }));
        t_parallel = std::min(t_parallel, time_ms([&] { parallel = run_batch(params, tasks, hyper, spec, 0); }));
    }

    double max_diff = std::abs(serial.objective - parallel.objective);
    for (size_t i = 0; i < serial.gradient.size(); ++i) {
        max_diff = std::max(max_diff, std::abs(serial.gradient[i] - parallel.gradient[i]));
    }

    std::printf("serial   %8.1f ms\n", t_serial);
    std::printf("parallel %8.1f ms   speedup %.2fx\n", t_parallel, t_serial / t_parallel);
    std::printf("max |serial - parallel| over objective+gradient: %.3g %s\n", max_diff,
                max_diff == 0.0 ? "(bit-identical)" : "(MISMATCH)");
    return max_diff == 0.0 ? 0 : 1;
}
