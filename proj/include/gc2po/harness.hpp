#ifndef GC2PO_HARNESS_HPP
#define GC2PO_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gc2po/hyperparams.hpp"
#include "gc2po/perturbation.hpp"
#include "gc2po/policy.hpp"
#include "gc2po/tasks.hpp"

namespace gc2po {

enum class Method { Grpo, Gc2po, Gc2poNoSexp, Gc2poNoSsta, Gc2poNoRcf };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Full run description. Everything consumed by train() lives here and is
/// echoed into config.resolved.json; the echo is checked against the schema
/// manifest so no knob can be consumed without being recorded.
struct RunConfig {
    Method method = Method::Gc2po;
    HyperParams hyper;
    TaskGenConfig tasks;
    PerturbationSpec perturbation;

    int iterations = 60;
    int train_questions = 64;
    int eval_per_slice = 96;

    // Supervised warmup: behavior cloning on canonical solutions plus the
    // answer probe; stands in for the pretrained base model.
    int warmup_steps = 1200;
    double warmup_lr = 0.15;
    int warmup_batch = 16;
    double probe_weight = 0.3;
    double probe_jitter = 0.05;
    double probe_corrupt_weight = 0.0;

    int policy_dim = 32;
    int policy_mlp_dim = 64;
    int policy_max_positions = 96;

    int eval_every = 1;
    int inner_epochs = 1;      // surrogate updates per rollout batch (theta_old fixed)
    int checkpoint_every = 0;  // extra cadence; init/final always written
    int traj_log_every = 25;
    int threads = 0;           // 0 = OpenMP default, 1 = serial reference
    bool log_wall_clock = false;

    std::vector<std::uint64_t> seeds = {1};

    void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json resolved_config(const RunConfig& cfg, std::uint64_t active_seed);

/// One metrics.csv row.
struct MetricRecord {
    int iteration = 0;
    double mean_r_out = 0.0;
    double pass1_in = 0.0, pass1_long = 0.0, pass1_range = 0.0, pass1_perm = 0.0;
    double mean_s_sta = 0.0, mean_s_exp = 0.0, mean_r_cf = 0.0;
    double grad_norm = 0.0;
    double objective = 0.0;
    double seconds = 0.0;
};

extern const char* kMetricsHeader;
std::string format_metric_row(const MetricRecord& r);

struct TrainResult {
    std::vector<MetricRecord> metrics;
    PolicyParams final_params;
    bool aborted = false;
    std::string abort_reason;
};

/// Full training run; writes config.resolved.json, metrics.csv,
/// trajectories.jsonl and checkpoints under out_dir.
TrainResult train(const RunConfig& cfg, std::uint64_t seed, const std::string& out_dir);

/// Greedy-decode pass@1 of a parameter snapshot over a task set.
double evaluate(const PolicyParams& params, const std::vector<ArithmeticTask>& tasks, int max_len, int threads);

/// Reward-separation analysis over a labeled four-group set.
struct CorrelationReport {
    std::optional<double> cor_rout_f, cor_rout_p;
    std::optional<double> cor_rcf_f, cor_rcf_p;
    // per group: mean outcome reward and mean episodic counterfactual reward
    std::vector<std::string> group_names;
    std::vector<double> group_mean_rout;
    std::vector<double> group_mean_rcf;
    int items = 0;
};

CorrelationReport analyze_rewards(const std::vector<LabeledTrajectory>& labeled, const PolicyParams& params,
                                  const PerturbationSpec& spec, const HyperParams& hyper, std::uint64_t seed,
                                  int threads);

nlohmann::json report_to_json(const CorrelationReport& report);

/// Pearson correlation; nullopt when either side is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Multi-seed method comparison. Returns the rows of compare.csv.
struct CompareRow {
    std::string method;
    int seeds = 0;
    double in_mean = 0, in_std = 0;
    double long_mean = 0, long_std = 0;
    double range_mean = 0, range_std = 0;
    double perm_mean = 0, perm_std = 0;
    double shifted_mean = 0, shifted_std = 0;
};

std::vector<CompareRow> compare(const RunConfig& base, const std::vector<Method>& methods,
                                const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                                bool parallel_seeds = false);

/// The training question set of a run, reproducible from (config, seed).
std::vector<ArithmeticTask> training_tasks(const RunConfig& cfg, std::uint64_t seed);

/// Default output root: $GC2PO_OUT_ROOT or ./runs.
std::string default_out_root();

}  // namespace gc2po

#endif
