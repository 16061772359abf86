#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gc2po/harness.hpp"
#include "gc2po/parallel.hpp"
#include "gc2po/rng.hpp"

namespace {

using namespace gc2po;

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<Method> parse_methods(const std::string& csv) {
    std::vector<Method> methods;
    size_t start = 0;
    while (start <= csv.size()) {
        const size_t comma = csv.find(',', start);
        const std::string name = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!name.empty()) methods.push_back(method_from_name(name));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (methods.empty()) throw std::invalid_argument("--methods needs at least one method name");
    return methods;
}

int cmd_train(const std::string& config_path, const std::string& out, std::int64_t seed_flag) {
    RunConfig cfg = load_run_config(config_path);
    const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.seeds.front();
    const TrainResult res = train(cfg, seed, out);
    if (res.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", res.abort_reason.c_str());
        return 1;
    }
    const MetricRecord& last = res.metrics.back();
    std::printf("done: iterations=%d pass1_in=%.4f pass1_long=%.4f pass1_range=%.4f pass1_perm=%.4f\n",
                last.iteration, last.pass1_in, last.pass1_long, last.pass1_range, last.pass1_perm);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& tasks_path, int max_len, int threads) {
    const PolicyParams params = load_checkpoint(checkpoint);
    const auto tasks = load_tasks_jsonl(params.vocab, tasks_path);
    const double pass1 = evaluate(params, tasks, max_len, threads);
    std::printf("pass@1 %.6f over %zu tasks\n", pass1, tasks.size());
    return 0;
}

int cmd_analyze(const std::string& checkpoint, const std::string& config_path, const std::string& out, int per_cell,
                std::uint64_t seed, std::int64_t train_seed) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    const PolicyParams params = load_checkpoint(checkpoint);

    // With --train-seed, corruptions are planted over the run's training
    // questions (new solutions on known questions); otherwise over fresh ones.
    const auto labeled =
        train_seed >= 0
            ? synthesize_groups_over(training_tasks(cfg, static_cast<std::uint64_t>(train_seed)), params.vocab,
                                     per_cell, derive_seed(seed, 0xA11))
            : synthesize_groups(params.vocab, cfg.tasks, per_cell, derive_seed(seed, 0xA11));
    const CorrelationReport rep =
        analyze_rewards(labeled, params, cfg.perturbation, cfg.hyper, derive_seed(seed, 0xA12), cfg.threads);

    auto show = [](const char* name, const std::optional<double>& v) {
        if (v) {
            std::printf("%-12s % .4f\n", name, *v);
        } else {
            std::printf("%-12s undefined (constant series)\n", name);
        }
    };
    std::printf("reward correlations over %d labeled trajectories (%d per cell)\n", rep.items, per_cell);
    show("cor(Rout,f)", rep.cor_rout_f);
    show("cor(Rout,p)", rep.cor_rout_p);
    show("cor(Rcf,f)", rep.cor_rcf_f);
    show("cor(Rcf,p)", rep.cor_rcf_p);
    std::printf("%-12s %10s %10s\n", "group", "mean_Rout", "mean_Rcf");
    for (size_t g = 0; g < rep.group_names.size(); ++g) {
        std::printf("%-12s %10.4f %10.4f\n", rep.group_names[g].c_str(), rep.group_mean_rout[g], rep.group_mean_rcf[g]);
    }

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream os(out + "/reward_report.json");
        os << report_to_json(rep).dump(2) << "\n";
        if (!os) throw std::runtime_error("cannot write report under " + out);
        std::printf("wrote %s/reward_report.json\n", out.c_str());
    }
    return 0;
}

int cmd_gen_tasks(const std::string& config_path, const std::string& out, std::int64_t seed_flag) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.seeds.front();
    const Vocabulary vocab = Vocabulary::arithmetic();
    cfg.tasks.validate(vocab);

    std::filesystem::create_directories(out);
    const std::string fingerprint = "fnv1a:" + std::to_string(fnv1a64(resolved_config(cfg, seed)["tasks"].dump()));

    const auto train_tasks = generate_tasks(vocab, cfg.tasks, cfg.train_questions, derive_seed(seed, 0x5441534bULL));
    const auto shifted = shift_eval_set(vocab, cfg.tasks, cfg.eval_per_slice, derive_seed(seed, 0x4556414cULL));
    save_tasks_jsonl(train_tasks, vocab, out + "/train.jsonl", fingerprint);
    save_tasks_jsonl(shifted.longer, vocab, out + "/eval_long.jsonl", fingerprint);
    save_tasks_jsonl(shifted.range, vocab, out + "/eval_range.jsonl", fingerprint);
    save_tasks_jsonl(shifted.permuted, vocab, out + "/eval_perm.jsonl", fingerprint);
    std::printf("wrote %zu train and 3x%zu shifted tasks under %s\n", train_tasks.size(), shifted.longer.size(),
                out.c_str());
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out, int seeds_flag, const std::string& methods_csv,
                bool parallel_seeds) {
    RunConfig cfg = load_run_config(config_path);
    std::vector<std::uint64_t> seeds = cfg.seeds;
    if (seeds_flag > 0) {
        seeds.clear();
        for (int s = 0; s < seeds_flag; ++s) {
            seeds.push_back(s < static_cast<int>(cfg.seeds.size()) ? cfg.seeds[static_cast<size_t>(s)]
                                                                   : static_cast<std::uint64_t>(s + 1));
        }
    }
    const std::vector<Method> methods = parse_methods(methods_csv);
    const auto rows = compare(cfg, methods, seeds, out, parallel_seeds);

    std::printf("%-16s %8s %8s %8s %8s %8s\n", "method", "in", "long", "range", "perm", "shifted");
    for (const CompareRow& r : rows) {
        std::printf("%-16s %.3f±%.3f %.3f±%.3f %.3f±%.3f %.3f±%.3f %.3f±%.3f\n", r.method.c_str(), r.in_mean,
                    r.in_std, r.long_mean, r.long_std, r.range_mean, r.range_std, r.perm_mean, r.perm_std,
                    r.shifted_mean, r.shifted_std);
    }

    const Vocabulary vocab = Vocabulary::arithmetic();
    const auto probe_tasks = generate_tasks(vocab, cfg.tasks, 10000, 0xBA5EULL);
    std::printf("random-answer baseline: %.4f\n", random_answer_baseline(probe_tasks, vocab, 0xBA5E1ULL));
    std::printf("wrote %s/compare.csv\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group causal counterfactual policy optimization on synthetic reasoning chains"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint, tasks_path, methods_csv = "grpo,gc2po";
    std::int64_t seed_flag = -1;
    int per_cell = 200, max_len = 56, threads = 0, seeds_flag = 0;
    std::int64_t train_seed = -1;
    bool parallel_seeds = false;
    std::uint64_t analyze_seed = 7;

    auto* t = app.add_subcommand("train", "Train one method on arithmetic chains");
    t->add_option("--config", config_path, "Run config JSON")->required();
    t->add_option("--out", out_dir, "Output directory");
    t->add_option("--seed", seed_flag, "Override the config's first seed");

    auto* e = app.add_subcommand("eval", "Greedy pass@1 of a checkpoint on a task file");
    e->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();
    e->add_option("--tasks", tasks_path, "Task JSONL file")->required();
    e->add_option("--max-len", max_len, "Generation budget");
    e->add_option("--threads", threads, "0 = OpenMP default, 1 = serial");

    auto* a = app.add_subcommand("analyze", "Reward separation over the four-group synthetic set");
    a->add_option("--checkpoint", checkpoint, "Policy checkpoint (the trained probe)")->required();
    a->add_option("--config", config_path, "Run config JSON (defaults if omitted)");
    a->add_option("--out", out_dir, "Directory for reward_report.json");
    a->add_option("--per-cell", per_cell, "Trajectories per group cell");
    a->add_option("--seed", analyze_seed, "Analysis seed");
    a->add_option("--train-seed", train_seed, "Plant the four groups over this run seed's training questions");

    auto* g = app.add_subcommand("gen-tasks", "Write task sets as JSONL for exact reuse");
    g->add_option("--config", config_path, "Run config JSON (defaults if omitted)");
    g->add_option("--out", out_dir, "Output directory")->required();
    g->add_option("--seed", seed_flag, "Override the config's first seed");

    auto* c = app.add_subcommand("compare", "Multi-seed method comparison table");
    c->add_option("--config", config_path, "Run config JSON")->required();
    c->add_option("--out", out_dir, "Output directory");
    c->add_option("--seeds", seeds_flag, "Number of seeds (prefix of config seeds, then 1,2,...)");
    c->add_option("--methods", methods_csv, "Comma-separated method list");
    c->add_flag("--parallel-seeds", parallel_seeds, "Run seeds in parallel (runs use threads=1 internally)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    if (out_dir.empty()) out_dir = default_out_root() + "/" + app.get_subcommands().front()->get_name();

    try {
        if (app.got_subcommand(t)) return cmd_train(config_path, out_dir, seed_flag);
        if (app.got_subcommand(e)) return cmd_eval(checkpoint, tasks_path, max_len, threads);
        if (app.got_subcommand(a)) return cmd_analyze(checkpoint, config_path, out_dir, per_cell, analyze_seed, train_seed);
        if (app.got_subcommand(g)) return cmd_gen_tasks(config_path, out_dir, seed_flag);
        if (app.got_subcommand(c)) return cmd_compare(config_path, out_dir, seeds_flag, methods_csv, parallel_seeds);
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 2;
}
