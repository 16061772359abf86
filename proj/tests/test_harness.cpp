#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <doctest.h>

#include "gc2po/credit.hpp"
#include "gc2po/harness.hpp"
#include "gc2po/objective.hpp"
#include "gc2po/reward.hpp"
#include "gc2po/rng.hpp"
#include "gc2po/segmentation.hpp"

using namespace gc2po;

namespace {

namespace fs = std::filesystem;

std::string tmp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "gc2po_harness_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

/// Small but real run shape: enough warmup that rollouts parse.
RunConfig tiny_config() {
    RunConfig cfg;
    cfg.method = Method::Gc2po;
    cfg.iterations = 2;
    cfg.train_questions = 6;
    cfg.eval_per_slice = 6;
    cfg.warmup_steps = 120;
    cfg.warmup_batch = 6;
    cfg.hyper.batch_size = 6;
    cfg.hyper.group_size = 4;
    cfg.hyper.max_len = 40;
    cfg.eval_every = 1;
    cfg.traj_log_every = 1;
    cfg.threads = 1;
    return cfg;
}

}  // namespace

TEST_CASE("config: parsing, defaults, unknown keys, bad values") {
    const RunConfig cfg = parse_run_config(nlohmann::json::parse(R"({
        "method": "grpo",
        "hyper": {"group_size": 4, "lambda_cf": 0.5},
        "tasks": {"train_questions": 8},
        "run": {"threads": 1}
    })"));
    CHECK(cfg.method == Method::Grpo);
    CHECK(cfg.hyper.group_size == 4);
    CHECK(cfg.hyper.lambda_cf == 0.5);
    CHECK(cfg.hyper.clip_eps == 0.2);  // default retained
    CHECK(cfg.train_questions == 8);
    CHECK(cfg.perturbation.count == cfg.hyper.perturb_count);

    CHECK_THROWS_WITH_AS(parse_run_config(nlohmann::json::parse(R"({"mystery": 1})")),
                         doctest::Contains("mystery"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_run_config(nlohmann::json::parse(R"({"hyper": {"clip_epsilon": 0.2}})")),
                         doctest::Contains("clip_epsilon"), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"hyper": {"clip_eps": 1.5}})")), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"method": "ppo"})")), std::invalid_argument);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"seeds": []})")), std::invalid_argument);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), std::invalid_argument);
}

TEST_CASE("resolved config is complete: it round-trips through the strict parser") {
    RunConfig cfg = tiny_config();
    const nlohmann::json doc = resolved_config(cfg, 7);
    CHECK(doc.at("seed") == 7);
    // every section the parser knows is present
    for (const char* key : {"method", "seeds", "iterations", "hyper", "tasks", "perturbation", "warmup", "policy", "run"}) {
        CHECK(doc.contains(key));
    }
    // and every knob inside them: reparsing an edited copy must not change anything
    nlohmann::json copy = doc;
    copy.erase("seed");
    const RunConfig back = parse_run_config(copy);
    CHECK(resolved_config(back, 7) == doc);
}

TEST_CASE("train writes the full artifact set and evaluates iteration 0") {
    const std::string out = tmp_dir("smoke");
    RunConfig cfg = tiny_config();
    const TrainResult res = train(cfg, 3, out);
    CHECK(!res.aborted);
    REQUIRE(res.metrics.size() == 3);  // row 0 + two RL iterations
    for (size_t i = 0; i < res.metrics.size(); ++i) CHECK(res.metrics[i].iteration == static_cast<int>(i));

    CHECK(fs::exists(out + "/config.resolved.json"));
    CHECK(fs::exists(out + "/metrics.csv"));
    CHECK(fs::exists(out + "/trajectories.jsonl"));
    CHECK(fs::exists(out + "/checkpoint_init.bin"));
    CHECK(fs::exists(out + "/checkpoint_final.bin"));

    const std::string metrics = slurp(out + "/metrics.csv");
    CHECK(metrics.rfind(kMetricsHeader, 0) == 0);

    // zero iterations emit only the iteration-0 evaluation
    const std::string out0 = tmp_dir("zero_iters");
    cfg.iterations = 0;
    const TrainResult res0 = train(cfg, 3, out0);
    REQUIRE(res0.metrics.size() == 1);
    CHECK(res0.metrics[0].iteration == 0);
}

TEST_CASE("determinism: identical config and seed give byte-identical outputs") {
    RunConfig cfg = tiny_config();
    const std::string a = tmp_dir("det_a");
    const std::string b = tmp_dir("det_b");
    train(cfg, 11, a);
    train(cfg, 11, b);
    CHECK(slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv"));
    CHECK(slurp(a + "/trajectories.jsonl") == slurp(b + "/trajectories.jsonl"));
    CHECK(slurp(a + "/checkpoint_final.bin") == slurp(b + "/checkpoint_final.bin"));
}

TEST_CASE("parallel runs are byte-identical to the serial reference") {
    RunConfig cfg = tiny_config();
    const std::string a = tmp_dir("thr_serial");
    const std::string b = tmp_dir("thr_parallel");
    cfg.threads = 1;
    train(cfg, 13, a);
    cfg.threads = 2;
    train(cfg, 13, b);
    CHECK(slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv"));
    CHECK(slurp(a + "/trajectories.jsonl") == slurp(b + "/trajectories.jsonl"));
    CHECK(slurp(a + "/checkpoint_final.bin") == slurp(b + "/checkpoint_final.bin"));
}

TEST_CASE("GRPO-reduction configuration: grpo and gc2po produce identical metric streams") {
    RunConfig cfg = tiny_config();
    cfg.warmup_steps = 0;  // uniform old policy
    cfg.hyper.lambda_cf = 0.0;
    cfg.hyper.trim_fraction = 0.0;
    cfg.hyper.eps_std = 0.0;
    cfg.iterations = 2;

    const std::string a = tmp_dir("red_grpo");
    const std::string b = tmp_dir("red_gc2po");
    cfg.method = Method::Grpo;
    train(cfg, 17, a);
    cfg.method = Method::Gc2po;
    train(cfg, 17, b);
    CHECK(slurp(a + "/metrics.csv") == slurp(b + "/metrics.csv"));
}

TEST_CASE("evaluate: memorizing policy scores 1.0 on its tasks; errors on misuse") {
    RunConfig cfg = tiny_config();
    cfg.train_questions = 2;
    cfg.warmup_steps = 400;
    cfg.warmup_batch = 2;
    cfg.iterations = 0;
    const std::string out = tmp_dir("oracle_eval");
    const TrainResult res = train(cfg, 19, out);
    const auto tasks = training_tasks(cfg, 19);
    CHECK(evaluate(res.final_params, tasks, cfg.hyper.max_len, 1) == 1.0);

    CHECK_THROWS_AS(evaluate(res.final_params, {}, cfg.hyper.max_len, 1), std::invalid_argument);

    // vocabulary mismatch: a policy over a different alphabet rejects the tasks
    Vocabulary tiny = Vocabulary::from_symbols({"a", "b", "<ans>", "<eos>", "<e1>", "</e1>"}, {0, 1});
    const PolicyParams other = PolicyParams::init(tiny, 4, 4, 16, 1);
    CHECK_THROWS_AS(evaluate(other, tasks, 8, 1), std::invalid_argument);
}

TEST_CASE("abort: non-finite training writes diagnostics and a loadable last-good checkpoint") {
    RunConfig cfg = tiny_config();
    cfg.warmup_steps = 8;
    cfg.warmup_lr = 1e15;  // blows up within a few steps
    const std::string out = tmp_dir("abort");
    const TrainResult res = train(cfg, 23, out);
    CHECK(res.aborted);
    CHECK(!res.abort_reason.empty());
    CHECK(fs::exists(out + "/diagnostics.json"));
    CHECK(fs::exists(out + "/checkpoint_lastgood.bin"));
    const PolicyParams last_good = load_checkpoint(out + "/checkpoint_lastgood.bin");
    CHECK(last_good.flatten().size() > 0);
    const std::string metrics = slurp(out + "/metrics.csv");
    CHECK(metrics.rfind(kMetricsHeader, 0) == 0);  // no record lost
}

TEST_CASE("pearson correlation: self-correlation, undefined cases") {
    const std::vector<double> x = {0, 1, 0, 1, 1};
    CHECK(*pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> flat = {2, 2, 2, 2, 2};
    CHECK(!pearson(x, flat).has_value());
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("analyze_rewards: exact outcome correlations on the balanced design") {
    RunConfig cfg = tiny_config();
    cfg.warmup_steps = 150;
    cfg.iterations = 0;
    const std::string out = tmp_dir("analyze");
    const TrainResult res = train(cfg, 29, out);

    const auto labeled = synthesize_groups_over(training_tasks(cfg, 29), res.final_params.vocab, 24, 31);
    const CorrelationReport rep =
        analyze_rewards(labeled, res.final_params, cfg.perturbation, cfg.hyper, 33, 1);
    REQUIRE(rep.cor_rout_f.has_value());
    CHECK(*rep.cor_rout_f == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(rep.cor_rout_p.has_value());
    CHECK(std::abs(*rep.cor_rout_p) <= 1e-9);  // orthogonal by the balanced construction
    CHECK(rep.group_mean_rout[1] == 0.0);      // near-miss
    CHECK(rep.group_mean_rout[3] == 0.0);      // fully-bad

    // determinism of the report
    const CorrelationReport rep2 =
        analyze_rewards(labeled, res.final_params, cfg.perturbation, cfg.hyper, 33, 2);
    CHECK(report_to_json(rep) == report_to_json(rep2));
}

TEST_CASE("log/replay fidelity: logged rewards recompute from the checkpoint and operator seeds") {
    RunConfig cfg = tiny_config();
    cfg.warmup_steps = 250;  // enough that some rollouts parse as valid
    cfg.iterations = 1;
    cfg.traj_log_every = 1;
    const std::string out = tmp_dir("replay");
    const TrainResult res = train(cfg, 37, out);
    REQUIRE(!res.aborted);

    // theta_old of iteration 1 is exactly checkpoint_init
    const PolicyParams theta_old = load_checkpoint(out + "/checkpoint_init.bin");
    const auto tasks = training_tasks(cfg, 37);

    std::ifstream is(out + "/trajectories.jsonl");
    REQUIRE(is);
    std::string line;
    int replayed_episodes = 0;
    int replayed_advantages = 0;
    while (std::getline(is, line)) {
        const nlohmann::json rec = nlohmann::json::parse(line);
        if (rec.at("iteration").get<int>() != 1) continue;
        const auto& task = tasks[rec.at("question_index").get<std::size_t>()];
        REQUIRE(task.question == rec.at("question").get<std::vector<int>>());

        std::vector<TrajectoryCredit> credits;
        for (const auto& jt : rec.at("trajectories")) {
            const auto tokens = jt.at("tokens").get<std::vector<int>>();
            const SegmentedTrajectory seg = parse_episodes(tokens, theta_old.vocab);
            CHECK(seg.valid == jt.at("valid").get<bool>());

            std::vector<int> seq = task.question;
            seq.insert(seq.end(), tokens.begin(), tokens.end());
            const PolicyOutput states = forward(theta_old, seq);

            TrajectoryCredit tc;
            tc.token_count = static_cast<int>(tokens.size());
            tc.old_logprobs = jt.at("old_logprobs").get<std::vector<double>>();
            tc.episodes = seg.episodes;
            tc.valid = seg.valid;
            tc.r_out = jt.at("r_out").get<int>();
            tc.r_cf.assign(seg.episodes.size(), 0.0);

            // re-scored log-probs match the logged sampling records
            const auto rescored = rescore_logprobs(theta_old, task.question, tokens);
            for (size_t i = 0; i < rescored.size(); ++i) CHECK(std::abs(rescored[i] - tc.old_logprobs[i]) <= 1e-9);

            for (const auto& je : jt.at("episodes")) {
                const int index = je.at("index").get<int>();
                const EpisodeSpan& span = seg.episodes[static_cast<size_t>(index - 1)];
                const CfRewardBreakdown b =
                    cf_reward(theta_old, states, span, static_cast<int>(task.question.size()), cfg.perturbation,
                              cfg.hyper, je.at("operator_seed").get<std::uint64_t>());
                CHECK(std::abs(b.s_sta - je.at("s_sta").get<double>()) <= 1e-9);
                CHECK(std::abs(b.s_exp - je.at("s_exp").get<double>()) <= 1e-9);
                CHECK(std::abs(b.r_cf - je.at("r_cf").get<double>()) <= 1e-9);
                tc.r_cf[static_cast<size_t>(index - 1)] = je.at("r_cf_used").get<double>();
                ++replayed_episodes;
            }
            credits.push_back(std::move(tc));
        }
        // token advantages recompute from the logged pieces
        const CreditTable table = build_credit_table(credits, cfg.hyper);
        size_t c = 0;
        for (const auto& jt : rec.at("trajectories")) {
            const auto logged = jt.at("token_advantages").get<std::vector<double>>();
            REQUIRE(logged.size() == table.token_advantages[c].size());
            for (size_t t = 0; t < logged.size(); ++t) {
                CHECK(std::abs(logged[t] - table.token_advantages[c][t]) <= 1e-9);
                ++replayed_advantages;
            }
            ++c;
        }
    }
    CHECK(replayed_episodes > 0);
    CHECK(replayed_advantages > 0);
}

TEST_CASE("compare emits one row per method with the csv artifact") {
    RunConfig cfg = tiny_config();
    cfg.iterations = 1;
    cfg.warmup_steps = 40;
    const std::string out = tmp_dir("compare");
    const auto rows = compare(cfg, {Method::Grpo, Method::Gc2po}, {1, 2}, out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "grpo");
    CHECK(rows[1].method == "gc2po");
    CHECK(rows[0].seeds == 2);
    CHECK(fs::exists(out + "/compare.csv"));
    CHECK(fs::exists(out + "/grpo_seed1/metrics.csv"));
    CHECK(fs::exists(out + "/gc2po_seed2/metrics.csv"));
    const std::string csv = slurp(out + "/compare.csv");
    CHECK(csv.find("shifted_mean") != std::string::npos);
}

TEST_CASE("method names round-trip") {
    for (Method m : {Method::Grpo, Method::Gc2po, Method::Gc2poNoSexp, Method::Gc2poNoSsta, Method::Gc2poNoRcf}) {
        CHECK(method_from_name(method_name(m)) == m);
    }
}
