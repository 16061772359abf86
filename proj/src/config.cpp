#include <fstream>
#include <set>
#include <stdexcept>

#include "gc2po/harness.hpp"

namespace gc2po {

std::string method_name(Method m) {
    switch (m) {
        case Method::Grpo: return "grpo";
        case Method::Gc2po: return "gc2po";
        case Method::Gc2poNoSexp: return "gc2po-no-sexp";
        case Method::Gc2poNoSsta: return "gc2po-no-ssta";
        case Method::Gc2poNoRcf: return "gc2po-no-rcf";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "grpo") return Method::Grpo;
    if (name == "gc2po") return Method::Gc2po;
    if (name == "gc2po-no-sexp") return Method::Gc2poNoSexp;
    if (name == "gc2po-no-ssta") return Method::Gc2poNoSsta;
    if (name == "gc2po-no-rcf") return Method::Gc2poNoRcf;
    throw std::invalid_argument("unknown method \"" + name + "\" (grpo, gc2po, gc2po-no-sexp, gc2po-no-ssta, gc2po-no-rcf)");
}

void HyperParams::validate() const {
    if (group_size < 2) throw std::invalid_argument("group size K must be at least 2");
    if (perturb_count < 1) throw std::invalid_argument("perturbation count M must be at least 1");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("clip_eps must be in (0, 1)");
    if (kl_beta < 0.0) throw std::invalid_argument("kl_beta must be nonnegative");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!(eps_u > 0.0)) throw std::invalid_argument("eps_u must be positive");
    if (lambda_exp < 0.0 || lambda_cf < 0.0) throw std::invalid_argument("lambda weights must be nonnegative");
    if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) throw std::invalid_argument("trim_fraction must be in [0, 0.5)");
    if (eps_std < 0.0 || eps_r < 0.0) throw std::invalid_argument("variance/rescale guards must be nonnegative");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be nonnegative");
    if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
    if (max_len < 1) throw std::invalid_argument("max_len must be positive");
}

void RunConfig::validate() const {
    hyper.validate();
    perturbation.validate();
    if (iterations < 0) throw std::invalid_argument("iterations must be nonnegative");
    if (train_questions < 1) throw std::invalid_argument("train_questions must be positive");
    if (eval_per_slice < 1) throw std::invalid_argument("eval_per_slice must be positive");
    if (warmup_steps < 0 || warmup_batch < 1) throw std::invalid_argument("invalid warmup settings");
    if (warmup_lr < 0.0 || probe_weight < 0.0 || probe_jitter < 0.0 || probe_corrupt_weight < 0.0) {
        throw std::invalid_argument("warmup rates must be nonnegative");
    }
    if (policy_dim < 2 || policy_mlp_dim < 1 || policy_max_positions < 8) {
        throw std::invalid_argument("invalid policy dimensions");
    }
    if (eval_every < 1) throw std::invalid_argument("eval_every must be positive");
    if (inner_epochs < 1) throw std::invalid_argument("inner_epochs must be positive");
    if (checkpoint_every < 0 || traj_log_every < 1) throw std::invalid_argument("invalid logging cadence");
    if (threads < 0) throw std::invalid_argument("threads must be nonnegative");
    if (seeds.empty()) throw std::invalid_argument("seed list must be nonempty");
}

namespace {

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::invalid_argument("unknown config key \"" + it.key() + "\" in " + where);
        }
    }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& into) {
    if (obj.contains(key)) into = obj.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc) {
    RunConfig cfg;
    reject_unknown(doc, {"method", "seeds", "iterations", "warmup", "policy", "hyper", "tasks", "perturbation", "run"},
                   "config root");

    if (doc.contains("method")) cfg.method = method_from_name(doc.at("method").get<std::string>());
    read(doc, "seeds", cfg.seeds);
    read(doc, "iterations", cfg.iterations);

    if (doc.contains("hyper")) {
        const auto& h = doc.at("hyper");
        reject_unknown(h, {"group_size", "perturb_count", "clip_eps", "kl_beta", "tau", "eps_u", "lambda_exp",
                           "lambda_cf", "trim_fraction", "eps_std", "eps_r", "learning_rate", "weight_decay",
                           "batch_size", "temperature", "max_len"},
                       "hyper");
        read(h, "group_size", cfg.hyper.group_size);
        read(h, "perturb_count", cfg.hyper.perturb_count);
        read(h, "clip_eps", cfg.hyper.clip_eps);
        read(h, "kl_beta", cfg.hyper.kl_beta);
        read(h, "tau", cfg.hyper.tau);
        read(h, "eps_u", cfg.hyper.eps_u);
        read(h, "lambda_exp", cfg.hyper.lambda_exp);
        read(h, "lambda_cf", cfg.hyper.lambda_cf);
        read(h, "trim_fraction", cfg.hyper.trim_fraction);
        read(h, "eps_std", cfg.hyper.eps_std);
        read(h, "eps_r", cfg.hyper.eps_r);
        read(h, "learning_rate", cfg.hyper.learning_rate);
        read(h, "weight_decay", cfg.hyper.weight_decay);
        read(h, "batch_size", cfg.hyper.batch_size);
        read(h, "temperature", cfg.hyper.temperature);
        read(h, "max_len", cfg.hyper.max_len);
    }

    if (doc.contains("tasks")) {
        const auto& t = doc.at("tasks");
        reject_unknown(t, {"chain_lengths", "operand_min", "operand_max", "start_min", "start_max",
                           "train_questions", "eval_per_slice"},
                       "tasks");
        read(t, "chain_lengths", cfg.tasks.chain_lengths);
        read(t, "operand_min", cfg.tasks.operand_min);
        read(t, "operand_max", cfg.tasks.operand_max);
        read(t, "start_min", cfg.tasks.start_min);
        read(t, "start_max", cfg.tasks.start_max);
        read(t, "train_questions", cfg.train_questions);
        read(t, "eval_per_slice", cfg.eval_per_slice);
    }

    if (doc.contains("perturbation")) {
        const auto& p = doc.at("perturbation");
        reject_unknown(p, {"kind", "sigma", "keep_prob", "alpha_min"}, "perturbation");
        if (p.contains("kind")) cfg.perturbation.kind = perturb_kind_from_name(p.at("kind").get<std::string>());
        read(p, "sigma", cfg.perturbation.sigma);
        read(p, "keep_prob", cfg.perturbation.keep_prob);
        read(p, "alpha_min", cfg.perturbation.alpha_min);
    }

    if (doc.contains("warmup")) {
        const auto& w = doc.at("warmup");
        reject_unknown(w, {"steps", "lr", "batch", "probe_weight", "probe_jitter", "probe_corrupt_weight"}, "warmup");
        read(w, "steps", cfg.warmup_steps);
        read(w, "lr", cfg.warmup_lr);
        read(w, "batch", cfg.warmup_batch);
        read(w, "probe_weight", cfg.probe_weight);
        read(w, "probe_jitter", cfg.probe_jitter);
        read(w, "probe_corrupt_weight", cfg.probe_corrupt_weight);
    }

    if (doc.contains("policy")) {
        const auto& p = doc.at("policy");
        reject_unknown(p, {"dim", "mlp_dim", "max_positions"}, "policy");
        read(p, "dim", cfg.policy_dim);
        read(p, "mlp_dim", cfg.policy_mlp_dim);
        read(p, "max_positions", cfg.policy_max_positions);
    }

    if (doc.contains("run")) {
        const auto& r = doc.at("run");
        reject_unknown(r, {"eval_every", "inner_epochs", "checkpoint_every", "traj_log_every", "threads", "log_wall_clock"}, "run");
        read(r, "eval_every", cfg.eval_every);
        read(r, "inner_epochs", cfg.inner_epochs);
        read(r, "checkpoint_every", cfg.checkpoint_every);
        read(r, "traj_log_every", cfg.traj_log_every);
        read(r, "threads", cfg.threads);
        read(r, "log_wall_clock", cfg.log_wall_clock);
    }

    // M lives in hyper; the perturbation section only describes the family.
    cfg.perturbation.count = cfg.hyper.perturb_count;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return parse_run_config(doc);
}

nlohmann::json resolved_config(const RunConfig& cfg, std::uint64_t active_seed) {
    nlohmann::json doc;
    doc["method"] = method_name(cfg.method);
    doc["seed"] = active_seed;
    doc["seeds"] = cfg.seeds;
    doc["iterations"] = cfg.iterations;
    doc["hyper"] = {{"group_size", cfg.hyper.group_size},
                    {"perturb_count", cfg.hyper.perturb_count},
                    {"clip_eps", cfg.hyper.clip_eps},
                    {"kl_beta", cfg.hyper.kl_beta},
                    {"tau", cfg.hyper.tau},
                    {"eps_u", cfg.hyper.eps_u},
                    {"lambda_exp", cfg.hyper.lambda_exp},
                    {"lambda_cf", cfg.hyper.lambda_cf},
                    {"trim_fraction", cfg.hyper.trim_fraction},
                    {"eps_std", cfg.hyper.eps_std},
                    {"eps_r", cfg.hyper.eps_r},
                    {"learning_rate", cfg.hyper.learning_rate},
                    {"weight_decay", cfg.hyper.weight_decay},
                    {"batch_size", cfg.hyper.batch_size},
                    {"temperature", cfg.hyper.temperature},
                    {"max_len", cfg.hyper.max_len}};
    doc["tasks"] = {{"chain_lengths", cfg.tasks.chain_lengths}, {"operand_min", cfg.tasks.operand_min},
                    {"operand_max", cfg.tasks.operand_max},     {"start_min", cfg.tasks.start_min},
                    {"start_max", cfg.tasks.start_max},         {"train_questions", cfg.train_questions},
                    {"eval_per_slice", cfg.eval_per_slice}};
    doc["perturbation"] = {{"kind", perturb_kind_name(cfg.perturbation.kind)},
                           {"sigma", cfg.perturbation.sigma},
                           {"keep_prob", cfg.perturbation.keep_prob},
                           {"alpha_min", cfg.perturbation.alpha_min}};
    doc["warmup"] = {{"steps", cfg.warmup_steps},
                     {"lr", cfg.warmup_lr},
                     {"batch", cfg.warmup_batch},
                     {"probe_weight", cfg.probe_weight},
                     {"probe_jitter", cfg.probe_jitter},
                     {"probe_corrupt_weight", cfg.probe_corrupt_weight}};
    doc["policy"] = {{"dim", cfg.policy_dim}, {"mlp_dim", cfg.policy_mlp_dim},
                     {"max_positions", cfg.policy_max_positions}};
    doc["run"] = {{"eval_every", cfg.eval_every},
                  {"inner_epochs", cfg.inner_epochs},
                  {"checkpoint_every", cfg.checkpoint_every},
                  {"traj_log_every", cfg.traj_log_every},
                  {"threads", cfg.threads},
                  {"log_wall_clock", cfg.log_wall_clock}};

    // Completeness gate: the resolved document must round-trip through the
    // strict parser, i.e. contain exactly the knobs train() can consume.
    nlohmann::json check = doc;
    check.erase("seed");
    parse_run_config(check);
    return doc;
}

std::string default_out_root() {
    if (const char* env = std::getenv("GC2PO_OUT_ROOT"); env && *env) return env;
    return "runs";
}

}  // namespace gc2po
