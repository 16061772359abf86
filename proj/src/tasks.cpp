#include "gc2po/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "gc2po/rng.hpp"

namespace gc2po {

namespace {

int apply_op(int value, const ArithmeticOp& op) {
    switch (op.op) {
        case '+': return value + op.operand;
        case '-': return value - op.operand;
        case '*': return value * op.operand;
        default: throw std::invalid_argument(std::string("unknown operator '") + op.op + "'");
    }
}

bool in_answer_range(int v) { return v >= 0 && v <= 99; }

std::vector<int> build_question(const Vocabulary& vocab, int start_value, const std::vector<ArithmeticOp>& ops,
                                const std::vector<int>& clause_order) {
    std::vector<int> q;
    q.push_back(vocab.start_id);
    q.push_back(vocab.number_id(start_value));
    for (int idx : clause_order) {
        q.push_back(vocab.sep_id);
        q.push_back(vocab.step_marker_id(idx + 1));
        q.push_back(vocab.op_id(ops[static_cast<size_t>(idx)].op));
        q.push_back(vocab.number_id(ops[static_cast<size_t>(idx)].operand));
    }
    return q;
}

std::vector<int> build_canonical(const Vocabulary& vocab, const ArithmeticTask& t) {
    std::vector<int> y;
    int prev = t.start_value;
    for (size_t l = 0; l < t.ops.size(); ++l) {
        y.push_back(vocab.open_tag_ids[l]);
        y.push_back(vocab.number_id(prev));
        y.push_back(vocab.op_id(t.ops[l].op));
        y.push_back(vocab.number_id(t.ops[l].operand));
        y.push_back(vocab.eq_id);
        y.push_back(vocab.number_id(t.intermediates[l]));
        y.push_back(vocab.close_tag_ids[l]);
        prev = t.intermediates[l];
    }
    y.push_back(vocab.ans_tag_id);
    y.push_back(vocab.number_id(t.answer));
    y.push_back(vocab.eos_id);
    return y;
}

ArithmeticTask generate_with_length(const Vocabulary& vocab, const TaskGenConfig& config, int chain_length, Rng& rng) {
    ArithmeticTask t;
    t.start_value = config.start_min + rng.below(config.start_max - config.start_min + 1);
    int value = t.start_value;
    const char kinds[] = {'+', '-', '*'};
    for (int l = 0; l < chain_length; ++l) {
        ArithmeticOp op;
        bool ok = false;
        for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
            op.op = kinds[rng.below(3)];
            op.operand = config.operand_min + rng.below(config.operand_max - config.operand_min + 1);
            ok = in_answer_range(apply_op(value, op));
        }
        if (!ok) throw std::runtime_error("could not keep chain inside [0,99]; operand range too tight");
        value = apply_op(value, op);
        t.ops.push_back(op);
        t.intermediates.push_back(value);
    }
    t.answer = value;

    std::vector<int> order(static_cast<size_t>(chain_length));
    std::iota(order.begin(), order.end(), 0);
    if (config.shuffle_clauses && chain_length >= 2) {
        // non-identity so permuted questions never collide with canonical ones
        std::vector<int> shuffled = order;
        do {
            for (int i = chain_length - 1; i > 0; --i) std::swap(shuffled[static_cast<size_t>(i)], shuffled[static_cast<size_t>(rng.below(i + 1))]);
        } while (shuffled == order);
        order = shuffled;
    }
    t.question = build_question(vocab, t.start_value, t.ops, order);
    t.canonical = build_canonical(vocab, t);
    return t;
}

}  // namespace

void TaskGenConfig::validate(const Vocabulary& vocab) const {
    if (chain_lengths.empty()) throw std::invalid_argument("chain_lengths must be nonempty");
    int markers = 0;
    while (vocab.contains("#" + std::to_string(markers + 1))) ++markers;
    for (int e : chain_lengths) {
        if (e < 1) throw std::invalid_argument("chain length must be at least 1");
        if (e > vocab.max_episodes) throw std::invalid_argument("chain length exceeds episode tag count");
        if (e > markers) throw std::invalid_argument("chain length exceeds step marker count");
    }
    if (operand_min < 0 || operand_max > 9 || operand_min > operand_max) {
        throw std::invalid_argument("operand range must be a nonempty subrange of [0, 9]");
    }
    if (start_min < 0 || start_max > 99 || start_min > start_max) {
        throw std::invalid_argument("start range must be a nonempty subrange of [0, 99]");
    }
}

ArithmeticTask generate_task(const Vocabulary& vocab, const TaskGenConfig& config, std::uint64_t seed) {
    config.validate(vocab);
    Rng rng(seed);
    const int e = config.chain_lengths[static_cast<size_t>(rng.below(static_cast<int>(config.chain_lengths.size())))];
    return generate_with_length(vocab, config, e, rng);
}

std::vector<ArithmeticTask> generate_tasks(const Vocabulary& vocab, const TaskGenConfig& config, int count,
                                           std::uint64_t seed) {
    std::vector<ArithmeticTask> tasks;
    tasks.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) tasks.push_back(generate_task(vocab, config, derive_seed(seed, static_cast<std::uint64_t>(i))));
    return tasks;
}

int verify(const SegmentedTrajectory& seg, const ArithmeticTask& task, const Vocabulary& vocab) {
    if (!seg.valid) return 0;
    const auto answer = seg.single_answer_token(vocab);
    if (!answer) return 0;
    return *answer == vocab.number_id(task.answer) ? 1 : 0;
}

double process_validity(const SegmentedTrajectory& seg, const ArithmeticTask& task, const Vocabulary& vocab) {
    if (!seg.valid || seg.episodes.empty()) return 0.0;
    int correct = 0;
    for (const EpisodeSpan& e : seg.episodes) {
        const int l = e.index;  // 1-based, sequential by construction
        if (l > static_cast<int>(task.intermediates.size())) continue;  // episode beyond the true chain
        if (e.empty()) continue;
        int declared = -1;
        for (int t = e.start; t < e.end; ++t) {
            if (seg.tokens[static_cast<size_t>(t)] == vocab.eq_id) {
                declared = seg.tokens[static_cast<size_t>(t) + 1];
                break;
            }
        }
        if (declared >= 0 && declared == vocab.number_id(task.intermediates[static_cast<size_t>(l - 1)])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(seg.episodes.size());
}

std::string traj_group_name(TrajGroup g) {
    switch (g) {
        case TrajGroup::NearIdeal: return "near-ideal";
        case TrajGroup::NearMiss: return "near-miss";
        case TrajGroup::LuckyGuess: return "lucky-guess";
        case TrajGroup::FullyBad: return "fully-bad";
    }
    return "?";
}

TrajGroup classify_group(int f, double p) {
    if (p >= 0.9) return f == 1 ? TrajGroup::NearIdeal : TrajGroup::NearMiss;
    if (p <= 0.3) return f == 1 ? TrajGroup::LuckyGuess : TrajGroup::FullyBad;
    throw std::invalid_argument("process validity " + std::to_string(p) + " falls between the group bands");
}

namespace {

LabeledTrajectory plant_cell(ArithmeticTask task, int cell, const Vocabulary& vocab, Rng& rng);

}  // namespace

std::vector<LabeledTrajectory> synthesize_groups(const Vocabulary& vocab, const TaskGenConfig& config,
                                                 int count_per_group, std::uint64_t seed) {
    if (count_per_group < 1) throw std::invalid_argument("count per group must be at least 1");
    config.validate(vocab);

    std::vector<LabeledTrajectory> out;
    out.reserve(static_cast<size_t>(count_per_group) * 4);
    for (int i = 0; i < count_per_group; ++i) {
        // one chain length per index, shared by all four cells, so p is
        // identically distributed across f = 0 and f = 1
        const int e = config.chain_lengths[static_cast<size_t>(i) % config.chain_lengths.size()];
        for (int cell = 0; cell < 4; ++cell) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(cell)));
            ArithmeticTask task = generate_with_length(vocab, config, e, rng);
            out.push_back(plant_cell(std::move(task), cell, vocab, rng));
        }
    }
    return out;
}

std::vector<LabeledTrajectory> synthesize_groups_over(const std::vector<ArithmeticTask>& base, const Vocabulary& vocab,
                                                      int count_per_group, std::uint64_t seed) {
    if (count_per_group < 1) throw std::invalid_argument("count per group must be at least 1");
    if (base.empty()) throw std::invalid_argument("base task list is empty");
    std::vector<LabeledTrajectory> out;
    out.reserve(static_cast<size_t>(count_per_group) * 4);
    for (int i = 0; i < count_per_group; ++i) {
        const ArithmeticTask& task = base[static_cast<size_t>(i) % base.size()];
        for (int cell = 0; cell < 4; ++cell) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(cell)));
            out.push_back(plant_cell(task, cell, vocab, rng));
        }
    }
    return out;
}

namespace {

LabeledTrajectory plant_cell(ArithmeticTask task, int cell, const Vocabulary& vocab, Rng& rng) {
    const int e = static_cast<int>(task.ops.size());
    std::vector<int> tokens = task.canonical;

    const bool corrupt_process = cell == 2 || cell == 3;  // lucky-guess, fully-bad
    const bool corrupt_answer = cell == 1 || cell == 3;   // near-miss, fully-bad
    if (corrupt_process) {
        // corrupt every declared result; with e >= 4 keep the first
        // episode intact for some spread in p (1/e <= 0.25)
        const int keep_first = e >= 4 ? 1 : 0;
        int pos = 0;
        for (int l = 0; l < e; ++l) {
            // episode layout: <el> prev op operand = result </el>
            const int result_pos = pos + 5;
            if (l >= keep_first) {
                const int truth = task.intermediates[static_cast<size_t>(l)];
                const int wrong = (truth + 1 + rng.below(99)) % 100;
                tokens[static_cast<size_t>(result_pos)] = vocab.number_id(wrong);
            }
            pos += 7;
        }
    }
    if (corrupt_answer) {
        const int wrong = (task.answer + 1 + rng.below(99)) % 100;
        tokens[tokens.size() - 2] = vocab.number_id(wrong);
    }

    LabeledTrajectory lt;
    lt.task = std::move(task);
    lt.seg = parse_episodes(tokens, vocab);
    lt.f = verify(lt.seg, lt.task, vocab);
    lt.p = process_validity(lt.seg, lt.task, vocab);
    lt.group = classify_group(lt.f, lt.p);
    return lt;
}

}  // namespace

ShiftedEvalSets shift_eval_set(const Vocabulary& vocab, const TaskGenConfig& base, int count_per_slice,
                               std::uint64_t seed) {
    base.validate(vocab);
    ShiftedEvalSets sets;

    const int e_max = *std::max_element(base.chain_lengths.begin(), base.chain_lengths.end());
    TaskGenConfig longer = base;
    longer.chain_lengths = {e_max + 1, e_max + 2};
    sets.longer = generate_tasks(vocab, longer, count_per_slice, derive_seed(seed, 1));

    TaskGenConfig range = base;
    if (base.operand_max < 9) {
        range.operand_min = base.operand_max + 1;
        range.operand_max = 9;
    } else if (base.operand_min > 0) {
        range.operand_min = 0;
        range.operand_max = base.operand_min - 1;
    } else {
        throw std::invalid_argument("operand range covers [0,9]; no unseen subrange for the shifted slice");
    }
    sets.range = generate_tasks(vocab, range, count_per_slice, derive_seed(seed, 2));

    TaskGenConfig permuted = base;
    permuted.shuffle_clauses = true;
    permuted.chain_lengths.clear();
    for (int e : base.chain_lengths) {
        if (e >= 2) permuted.chain_lengths.push_back(e);
    }
    if (permuted.chain_lengths.empty()) throw std::invalid_argument("permuted slice needs chain lengths >= 2");
    sets.permuted = generate_tasks(vocab, permuted, count_per_slice, derive_seed(seed, 3));

    return sets;
}

double random_answer_baseline(const std::vector<ArithmeticTask>& tasks, const Vocabulary& vocab, std::uint64_t seed) {
    if (tasks.empty()) throw std::invalid_argument("baseline over empty task set");
    Rng rng(seed);
    int hits = 0;
    for (const auto& t : tasks) {
        const int guess = vocab.answer_ids[static_cast<size_t>(rng.below(static_cast<int>(vocab.answer_ids.size())))];
        if (guess == vocab.number_id(t.answer)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(tasks.size());
}

void save_tasks_jsonl(const std::vector<ArithmeticTask>& tasks, const Vocabulary& vocab, const std::string& path,
                      const std::string& config_fingerprint) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open task file for writing: " + path);
    nlohmann::json meta = {{"type", "task_set"}, {"config_fingerprint", config_fingerprint},
                           {"count", tasks.size()}};
    os << meta.dump() << "\n";
    for (const auto& t : tasks) {
        nlohmann::json ops = nlohmann::json::array();
        for (const auto& op : t.ops) ops.push_back({std::string(1, op.op), op.operand});
        nlohmann::json j = {{"start", t.start_value},
                            {"ops", ops},
                            {"answer", t.answer},
                            {"question", t.question},
                            {"text", vocab.render(t.question)}};
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("task file write failed: " + path);
}

std::vector<ArithmeticTask> load_tasks_jsonl(const Vocabulary& vocab, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open task file: " + path);
    std::vector<ArithmeticTask> tasks;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (first) {
            first = false;
            if (j.value("type", "") == "task_set") continue;
        }
        ArithmeticTask t;
        t.start_value = j.at("start").get<int>();
        int value = t.start_value;
        for (const auto& jop : j.at("ops")) {
            ArithmeticOp op;
            op.op = jop.at(0).get<std::string>().at(0);
            op.operand = jop.at(1).get<int>();
            value = apply_op(value, op);
            t.ops.push_back(op);
            t.intermediates.push_back(value);
        }
        t.answer = j.at("answer").get<int>();
        if (t.answer != value) throw std::runtime_error("task file answer disagrees with its operations: " + path);
        t.question = j.at("question").get<std::vector<int>>();
        t.canonical = build_canonical(vocab, t);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

}  // namespace gc2po
