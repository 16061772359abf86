#ifndef GC2PO_TASKS_HPP
#define GC2PO_TASKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gc2po/segmentation.hpp"
#include "gc2po/vocab.hpp"

namespace gc2po {

struct ArithmeticOp {
    char op = '+';   // '+', '-', '*'
    int operand = 1; // single digit
};

/// One chain question: start value, E operations, all intermediates kept in
/// [0, 99] by construction. The canonical solution is one operation per
/// episode followed by the answer.
struct ArithmeticTask {
    int start_value = 0;
    std::vector<ArithmeticOp> ops;
    std::vector<int> intermediates;  // value after each op; back() is the answer
    int answer = 0;
    std::vector<int> question;   // question tokens
    std::vector<int> canonical;  // canonical solution tokens (generated side, ends with <eos>)
};

struct TaskGenConfig {
    std::vector<int> chain_lengths = {2, 3, 4};
    int operand_min = 1;
    int operand_max = 7;
    int start_min = 2;
    int start_max = 49;
    bool shuffle_clauses = false;  // permuted-phrasing variant; step markers keep semantics

    void validate(const Vocabulary& vocab) const;
};

ArithmeticTask generate_task(const Vocabulary& vocab, const TaskGenConfig& config, std::uint64_t seed);
std::vector<ArithmeticTask> generate_tasks(const Vocabulary& vocab, const TaskGenConfig& config, int count,
                                           std::uint64_t seed);

/// R_out: structural validity (per the segmentation grammar) AND the parsed
/// answer equals the ground truth. Formatting is part of the verifier.
int verify(const SegmentedTrajectory& seg, const ArithmeticTask& task, const Vocabulary& vocab);

/// Fraction of episodes whose declared "= value" matches the ground-truth
/// prefix evaluation; 0 for structurally invalid trajectories.
double process_validity(const SegmentedTrajectory& seg, const ArithmeticTask& task, const Vocabulary& vocab);

enum class TrajGroup { NearIdeal, NearMiss, LuckyGuess, FullyBad };

std::string traj_group_name(TrajGroup g);

/// Classify from (final correctness, process validity); the construction keeps
/// every item inside one of the four cells.
TrajGroup classify_group(int f, double p);

struct LabeledTrajectory {
    ArithmeticTask task;
    SegmentedTrajectory seg;
    int f = 0;       // final correctness
    double p = 0.0;  // process validity
    TrajGroup group = TrajGroup::FullyBad;
};

/// Balanced four-group synthesizer. For each index one task per cell shares
/// the same chain length, so process validity is identically distributed
/// across the two correctness classes and cor(R_out, p) is exactly zero by
/// design.
std::vector<LabeledTrajectory> synthesize_groups(const Vocabulary& vocab, const TaskGenConfig& config,
                                                 int count_per_group, std::uint64_t seed);

/// Same planting over a fixed question list (all four cells of an index share
/// one task). Used to analyze a probe on the questions it was fit to: the
/// planted solutions are new even when the questions are not.
std::vector<LabeledTrajectory> synthesize_groups_over(const std::vector<ArithmeticTask>& base, const Vocabulary& vocab,
                                                      int count_per_group, std::uint64_t seed);

struct ShiftedEvalSets {
    std::vector<ArithmeticTask> longer;     // chain lengths {max+1, max+2}
    std::vector<ArithmeticTask> range;      // unseen operand subrange
    std::vector<ArithmeticTask> permuted;   // clause order shuffled, semantics preserved
};

ShiftedEvalSets shift_eval_set(const Vocabulary& vocab, const TaskGenConfig& base, int count_per_slice,
                               std::uint64_t seed);

/// Uniform draw over the answer space per task; the ~1% floor that trained
/// policies must clear.
double random_answer_baseline(const std::vector<ArithmeticTask>& tasks, const Vocabulary& vocab, std::uint64_t seed);

void save_tasks_jsonl(const std::vector<ArithmeticTask>& tasks, const Vocabulary& vocab, const std::string& path,
                      const std::string& config_fingerprint);
std::vector<ArithmeticTask> load_tasks_jsonl(const Vocabulary& vocab, const std::string& path);

}  // namespace gc2po

#endif
