#ifndef GC2PO_POLICY_HPP
#define GC2PO_POLICY_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gc2po/tensor.hpp"
#include "gc2po/vocab.hpp"

namespace gc2po {

/// Small autoregressive token policy: token + position embeddings, one causal
/// single-head attention block and a two-layer ReLU MLP (both residual), then
/// a next-token head and a separate answer head reading episode states.
/// Heads start at zero so the initial policy is exactly uniform.
struct PolicyParams {
    Vocabulary vocab;
    int dim = 32;
    int mlp_dim = 64;
    int max_positions = 96;

    Tensor embedding;      // |V| x d
    Tensor pos_embedding;  // max_positions x d
    Tensor wq, wk, wv, wo; // d x d
    Tensor w1;             // d x mlp_dim
    Tensor w2;             // mlp_dim x d
    Tensor out_head;       // d x |V|
    Tensor answer_head;    // d x |A|

    static PolicyParams init(Vocabulary vocab, int dim, int mlp_dim, int max_positions, std::uint64_t seed);

    std::int64_t param_count() const;
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

    /// Fixed-order (name, tensor) view used by the optimizer, checkpoints and
    /// gradient flattening.
    std::vector<std::pair<std::string, Tensor*>> tensors();
    std::vector<std::pair<std::string, const Tensor*>> tensors() const;
};

struct PolicyOutput {
    /// Row t: log-probabilities of the token following position t.
    Tensor logprobs;  // T x |V|
    /// Row t: post-residual hidden state at position t (episode representations
    /// are read from here).
    Tensor hidden;    // T x d
};

/// One sampled candidate. `generated` includes the end-of-sequence token when
/// one was produced; `old_logprobs` are the sampling-snapshot log-probs.
struct Trajectory {
    std::vector<int> question;
    std::vector<int> generated;
    std::vector<double> old_logprobs;
    bool truncated = false;
    std::optional<int> answer_id;  // filled after segmentation
    int r_out = 0;                 // filled by the verifier
};

/// Causal forward pass over the full sequence (no gradients).
PolicyOutput forward(const PolicyParams& params, std::span<const int> tokens);

/// Autoregressive sampling from the question prefix. temperature == 0 selects
/// argmax decoding (greedy, seed-independent). Recorded log-probs are the
/// untempered policy log-probs of the sampled tokens, bit-identical to what
/// forward() reports at those positions.
Trajectory sample_trajectory(const PolicyParams& params, std::span<const int> question, double temperature,
                             int max_len, std::uint64_t seed);

/// Sampling plus the decoder's per-position outputs (rows cover the question
/// and every fed token; the trailing <eos> is never fed, so a valid
/// trajectory's episode spans are always covered). Saves the extra forward
/// pass the reward computation would otherwise need.
struct SampledRollout {
    Trajectory traj;
    PolicyOutput states;
};

SampledRollout sample_trajectory_states(const PolicyParams& params, std::span<const int> question, double temperature,
                                        int max_len, std::uint64_t seed);

/// Hidden-state vector at the final position of a [start, end] token span
/// (positions index rows of `out.hidden`).
Tensor episode_representation(const PolicyOutput& out, int span_start, int span_end);

/// q(. | u): softmax of the answer head applied to u.
Tensor answer_distribution(const PolicyParams& params, const Tensor& u);
Tensor answer_logits(const PolicyParams& params, const Tensor& u);

/// Parameter leaves of one policy on a tape, shared across the trajectories
/// recorded on that tape so gradients accumulate.
struct PolicyLeaves {
    Tape::NodeId embedding, pos_embedding, wq, wk, wv, wo, w1, w2, out_head, answer_head;
};

PolicyLeaves make_policy_leaves(Tape& tape, const PolicyParams& params);

struct TapeForward {
    Tape::NodeId logprob_rows;  // T x |V|
    Tape::NodeId hidden;        // T x d
};

/// Differentiable forward pass, numerically identical to forward().
TapeForward tape_forward(Tape& tape, const PolicyParams& params, const PolicyLeaves& leaves,
                         std::span<const int> tokens);

/// Collect parameter gradients from a backpropagated tape, in flatten() order.
std::vector<double> collect_gradient(const Tape& tape, const PolicyLeaves& leaves, const PolicyParams& params);

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace gc2po

#endif
