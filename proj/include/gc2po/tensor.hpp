#ifndef GC2PO_TENSOR_HPP
#define GC2PO_TENSOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gc2po {

/// Dense row-major tensor of 64-bit reals. Immutable by convention once built:
/// everything downstream (tapes, policies, rewards) treats values as read-only.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::vector<int> shape_in, std::vector<double> values_in);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double fill);
    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(int rows, int cols, std::vector<double> v);

    std::int64_t size() const;
    bool is_scalar() const { return size() == 1; }
    int rows() const;
    int cols() const;

    double& at(int i);
    double at(int i) const;
    double& at(int r, int c);
    double at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

/// Low-level numeric cores shared by the tape ops and the plain (no-gradient)
/// policy path. Keeping a single source for each loop makes the fast sampling
/// path agree with the recorded forward bit-for-bit.
namespace kernels {

// c[m x n] = a[m x k] * b[k x n], accumulation over k in index order.
void matmul(const double* a, int m, int k, const double* b, int n, double* c);

// Max-subtracted softmax of one row.
void softmax_row(const double* x, int n, double* y);

// log softmax of one row (max-subtracted log-sum-exp).
void log_softmax_row(const double* x, int n, double* y);

double dot(const double* a, const double* b, int n);
double squared_norm(const double* a, int n);

}  // namespace kernels

/// Reverse-mode tape over whole-tensor primitives. Nodes are appended in
/// topological order (an op can only reference earlier ids); backward() walks
/// the record in reverse. One tape per computation, single writer.
class Tape {
  public:
    using NodeId = int;

    enum class Elem { Add, Sub, Mul, Div, Exp, Log, Neg };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    NodeId leaf(Tensor value, bool requires_grad = false);
    NodeId scalar_leaf(double v) { return leaf(Tensor::scalar(v)); }

    /// Elementwise arithmetic; shapes must match or one side must be a
    /// one-element tensor (scalar broadcast). Exp/Log/Neg are unary.
    NodeId elementwise(Elem op, NodeId a, NodeId b);
    NodeId elementwise(Elem op, NodeId a);
    NodeId elementwise(Elem op, NodeId a, double scalar);

    NodeId add(NodeId a, NodeId b) { return elementwise(Elem::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return elementwise(Elem::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return elementwise(Elem::Mul, a, b); }
    NodeId div(NodeId a, NodeId b) { return elementwise(Elem::Div, a, b); }
    NodeId add(NodeId a, double s) { return elementwise(Elem::Add, a, s); }
    NodeId sub(NodeId a, double s) { return elementwise(Elem::Sub, a, s); }
    NodeId mul(NodeId a, double s) { return elementwise(Elem::Mul, a, s); }
    NodeId exp(NodeId a) { return elementwise(Elem::Exp, a); }
    NodeId log(NodeId a) { return elementwise(Elem::Log, a); }
    NodeId neg(NodeId a) { return elementwise(Elem::Neg, a); }

    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);

    /// Max-subtracted softmax along `axis` (1 = rows for matrices; a 1-D
    /// tensor is treated as a single row with axis 0 or 1 accepted).
    NodeId softmax(NodeId logits, int axis = 1);
    NodeId log_softmax_rows(NodeId logits);

    /// Gather rows of a matrix (embedding lookup). Gradient scatters back.
    NodeId rows(NodeId matrix, std::vector<int> row_idx);
    /// Gather individual (row, col) entries into a vector.
    NodeId pick(NodeId matrix, std::vector<std::pair<int, int>> entries);

    NodeId relu(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId minimum(NodeId a, NodeId b);

    NodeId sum(NodeId a);
    NodeId mean(NodeId a);

    const Tensor& value(NodeId id) const;
    /// Gradient of the last backward() root w.r.t. node `id`; zeros if the
    /// node does not influence the root.
    Tensor grad(NodeId id) const;

    /// Reverse-mode accumulation from a scalar root. Closes the tape.
    void backward(NodeId root);

    bool closed() const { return closed_; }
    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    enum class Op {
        Leaf,
        Add,
        Sub,
        Mul,
        Div,
        Exp,
        Log,
        Neg,
        MatMul,
        Transpose,
        Softmax,
        LogSoftmax,
        Rows,
        Pick,
        Relu,
        Clamp,
        Minimum,
        Sum,
    };

    struct Node {
        Op op = Op::Leaf;
        Tensor value;
        std::optional<Tensor> grad;
        NodeId a = -1;
        NodeId b = -1;
        bool requires_grad = false;  // leaves only
        bool needs_grad = false;     // reaches a requires_grad leaf
        // op payloads
        std::vector<int> idx;                       // Rows
        std::vector<std::pair<int, int>> entries;   // Pick
        double lo = 0.0, hi = 0.0;                  // Clamp
        std::optional<Tensor> aux;                  // Softmax/LogSoftmax: probabilities
        int axis = 1;                               // Softmax
    };

    NodeId push(Node n);
    Tensor& grad_slot(NodeId id);
    void check_open(const char* what) const;
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
    bool closed_ = false;
};

}  // namespace gc2po

#endif
