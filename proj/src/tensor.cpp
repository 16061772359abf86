#include "gc2po/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gc2po {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
    if (shape_product(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("tensor shape " + shape_str() + " does not match value count " +
                                    std::to_string(values.size()));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::int64_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double fill) {
    std::int64_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), fill));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> v) { return Tensor({rows, cols}, std::move(v)); }

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(values.size()); }

int Tensor::rows() const {
    if (shape.size() != 2) throw std::invalid_argument("rows() on non-matrix tensor " + shape_str());
    return shape[0];
}

int Tensor::cols() const {
    if (shape.size() != 2) throw std::invalid_argument("cols() on non-matrix tensor " + shape_str());
    return shape[1];
}

double& Tensor::at(int i) { return values[static_cast<size_t>(i)]; }
double Tensor::at(int i) const { return values[static_cast<size_t>(i)]; }
double& Tensor::at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
double Tensor::at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

bool Tensor::all_finite() const {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

namespace kernels {

void matmul(const double* a, int m, int k, const double* b, int n, double* c) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_row(const double* x, int n, double* y) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
}

void log_softmax_row(const double* x, int n, double* y) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(x[i] - mx);
    const double lse = mx + std::log(sum);
    for (int i = 0; i < n; ++i) y[i] = x[i] - lse;
}

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(const double* a, int n) { return dot(a, a, n); }

}  // namespace kernels

// ---------------------------------------------------------------- Tape

void Tape::check_open(const char* what) const {
    if (closed_) throw std::logic_error(std::string("tape is closed (backward already ran); cannot record ") + what);
}

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("tape node id " + std::to_string(id) + " out of range");
    return nodes_[static_cast<size_t>(id)];
}

Tape::NodeId Tape::push(Node n) {
    n.needs_grad = n.requires_grad;
    if (n.a >= 0) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(n.a)].needs_grad;
    if (n.b >= 0) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(n.b)].needs_grad;
    nodes_.push_back(std::move(n));
    return size() - 1;
}

Tape::NodeId Tape::leaf(Tensor value, bool requires_grad) {
    check_open("leaf");
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Tape::NodeId Tape::elementwise(Elem op, NodeId a, NodeId b) {
    check_open("elementwise");
    if (op == Elem::Exp || op == Elem::Log || op == Elem::Neg) {
        throw std::invalid_argument("unary elementwise op takes a single operand");
    }
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    const bool a_scalar = ta.is_scalar();
    const bool b_scalar = tb.is_scalar();
    if (!a_scalar && !b_scalar && !ta.same_shape(tb)) {
        throw std::invalid_argument("elementwise shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    }
    const Tensor& big = b_scalar ? ta : tb;
    Tensor out = Tensor::zeros(big.shape);
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = a_scalar ? ta.values[0] : ta.values[static_cast<size_t>(i)];
        const double y = b_scalar ? tb.values[0] : tb.values[static_cast<size_t>(i)];
        double r = 0.0;
        switch (op) {
            case Elem::Add: r = x + y; break;
            case Elem::Sub: r = x - y; break;
            case Elem::Mul: r = x * y; break;
            case Elem::Div:
                if (y == 0.0) throw std::domain_error("elementwise divide by zero");
                r = x / y;
                break;
            default: break;
        }
        out.values[static_cast<size_t>(i)] = r;
    }
    Node n2;
    switch (op) {
        case Elem::Add: n2.op = Op::Add; break;
        case Elem::Sub: n2.op = Op::Sub; break;
        case Elem::Mul: n2.op = Op::Mul; break;
        case Elem::Div: n2.op = Op::Div; break;
        default: break;
    }
    n2.value = std::move(out);
    n2.a = a;
    n2.b = b;
    return push(std::move(n2));
}

Tape::NodeId Tape::elementwise(Elem op, NodeId a) {
    check_open("elementwise");
    const Tensor& ta = node(a).value;
    Tensor out = Tensor::zeros(ta.shape);
    const std::int64_t n = ta.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = ta.values[static_cast<size_t>(i)];
        double r = 0.0;
        switch (op) {
            case Elem::Exp: r = std::exp(x); break;
            case Elem::Log:
                if (x <= 0.0) throw std::domain_error("log of non-positive value " + std::to_string(x));
                r = std::log(x);
                break;
            case Elem::Neg: r = -x; break;
            default: throw std::invalid_argument("binary elementwise op needs two operands");
        }
        out.values[static_cast<size_t>(i)] = r;
    }
    Node n2;
    switch (op) {
        case Elem::Exp: n2.op = Op::Exp; break;
        case Elem::Log: n2.op = Op::Log; break;
        case Elem::Neg: n2.op = Op::Neg; break;
        default: break;
    }
    n2.value = std::move(out);
    n2.a = a;
    return push(std::move(n2));
}

Tape::NodeId Tape::elementwise(Elem op, NodeId a, double scalar) {
    return elementwise(op, a, leaf(Tensor::scalar(scalar)));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    check_open("matmul");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows()) {
        throw std::invalid_argument("matmul dimension mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
    kernels::matmul(ta.values.data(), ta.rows(), ta.cols(), tb.values.data(), tb.cols(), out.values.data());
    Node n;
    n.op = Op::MatMul;
    n.value = std::move(out);
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

Tape::NodeId Tape::transpose(NodeId a) {
    check_open("transpose");
    const Tensor& ta = node(a).value;
    if (ta.shape.size() != 2) throw std::invalid_argument("transpose expects a matrix, got " + ta.shape_str());
    Tensor out = Tensor::zeros({ta.cols(), ta.rows()});
    for (int i = 0; i < ta.rows(); ++i)
        for (int j = 0; j < ta.cols(); ++j) out.at(j, i) = ta.at(i, j);
    Node n;
    n.op = Op::Transpose;
    n.value = std::move(out);
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::softmax(NodeId logits, int axis) {
    check_open("softmax");
    const Tensor& t = node(logits).value;
    if (!t.all_finite()) throw std::domain_error("softmax input has non-finite entries");
    if (t.shape.size() == 1) {
        if (axis != 0 && axis != 1) throw std::invalid_argument("softmax axis out of range for 1-D tensor");
        Tensor out = Tensor::zeros(t.shape);
        kernels::softmax_row(t.values.data(), static_cast<int>(t.size()), out.values.data());
        Node n;
        n.op = Op::Softmax;
        n.value = out;
        n.aux = std::move(out);
        n.a = logits;
        n.axis = 1;
        return push(std::move(n));
    }
    if (t.shape.size() != 2) throw std::invalid_argument("softmax expects a vector or matrix, got " + t.shape_str());
    if (axis == 0) {
        // column softmax via transpose
        return transpose(softmax(transpose(logits), 1));
    }
    if (axis != 1) throw std::invalid_argument("softmax axis out of range for matrix");
    Tensor out = Tensor::zeros(t.shape);
    for (int i = 0; i < t.rows(); ++i) {
        kernels::softmax_row(t.values.data() + static_cast<size_t>(i) * t.cols(), t.cols(),
                             out.values.data() + static_cast<size_t>(i) * t.cols());
    }
    Node n;
    n.op = Op::Softmax;
    n.value = out;
    n.aux = std::move(out);
    n.a = logits;
    n.axis = 1;
    return push(std::move(n));
}

Tape::NodeId Tape::log_softmax_rows(NodeId logits) {
    check_open("log_softmax");
    const Tensor& t = node(logits).value;
    if (!t.all_finite()) throw std::domain_error("log_softmax input has non-finite entries");
    if (t.shape.size() != 2) throw std::invalid_argument("log_softmax expects a matrix, got " + t.shape_str());
    Tensor out = Tensor::zeros(t.shape);
    Tensor probs = Tensor::zeros(t.shape);
    for (int i = 0; i < t.rows(); ++i) {
        const double* row = t.values.data() + static_cast<size_t>(i) * t.cols();
        kernels::log_softmax_row(row, t.cols(), out.values.data() + static_cast<size_t>(i) * t.cols());
        kernels::softmax_row(row, t.cols(), probs.values.data() + static_cast<size_t>(i) * t.cols());
    }
    Node n;
    n.op = Op::LogSoftmax;
    n.value = std::move(out);
    n.aux = std::move(probs);
    n.a = logits;
    return push(std::move(n));
}

Tape::NodeId Tape::rows(NodeId matrix, std::vector<int> row_idx) {
    check_open("rows");
    const Tensor& t = node(matrix).value;
    if (t.shape.size() != 2) throw std::invalid_argument("rows expects a matrix, got " + t.shape_str());
    for (int r : row_idx) {
        if (r < 0 || r >= t.rows()) throw std::out_of_range("row index " + std::to_string(r) + " out of range");
    }
    Tensor out = Tensor::zeros({static_cast<int>(row_idx.size()), t.cols()});
    for (size_t i = 0; i < row_idx.size(); ++i) {
        const double* src = t.values.data() + static_cast<size_t>(row_idx[i]) * t.cols();
        std::copy(src, src + t.cols(), out.values.data() + i * t.cols());
    }
    Node n;
    n.op = Op::Rows;
    n.value = std::move(out);
    n.a = matrix;
    n.idx = std::move(row_idx);
    return push(std::move(n));
}

Tape::NodeId Tape::pick(NodeId matrix, std::vector<std::pair<int, int>> entries) {
    check_open("pick");
    const Tensor& t = node(matrix).value;
    if (t.shape.size() != 2) throw std::invalid_argument("pick expects a matrix, got " + t.shape_str());
    Tensor out = Tensor::zeros({static_cast<int>(entries.size())});
    for (size_t i = 0; i < entries.size(); ++i) {
        auto [r, c] = entries[i];
        if (r < 0 || r >= t.rows() || c < 0 || c >= t.cols()) {
            throw std::out_of_range("pick entry (" + std::to_string(r) + "," + std::to_string(c) + ") out of range");
        }
        out.values[i] = t.at(r, c);
    }
    Node n;
    n.op = Op::Pick;
    n.value = std::move(out);
    n.a = matrix;
    n.entries = std::move(entries);
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId a) {
    check_open("relu");
    const Tensor& t = node(a).value;
    Tensor out = t;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    Node n;
    n.op = Op::Relu;
    n.value = std::move(out);
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::clamp(NodeId a, double lo, double hi) {
    check_open("clamp");
    if (!(lo <= hi)) throw std::invalid_argument("clamp bounds out of order");
    const Tensor& t = node(a).value;
    Tensor out = t;
    for (double& v : out.values) v = std::min(std::max(v, lo), hi);
    Node n;
    n.op = Op::Clamp;
    n.value = std::move(out);
    n.a = a;
    n.lo = lo;
    n.hi = hi;
    return push(std::move(n));
}

Tape::NodeId Tape::minimum(NodeId a, NodeId b) {
    check_open("minimum");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (!ta.same_shape(tb)) {
        throw std::invalid_argument("minimum shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < ta.size(); ++i) {
        out.values[static_cast<size_t>(i)] =
            std::min(ta.values[static_cast<size_t>(i)], tb.values[static_cast<size_t>(i)]);
    }
    Node n;
    n.op = Op::Minimum;
    n.value = std::move(out);
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
    check_open("sum");
    const Tensor& t = node(a).value;
    double s = 0.0;
    for (double v : t.values) s += v;
    Node n;
    n.op = Op::Sum;
    n.value = Tensor::scalar(s);
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::mean(NodeId a) {
    const std::int64_t n = node(a).value.size();
    return mul(sum(a), 1.0 / static_cast<double>(n));
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

Tensor Tape::grad(NodeId id) const {
    const Node& n = node(id);
    if (!n.grad) return Tensor::zeros(n.value.shape);
    return *n.grad;
}

Tensor& Tape::grad_slot(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad) n.grad = Tensor::zeros(n.value.shape);
    return *n.grad;
}

void Tape::backward(NodeId root) {
    check_open("backward");
    const Node& r = node(root);
    if (!r.value.is_scalar()) {
        throw std::invalid_argument("backward root must be scalar, got shape " + r.value.shape_str());
    }
    closed_ = true;
    grad_slot(root).values[0] = 1.0;

    // Accumulates into the operand's gradient, handling scalar broadcast.
    auto accumulate = [this](NodeId target, const Tensor& g, auto&& per_element) {
        Node& tn = nodes_[static_cast<size_t>(target)];
        if (!tn.needs_grad) return;
        Tensor& tg = grad_slot(target);
        if (tn.value.is_scalar() && g.size() > 1) {
            double s = 0.0;
            for (std::int64_t i = 0; i < g.size(); ++i) s += per_element(static_cast<size_t>(i));
            tg.values[0] += s;
        } else {
            for (std::int64_t i = 0; i < g.size(); ++i) tg.values[static_cast<size_t>(i)] += per_element(static_cast<size_t>(i));
        }
    };

    for (NodeId id = size() - 1; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || !n.grad) continue;
        const Tensor& g = *n.grad;
        auto aval = [&](size_t i) {
            const Tensor& t = nodes_[static_cast<size_t>(n.a)].value;
            return t.is_scalar() ? t.values[0] : t.values[i];
        };
        auto bval = [&](size_t i) {
            const Tensor& t = nodes_[static_cast<size_t>(n.b)].value;
            return t.is_scalar() ? t.values[0] : t.values[i];
        };
        switch (n.op) {
            case Op::Leaf: break;
            case Op::Add:
                accumulate(n.a, g, [&](size_t i) { return g.values[i]; });
                accumulate(n.b, g, [&](size_t i) { return g.values[i]; });
                break;
            case Op::Sub:
                accumulate(n.a, g, [&](size_t i) { return g.values[i]; });
                accumulate(n.b, g, [&](size_t i) { return -g.values[i]; });
                break;
            case Op::Mul:
                accumulate(n.a, g, [&](size_t i) { return g.values[i] * bval(i); });
                accumulate(n.b, g, [&](size_t i) { return g.values[i] * aval(i); });
                break;
            case Op::Div:
                accumulate(n.a, g, [&](size_t i) { return g.values[i] / bval(i); });
                accumulate(n.b, g, [&](size_t i) {
                    const double b = bval(i);
                    return -g.values[i] * aval(i) / (b * b);
                });
                break;
            case Op::Exp:
                accumulate(n.a, g, [&](size_t i) { return g.values[i] * n.value.values[i]; });
                break;
            case Op::Log:
                accumulate(n.a, g, [&](size_t i) { return g.values[i] / aval(i); });
                break;
            case Op::Neg:
                accumulate(n.a, g, [&](size_t i) { return -g.values[i]; });
                break;
            case Op::MatMul: {
                const Tensor& ta = nodes_[static_cast<size_t>(n.a)].value;
                const Tensor& tb = nodes_[static_cast<size_t>(n.b)].value;
                const int m = ta.shape[0], k = ta.shape[1], p = tb.shape[1];
                const double* gd = g.values.data();
                if (nodes_[static_cast<size_t>(n.a)].needs_grad) {
                    // dA = g * B^T
                    double* gad = grad_slot(n.a).values.data();
                    const double* tbd = tb.values.data();
                    for (int i = 0; i < m; ++i) {
                        const double* grow = gd + static_cast<size_t>(i) * p;
                        double* garow = gad + static_cast<size_t>(i) * k;
                        for (int kk = 0; kk < k; ++kk) {
                            const double* brow = tbd + static_cast<size_t>(kk) * p;
                            double s = 0.0;
                            for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
                            garow[kk] += s;
                        }
                    }
                }
                if (nodes_[static_cast<size_t>(n.b)].needs_grad) {
                    // dB = A^T * g
                    double* gbd = grad_slot(n.b).values.data();
                    const double* tad = ta.values.data();
                    for (int i = 0; i < m; ++i) {
                        const double* arow = tad + static_cast<size_t>(i) * k;
                        const double* grow = gd + static_cast<size_t>(i) * p;
                        for (int kk = 0; kk < k; ++kk) {
                            const double av = arow[kk];
                            if (av == 0.0) continue;
                            double* gbrow = gbd + static_cast<size_t>(kk) * p;
                            for (int j = 0; j < p; ++j) gbrow[j] += av * grow[j];
                        }
                    }
                }
                break;
            }
            case Op::Transpose: {
                if (nodes_[static_cast<size_t>(n.a)].needs_grad) {
                    Tensor& ga = grad_slot(n.a);
                    const int r = n.value.shape[0], c = n.value.shape[1];
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j)
                            ga.values[static_cast<size_t>(j) * r + i] += g.values[static_cast<size_t>(i) * c + j];
                }
                break;
            }
            case Op::Softmax: {
                // dx_i = y_i * (g_i - sum_j g_j y_j), per row
                if (!nodes_[static_cast<size_t>(n.a)].needs_grad) break;
                Tensor& ga = grad_slot(n.a);
                const Tensor& y = *n.aux;
                const int ncols = y.shape.size() == 2 ? y.cols() : static_cast<int>(y.size());
                const int nrows = static_cast<int>(y.size() / ncols);
                for (int r2 = 0; r2 < nrows; ++r2) {
                    const size_t off = static_cast<size_t>(r2) * ncols;
                    double dotgy = 0.0;
                    for (int j = 0; j < ncols; ++j) dotgy += g.values[off + j] * y.values[off + j];
                    for (int j = 0; j < ncols; ++j)
                        ga.values[off + j] += y.values[off + j] * (g.values[off + j] - dotgy);
                }
                break;
            }
            case Op::LogSoftmax: {
                // dx_i = g_i - y_i * sum_j g_j, per row, y = softmax(x)
                if (!nodes_[static_cast<size_t>(n.a)].needs_grad) break;
                Tensor& ga = grad_slot(n.a);
                const Tensor& y = *n.aux;
                const int ncols = y.cols();
                const int nrows = y.rows();
                for (int r2 = 0; r2 < nrows; ++r2) {
                    const size_t off = static_cast<size_t>(r2) * ncols;
                    double gsum = 0.0;
                    for (int j = 0; j < ncols; ++j) gsum += g.values[off + j];
                    for (int j = 0; j < ncols; ++j) ga.values[off + j] += g.values[off + j] - y.values[off + j] * gsum;
                }
                break;
            }
            case Op::Rows: {
                if (!nodes_[static_cast<size_t>(n.a)].needs_grad) break;
                Tensor& ga = grad_slot(n.a);
                const int ncols = n.value.cols();
                for (size_t i = 0; i < n.idx.size(); ++i) {
                    double* dst = ga.values.data() + static_cast<size_t>(n.idx[i]) * ncols;
                    const double* src = g.values.data() + i * ncols;
                    for (int j = 0; j < ncols; ++j) dst[j] += src[j];
                }
                break;
            }
            case Op::Pick: {
                if (!nodes_[static_cast<size_t>(n.a)].needs_grad) break;
                Tensor& ga = grad_slot(n.a);
                const int ncols = nodes_[static_cast<size_t>(n.a)].value.cols();
                for (size_t i = 0; i < n.entries.size(); ++i) {
                    ga.values[static_cast<size_t>(n.entries[i].first) * ncols + n.entries[i].second] += g.values[i];
                }
                break;
            }
            case Op::Relu:
                accumulate(n.a, g, [&](size_t i) { return aval(i) > 0.0 ? g.values[i] : 0.0; });
                break;
            case Op::Clamp:
                accumulate(n.a, g, [&](size_t i) {
                    const double x = aval(i);
                    return (x > n.lo && x < n.hi) ? g.values[i] : 0.0;
                });
                break;
            case Op::Minimum:
                accumulate(n.a, g, [&](size_t i) { return aval(i) <= bval(i) ? g.values[i] : 0.0; });
                accumulate(n.b, g, [&](size_t i) { return bval(i) < aval(i) ? g.values[i] : 0.0; });
                break;
            case Op::Sum: {
                const double gs = g.values[0];
                accumulate(n.a, nodes_[static_cast<size_t>(n.a)].value, [&](size_t) { return gs; });
                break;
            }
        }
    }
}

}  // namespace gc2po
