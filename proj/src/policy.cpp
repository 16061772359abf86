#include "gc2po/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "gc2po/rng.hpp"

namespace gc2po {

namespace {

constexpr double kMaskValue = -1e9;  // large finite negative; exp underflows to exactly 0

void check_tokens(const PolicyParams& p, std::span<const int> tokens) {
    if (tokens.empty()) throw std::invalid_argument("forward requires at least one token");
    if (static_cast<int>(tokens.size()) > p.max_positions) {
        throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max positions " + std::to_string(p.max_positions));
    }
    for (int t : tokens) {
        if (t < 0 || t >= p.vocab.size()) {
            throw std::invalid_argument("unknown token id " + std::to_string(t) + " (vocabulary size " +
                                        std::to_string(p.vocab.size()) + ")");
        }
    }
}

Tensor causal_mask(int n) {
    Tensor m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m.at(i, j) = kMaskValue;
    return m;
}

}  // namespace

PolicyParams PolicyParams::init(Vocabulary vocab, int dim, int mlp_dim, int max_positions, std::uint64_t seed) {
    if (dim < 2) throw std::invalid_argument("hidden width must be at least 2");
    if (mlp_dim < 1 || max_positions < 1) throw std::invalid_argument("invalid policy dimensions");
    PolicyParams p;
    p.vocab = std::move(vocab);
    p.dim = dim;
    p.mlp_dim = mlp_dim;
    p.max_positions = max_positions;

    const int nv = p.vocab.size();
    const int na = static_cast<int>(p.vocab.answer_ids.size());
    Rng rng(seed);
    auto uniform_init = [&rng](std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.values) v = rng.uniform(-0.05, 0.05);
        return t;
    };
    p.embedding = uniform_init({nv, dim});
    p.pos_embedding = uniform_init({max_positions, dim});
    p.wq = uniform_init({dim, dim});
    p.wk = uniform_init({dim, dim});
    p.wv = uniform_init({dim, dim});
    p.wo = uniform_init({dim, dim});
    p.w1 = uniform_init({dim, mlp_dim});
    p.w2 = uniform_init({mlp_dim, dim});
    // Zero heads: the initial policy is exactly uniform and q(.|u) starts flat.
    p.out_head = Tensor::zeros({dim, nv});
    p.answer_head = Tensor::zeros({dim, na});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> PolicyParams::tensors() {
    return {{"embedding", &embedding}, {"pos_embedding", &pos_embedding}, {"wq", &wq}, {"wk", &wk},
            {"wv", &wv},               {"wo", &wo},                       {"w1", &w1}, {"w2", &w2},
            {"out_head", &out_head},   {"answer_head", &answer_head}};
}

std::vector<std::pair<std::string, const Tensor*>> PolicyParams::tensors() const {
    auto mut = const_cast<PolicyParams*>(this)->tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

std::int64_t PolicyParams::param_count() const {
    std::int64_t n = 0;
    for (auto& [name, t] : tensors()) n += t->size();
    return n;
}

std::vector<double> PolicyParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(param_count()));
    for (auto& [name, t] : tensors()) flat.insert(flat.end(), t->values.begin(), t->values.end());
    return flat;
}

void PolicyParams::unflatten(std::span<const double> flat) {
    if (static_cast<std::int64_t>(flat.size()) != param_count()) {
        throw std::invalid_argument("flat parameter size mismatch: " + std::to_string(flat.size()) + " vs " +
                                    std::to_string(param_count()));
    }
    size_t off = 0;
    for (auto& [name, t] : tensors()) {
        std::copy(flat.begin() + off, flat.begin() + off + t->values.size(), t->values.begin());
        off += t->values.size();
    }
}

PolicyLeaves make_policy_leaves(Tape& tape, const PolicyParams& p) {
    PolicyLeaves lv;
    lv.embedding = tape.leaf(p.embedding, true);
    lv.pos_embedding = tape.leaf(p.pos_embedding, true);
    lv.wq = tape.leaf(p.wq, true);
    lv.wk = tape.leaf(p.wk, true);
    lv.wv = tape.leaf(p.wv, true);
    lv.wo = tape.leaf(p.wo, true);
    lv.w1 = tape.leaf(p.w1, true);
    lv.w2 = tape.leaf(p.w2, true);
    lv.out_head = tape.leaf(p.out_head, true);
    lv.answer_head = tape.leaf(p.answer_head, true);
    return lv;
}

TapeForward tape_forward(Tape& tape, const PolicyParams& p, const PolicyLeaves& lv, std::span<const int> tokens) {
    check_tokens(p, tokens);
    const int n = static_cast<int>(tokens.size());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.dim));

    std::vector<int> tok(tokens.begin(), tokens.end());
    std::vector<int> pos(static_cast<size_t>(n));
    std::iota(pos.begin(), pos.end(), 0);

    const auto x = tape.add(tape.rows(lv.embedding, tok), tape.rows(lv.pos_embedding, pos));
    const auto q = tape.matmul(x, lv.wq);
    const auto k = tape.matmul(x, lv.wk);
    const auto v = tape.matmul(x, lv.wv);
    const auto scores = tape.add(tape.mul(tape.matmul(q, tape.transpose(k)), inv_sqrt_d), tape.leaf(causal_mask(n)));
    const auto attn = tape.softmax(scores, 1);
    const auto mixed = tape.add(x, tape.matmul(tape.matmul(attn, v), lv.wo));
    const auto mlp = tape.matmul(tape.relu(tape.matmul(mixed, lv.w1)), lv.w2);
    const auto hidden = tape.add(mixed, mlp);
    const auto logits = tape.matmul(hidden, lv.out_head);
    return {tape.log_softmax_rows(logits), hidden};
}

namespace {

/// Incremental decoder state. Recomputes nothing for earlier positions; by
/// causality the results equal tape_forward() on the growing prefix
/// bit-for-bit (the per-row loops mirror the tape kernels exactly).
class Decoder {
  public:
    explicit Decoder(const PolicyParams& p, bool store_rows = false)
        : p_(p), inv_sqrt_d_(1.0 / std::sqrt(static_cast<double>(p.dim))), store_rows_(store_rows) {}

    /// Feed one token; returns untempered next-token log-probs and keeps the
    /// hidden state internally.
    const std::vector<double>& feed(int token) {
        const int t = static_cast<int>(xs_.size());
        if (t >= p_.max_positions) throw std::invalid_argument("decoder exceeded max positions");
        if (token < 0 || token >= p_.vocab.size()) {
            throw std::invalid_argument("unknown token id " + std::to_string(token));
        }
        const int d = p_.dim;

        std::vector<double> x(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] = p_.embedding.at(token, i) + p_.pos_embedding.at(t, i);

        std::vector<double> q(static_cast<size_t>(d)), k(static_cast<size_t>(d)), v(static_cast<size_t>(d));
        kernels::matmul(x.data(), 1, d, p_.wq.values.data(), d, q.data());
        kernels::matmul(x.data(), 1, d, p_.wk.values.data(), d, k.data());
        kernels::matmul(x.data(), 1, d, p_.wv.values.data(), d, v.data());
        ks_.push_back(k);
        vs_.push_back(v);

        std::vector<double> scores(static_cast<size_t>(t) + 1);
        for (int j = 0; j <= t; ++j) {
            scores[static_cast<size_t>(j)] = kernels::dot(q.data(), ks_[static_cast<size_t>(j)].data(), d) * inv_sqrt_d_;
        }
        std::vector<double> attn(scores.size());
        kernels::softmax_row(scores.data(), static_cast<int>(scores.size()), attn.data());

        std::vector<double> ctx(static_cast<size_t>(d), 0.0);
        for (int j = 0; j <= t; ++j) {
            const double a = attn[static_cast<size_t>(j)];
            if (a == 0.0) continue;
            const double* vrow = vs_[static_cast<size_t>(j)].data();
            for (int i = 0; i < d; ++i) ctx[static_cast<size_t>(i)] += a * vrow[i];
        }

        std::vector<double> mixed(static_cast<size_t>(d));
        kernels::matmul(ctx.data(), 1, d, p_.wo.values.data(), d, mixed.data());
        for (int i = 0; i < d; ++i) mixed[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + mixed[static_cast<size_t>(i)];

        std::vector<double> act(static_cast<size_t>(p_.mlp_dim));
        kernels::matmul(mixed.data(), 1, d, p_.w1.values.data(), p_.mlp_dim, act.data());
        for (double& a : act) a = a > 0.0 ? a : 0.0;
        std::vector<double> mlp(static_cast<size_t>(d));
        kernels::matmul(act.data(), 1, p_.mlp_dim, p_.w2.values.data(), d, mlp.data());

        hidden_.assign(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < d; ++i) hidden_[static_cast<size_t>(i)] = mixed[static_cast<size_t>(i)] + mlp[static_cast<size_t>(i)];

        logits_.assign(static_cast<size_t>(p_.vocab.size()), 0.0);
        kernels::matmul(hidden_.data(), 1, d, p_.out_head.values.data(), p_.vocab.size(), logits_.data());
        logprobs_.assign(logits_.size(), 0.0);
        kernels::log_softmax_row(logits_.data(), static_cast<int>(logits_.size()), logprobs_.data());

        if (store_rows_) {
            hidden_rows_.insert(hidden_rows_.end(), hidden_.begin(), hidden_.end());
            logprob_rows_.insert(logprob_rows_.end(), logprobs_.begin(), logprobs_.end());
        }
        xs_.push_back(std::move(x));
        return logprobs_;
    }

    const std::vector<double>& logits() const { return logits_; }
    int position() const { return static_cast<int>(xs_.size()); }

    PolicyOutput take_output() {
        const int t = position();
        PolicyOutput out;
        out.logprobs = Tensor({t, p_.vocab.size()}, std::move(logprob_rows_));
        out.hidden = Tensor({t, p_.dim}, std::move(hidden_rows_));
        return out;
    }

  private:
    const PolicyParams& p_;
    double inv_sqrt_d_;
    bool store_rows_;
    std::vector<std::vector<double>> xs_, ks_, vs_;
    std::vector<double> hidden_, logits_, logprobs_;
    std::vector<double> hidden_rows_, logprob_rows_;
};

int sample_categorical(const std::vector<double>& logits, double temperature, Rng& rng) {
    std::vector<double> scaled(logits.size());
    const double inv_t = 1.0 / temperature;
    for (size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] * inv_t;
    std::vector<double> probs(logits.size());
    kernels::softmax_row(scaled.data(), static_cast<int>(scaled.size()), probs.data());
    const double r = rng.uniform();
    double cdf = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cdf += probs[i];
        if (r < cdf) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

int argmax(const std::vector<double>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace

PolicyOutput forward(const PolicyParams& p, std::span<const int> tokens) {
    check_tokens(p, tokens);
    Decoder dec(p, true);
    for (int tok : tokens) dec.feed(tok);
    return dec.take_output();
}

SampledRollout sample_trajectory_states(const PolicyParams& p, std::span<const int> question, double temperature,
                                        int max_len, std::uint64_t seed) {
    if (temperature < 0.0) throw std::invalid_argument("temperature must be nonnegative");
    if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
    check_tokens(p, question);
    if (static_cast<int>(question.size()) >= p.max_positions) {
        throw std::invalid_argument("question leaves no room to generate");
    }

    SampledRollout roll;
    Trajectory& traj = roll.traj;
    traj.question.assign(question.begin(), question.end());

    Decoder dec(p, true);
    const std::vector<double>* lp = nullptr;
    for (int tok : question) lp = &dec.feed(tok);

    Rng rng(seed);
    const int budget = std::min(max_len, p.max_positions - static_cast<int>(question.size()));
    bool done = false;
    for (int step = 0; step < budget && !done; ++step) {
        const int tok = temperature == 0.0 ? argmax(dec.logits()) : sample_categorical(dec.logits(), temperature, rng);
        traj.generated.push_back(tok);
        traj.old_logprobs.push_back((*lp)[static_cast<size_t>(tok)]);
        done = tok == p.vocab.eos_id;
        if (!done && step + 1 < budget) lp = &dec.feed(tok);
    }
    traj.truncated = !done;
    roll.states = dec.take_output();
    return roll;
}

Trajectory sample_trajectory(const PolicyParams& p, std::span<const int> question, double temperature, int max_len,
                             std::uint64_t seed) {
    return sample_trajectory_states(p, question, temperature, max_len, seed).traj;
}

Tensor episode_representation(const PolicyOutput& out, int span_start, int span_end) {
    if (span_start > span_end) throw std::invalid_argument("empty episode span has no representation");
    const int n = out.hidden.rows();
    if (span_start < 0 || span_end >= n) {
        throw std::out_of_range("episode span [" + std::to_string(span_start) + "," + std::to_string(span_end) +
                                "] outside sequence of length " + std::to_string(n));
    }
    const int d = out.hidden.cols();
    Tensor u = Tensor::zeros({d});
    for (int i = 0; i < d; ++i) u.at(i) = out.hidden.at(span_end, i);
    return u;
}

Tensor answer_logits(const PolicyParams& p, const Tensor& u) {
    if (static_cast<int>(u.size()) != p.dim) {
        throw std::invalid_argument("representation size " + std::to_string(u.size()) + " != hidden width " +
                                    std::to_string(p.dim));
    }
    if (!u.all_finite()) throw std::domain_error("non-finite episode representation");
    const int na = static_cast<int>(p.vocab.answer_ids.size());
    Tensor logits = Tensor::zeros({na});
    kernels::matmul(u.values.data(), 1, p.dim, p.answer_head.values.data(), na, logits.values.data());
    return logits;
}

Tensor answer_distribution(const PolicyParams& p, const Tensor& u) {
    Tensor logits = answer_logits(p, u);
    Tensor q = Tensor::zeros(logits.shape);
    kernels::softmax_row(logits.values.data(), static_cast<int>(logits.size()), q.values.data());
    return q;
}

std::vector<double> collect_gradient(const Tape& tape, const PolicyLeaves& lv, const PolicyParams& p) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(p.param_count()));
    const Tape::NodeId ids[] = {lv.embedding, lv.pos_embedding, lv.wq, lv.wk, lv.wv,
                                lv.wo,        lv.w1,            lv.w2, lv.out_head, lv.answer_head};
    for (Tape::NodeId id : ids) {
        const Tensor g = tape.grad(id);
        flat.insert(flat.end(), g.values.begin(), g.values.end());
    }
    return flat;
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'C', '2', 'P', 'O', 'C', 'K', '1'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const PolicyParams& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    write_u32(os, 1);  // version
    write_u32(os, static_cast<std::uint32_t>(p.vocab.size()));
    for (const auto& s : p.vocab.symbols) write_string(os, s);
    write_u32(os, static_cast<std::uint32_t>(p.vocab.answer_ids.size()));
    for (int a : p.vocab.answer_ids) write_u32(os, static_cast<std::uint32_t>(a));
    write_u32(os, static_cast<std::uint32_t>(p.dim));
    write_u32(os, static_cast<std::uint32_t>(p.mlp_dim));
    write_u32(os, static_cast<std::uint32_t>(p.max_positions));
    const auto ts = p.tensors();
    write_u32(os, static_cast<std::uint32_t>(ts.size()));
    for (const auto& [name, t] : ts) {
        write_string(os, name);
        write_u32(os, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) write_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t->values.data()),
                 static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("not a policy checkpoint: " + path);
    }
    const std::uint32_t version = read_u32(is);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    const std::uint32_t nv = read_u32(is);
    std::vector<std::string> symbols(nv);
    for (auto& s : symbols) s = read_string(is);
    const std::uint32_t na = read_u32(is);
    std::vector<int> answer_ids(na);
    for (auto& a : answer_ids) a = static_cast<int>(read_u32(is));

    PolicyParams p;
    p.vocab = Vocabulary::from_symbols(std::move(symbols), std::move(answer_ids));
    p.dim = static_cast<int>(read_u32(is));
    p.mlp_dim = static_cast<int>(read_u32(is));
    p.max_positions = static_cast<int>(read_u32(is));

    const std::uint32_t nt = read_u32(is);
    auto ts = p.tensors();
    if (nt != ts.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (auto& [name, t] : ts) {
        const std::string got = read_string(is);
        if (got != name) throw std::runtime_error("checkpoint tensor order mismatch: expected " + name + ", got " + got);
        const std::uint32_t rank = read_u32(is);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_u32(is));
        *t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t->values.data()),
                static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    }
    if (!is) throw std::runtime_error("checkpoint read failed: " + path);
    return p;
}

}  // namespace gc2po
