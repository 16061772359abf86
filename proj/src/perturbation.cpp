#include "gc2po/perturbation.hpp"

#include <cmath>
#include <stdexcept>

#include "gc2po/rng.hpp"

namespace gc2po {

std::string perturb_kind_name(PerturbKind kind) {
    switch (kind) {
        case PerturbKind::Gaussian: return "gaussian";
        case PerturbKind::CoordinateMask: return "coordinate-mask";
        case PerturbKind::Contraction: return "contraction";
        case PerturbKind::Composite: return "composite";
    }
    return "?";
}

PerturbKind perturb_kind_from_name(const std::string& name) {
    if (name == "gaussian") return PerturbKind::Gaussian;
    if (name == "coordinate-mask") return PerturbKind::CoordinateMask;
    if (name == "contraction") return PerturbKind::Contraction;
    if (name == "composite") return PerturbKind::Composite;
    throw std::invalid_argument("unknown perturbation kind: \"" + name + "\"");
}

void PerturbationSpec::validate() const {
    if (count < 1) throw std::invalid_argument("perturbation count M must be at least 1");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("perturbation sigma must be finite and >= 0");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw std::invalid_argument("keep probability must be in (0, 1]");
    if (!(alpha_min > 0.0 && alpha_min <= 1.0)) throw std::invalid_argument("alpha_min must be in (0, 1]");
}

Tensor PerturbOperator::apply(const Tensor& u) const {
    if (!u.all_finite()) throw std::domain_error("perturbation input has non-finite entries");
    const int d = static_cast<int>(u.size());
    Tensor out = u;
    switch (kind) {
        case PerturbKind::Gaussian: {
            if (static_cast<int>(noise.size()) != d) {
                throw std::invalid_argument("operator drawn for width " + std::to_string(noise.size()) +
                                            ", applied to width " + std::to_string(d));
            }
            const double norm = std::sqrt(kernels::squared_norm(u.values.data(), d));
            const double scale = sigma * norm / std::sqrt(static_cast<double>(d));
            for (int i = 0; i < d; ++i) out.values[static_cast<size_t>(i)] += scale * noise[static_cast<size_t>(i)];
            break;
        }
        case PerturbKind::CoordinateMask: {
            if (static_cast<int>(keep.size()) != d) {
                throw std::invalid_argument("mask drawn for width " + std::to_string(keep.size()) +
                                            ", applied to width " + std::to_string(d));
            }
            const double inv_p = 1.0 / keep_prob;
            for (int i = 0; i < d; ++i) {
                out.values[static_cast<size_t>(i)] = keep[static_cast<size_t>(i)] ? u.values[static_cast<size_t>(i)] * inv_p : 0.0;
            }
            break;
        }
        case PerturbKind::Contraction:
            for (double& v : out.values) v *= alpha;
            break;
        case PerturbKind::Composite:
            throw std::logic_error("composite is a family selector, not a concrete operator");
    }
    return out;
}

std::vector<PerturbOperator> sample_operators(const PerturbationSpec& spec, int dim, std::uint64_t seed) {
    spec.validate();
    if (dim < 1) throw std::invalid_argument("operator width must be positive");
    Rng rng(seed);
    std::vector<PerturbOperator> ops;
    ops.reserve(static_cast<size_t>(spec.count));
    for (int m = 0; m < spec.count; ++m) {
        PerturbKind kind = spec.kind;
        if (kind == PerturbKind::Composite) {
            const PerturbKind kinds[] = {PerturbKind::Gaussian, PerturbKind::CoordinateMask, PerturbKind::Contraction};
            kind = kinds[rng.below(3)];
        }
        PerturbOperator op;
        op.kind = kind;
        switch (kind) {
            case PerturbKind::Gaussian:
                op.sigma = spec.sigma;
                op.noise.resize(static_cast<size_t>(dim));
                for (double& e : op.noise) e = rng.normal();
                break;
            case PerturbKind::CoordinateMask:
                op.keep_prob = spec.keep_prob;
                op.keep.resize(static_cast<size_t>(dim));
                for (auto& k : op.keep) k = rng.bernoulli(spec.keep_prob) ? 1 : 0;
                break;
            case PerturbKind::Contraction:
                op.alpha = rng.uniform(spec.alpha_min, 1.0);
                break;
            case PerturbKind::Composite: break;  // unreachable
        }
        ops.push_back(std::move(op));
    }
    return ops;
}

}  // namespace gc2po
