#ifndef GC2PO_PERTURBATION_HPP
#define GC2PO_PERTURBATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "gc2po/tensor.hpp"

namespace gc2po {

enum class PerturbKind { Gaussian, CoordinateMask, Contraction, Composite };

std::string perturb_kind_name(PerturbKind kind);
PerturbKind perturb_kind_from_name(const std::string& name);

/// Family {g_m}: how counterfactual representations are drawn. Noise scales
/// relative to ||u|| so rewards do not depend on representation magnitude
/// conventions. Composite draws each operator's kind uniformly from the three.
struct PerturbationSpec {
    PerturbKind kind = PerturbKind::Composite;
    double sigma = 0.1;      // gaussian scale, >= 0
    double keep_prob = 0.9;  // coordinate-mask keep probability, in (0, 1]
    double alpha_min = 0.5;  // contraction draws alpha ~ U[alpha_min, 1]
    int count = 8;           // M

    void validate() const;
};

/// One concrete operator: randomness fixed at sampling time, apply() is a
/// deterministic map after that.
struct PerturbOperator {
    PerturbKind kind = PerturbKind::Gaussian;
    double sigma = 0.0;
    double keep_prob = 1.0;
    double alpha = 1.0;
    std::vector<double> noise;        // gaussian: standard-normal direction
    std::vector<std::uint8_t> keep;   // coordinate-mask pattern

    Tensor apply(const Tensor& u) const;
};

/// Draw M independent operators for representations of width `dim`.
std::vector<PerturbOperator> sample_operators(const PerturbationSpec& spec, int dim, std::uint64_t seed);

}  // namespace gc2po

#endif
