/// @file torsion.hpp
/// @brief Full torsion of a G2-structure field and its irreducible split.
///
/// The torsion is recovered from the covariant derivative of the 3-form by
/// one contraction, T_i^j = (1/24) nabla_i phi_lmn psi^{jlmn}, and stored
/// with both indices lowered.  A 2-tensor splits into a trace, a traceless
/// symmetric part, and two antisymmetric pieces living in the 7- and
/// 14-dimensional invariant subspaces; the split is exact for arbitrary
/// rank-2 input, not only genuine torsions, and reconstruct_torsion inverts
/// it to roundoff.

#pragma once

#include "g2coflow/geometry.hpp"

namespace g2cf {

struct TorsionTensor {
    TensorField t;      // T_ij, shape [lower, lower]
    TensorField trace;  // scalar field g^{ij} T_ij
};

TorsionTensor full_torsion(const TensorField& phi, const TensorField& psi,
                           const MetricField& m, const ConnectionField& conn,
                           const DerivOps& ops);

/// Components of T = (tau0/4) g - tau3 - tau1^# . phi - (1/2) tau2 at one
/// node.  tau0 is 4/7 of the metric trace, tau3 is symmetric traceless,
/// tau1 is a 1-form (stored lowered), tau2 lies in the 14-dimensional part
/// of the 2-forms.
struct TorsionSplitNode {
    double tau0 = 0.0;
    double tau1[7] = {};
    PointForm tau2{2};
    double tau3[49] = {};
};

TorsionSplitNode split_torsion_node(const double* t_low, const PointForm& phi,
                                    const Metric& m);
void reconstruct_torsion_node(const TorsionSplitNode& f, const PointForm& phi,
                              const Metric& m, double* t_out);

struct TorsionSplit {
    TensorField tau0;  // scalar
    TensorField tau1;  // 1-form
    TensorField tau2;  // 2-form
    TensorField tau3;  // [lower, lower]
};

TorsionSplit split_torsion(const TorsionTensor& t, const TensorField& phi,
                           const MetricField& m);
TensorField reconstruct_torsion(const TorsionSplit& f, const TensorField& phi,
                                const MetricField& m);

/// sup norm of d(psi) over the grid; metric-free.
double coclosed_residual(const TensorField& psi, const DerivOps& ops);

/// sup norm of T - transpose(T).  Meaningful only for coclosed structures,
/// so the coclosedness residual is checked first; throws not_coclosed when
/// it exceeds `threshold`.
double coclosed_symmetry_check(const TorsionTensor& t, const TensorField& psi,
                               const DerivOps& ops, double threshold);

}  // namespace g2cf
