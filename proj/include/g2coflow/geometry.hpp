/// @file geometry.hpp
/// @brief Metric fields, the Levi-Civita connection, curvature, and the
/// covariant derivative on block-compact tensor fields.

#pragma once

#include <vector>

#include "g2coflow/derivatives.hpp"
#include "g2coflow/field.hpp"
#include "g2coflow/forms.hpp"

namespace g2cf {

/// Rank-2 metric field plus the per-node inverse/determinant caches every
/// contraction needs.
struct MetricField {
    Grid grid;
    TensorField g;           // shape [lower, lower]
    std::vector<Metric> pt;  // one cache per node

    const Metric& at(int64_t n) const { return pt[n]; }
    /// Smallest metric eigenvalue over the grid.
    double min_eig() const;
    /// Quadrature weight of one node: prod(h_a) * sqrt(det g).
    double weight(int64_t n) const;
};

/// Builds the caches from raw components.  Fails on any node with
/// det g <= 1e-12 or a non-symmetric / non-positive matrix.
MetricField metric_field(TensorField g);

/// Per-node metric induced by a positive 3-form field.
MetricField metric_field_from_phi(const TensorField& phi);

/// Christoffel symbols, comp layout l*49 + i*7 + j = Gamma^l_ij.
struct ConnectionField {
    TensorField gamma;
};

ConnectionField levi_civita(const MetricField& m, const DerivOps& ops);

/// Curvature of a metric field.  The (3,1) tensor from the connection is
/// antisymmetric in the derivative pair by construction; after lowering, the
/// last pair is antisymmetrized explicitly and the discarded symmetric part
/// (a metric-compatibility defect of the discretization) is reported.
struct CurvatureField {
    TensorField rm;      // shape [block2, block2]: R_(ij)(kl)
    TensorField ric;     // R_jk = R_ijk^i
    TensorField scalar;  // g^{jk} R_jk
    double kl_defect = 0.0;
};

CurvatureField riemann(const MetricField& m, const ConnectionField& conn,
                       const DerivOps& ops);

/// nabla f: prepends one covariant slot.  Plain slots are corrected through
/// their variance; antisymmetric blocks get one correction per block
/// position via the substitution tables.
TensorField covariant_derivative(const TensorField& f,
                                 const ConnectionField& conn,
                                 const DerivOps& ops);

/// One node of covariant_derivative(f) without materializing the field:
/// writes 7 * f.comps() values (derivative slot outermost) into `out`.
void covariant_derivative_at_node(const TensorField& f,
                                  const ConnectionField& conn,
                                  const DerivOps& ops, int64_t node,
                                  double* out);

}  // namespace g2cf
