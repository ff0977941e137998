/// @file exterior.hpp
/// @brief Exterior derivative, Hodge star, codifferential and grid pairings
/// for differential-form fields.

#pragma once

#include "g2coflow/derivatives.hpp"
#include "g2coflow/geometry.hpp"

namespace g2cf {

/// Metric-free exterior derivative (degree p -> p+1, p <= 6).
TensorField exterior_d(const TensorField& a, const DerivOps& ops);

/// Nodewise Hodge star (degree p -> 7-p).
TensorField hodge_star_field(const TensorField& a, const MetricField& m);

/// Codifferential, the formal adjoint of d for the grid inner product
/// (degree p -> p-1, p >= 1).  On 7 dimensions this is (-1)^p star d star.
TensorField codifferential(const TensorField& a, const MetricField& m,
                           const DerivOps& ops);

/// d delta + delta d (degrees 0..7; the missing composite at the ends is 0).
TensorField hodge_laplacian(const TensorField& a, const MetricField& m,
                            const DerivOps& ops);

/// L2 pairing of two p-form fields: sum_n weight(n) <a,b>_g(n) with the
/// form-convention pointwise product (sum over increasing tuples).
double grid_inner(const TensorField& a, const TensorField& b,
                  const MetricField& m);

}  // namespace g2cf
