/// @file jets.hpp
/// @brief Iterated covariant derivatives and their fully-contracted norms.

#pragma once

#include <vector>

#include "g2coflow/geometry.hpp"

namespace g2cf {

/// Pointwise tensor norm of a field and its weighted L2 companion.
/// sup  = max over nodes of |f|_g (all indices contracted with g),
/// l2   = sqrt( sum_n weight(n) |f|_g^2 ),  weight = prod(h_a) sqrt(det g).
struct FieldNorms {
    double sup = 0.0;
    double l2 = 0.0;
};

FieldNorms tensor_norms(const TensorField& f, const MetricField& m);

/// |f|_g at one node; `comps` points at the node slice.
double node_norm2(const TensorShape& shape, const Metric& m,
                  const double* comps);

struct JetEntry {
    int k = 0;
    double sup = 0.0;
    double l2 = 0.0;
    bool noise = false;  // base-field high-band energy, amplified to order k,
                         // exceeds 1e-8 of the total
};

/// Norms of nabla^k f for k = 0..kmax.  Intermediate derivative levels are
/// materialized one at a time; the top level is produced node-by-node and
/// reduced immediately, which keeps peak memory at one level below the top.
/// kmax must be <= 6: beyond that, amplified grid noise dominates.
std::vector<JetEntry> iterated_norms(const TensorField& f,
                                     const MetricField& m,
                                     const ConnectionField& conn,
                                     const DerivOps& ops, int kmax);

/// g^{ij} nabla_i nabla_j f, componentwise.
TensorField trace_laplacian(const TensorField& f, const MetricField& m,
                            const ConnectionField& conn, const DerivOps& ops);

}  // namespace g2cf
