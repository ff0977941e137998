/// @file analysis.hpp
/// @brief Run diagnostics: the pointwise curvature/torsion magnitude, the
/// factorially normalized derivative ladders and their aggregates, the
/// powered-sum comparison function, a log-linear fit of the factorial growth
/// form, and residual monitors for the commutator and heat-operator
/// inequalities the flow is expected to satisfy.

#pragma once

#include <vector>

#include "g2coflow/coflow.hpp"
#include "g2coflow/jets.hpp"

namespace g2cf {

/// (|Rm|^2 + |nabla T|^2 + |T|^4)^{1/2} at one node.  The caller supplies the
/// node slices; shapes are arbitrary (norms contract every slot with g).
double lambda_node(const TensorShape& rm_shape, const double* rm,
                   const TensorShape& dt_shape, const double* dt,
                   const TensorShape& t_shape, const double* t,
                   const Metric& m);

/// The combined magnitude as a scalar field, plus its sup.  The sup at the
/// initial time is the constant every later estimate is budgeted against.
struct LambdaField {
    TensorField value;
    double sup = 0.0;
};

LambdaField lambda_field(const GeometryCache& cache, const DerivOps& ops);

/// One ladder entry.  `valid` is false when the attached power of t is
/// negative at t = 0 (the entry has no value there); `noise` mirrors the
/// junk-floor flag of the derivative norm the entry was built from.
struct ShiEntry {
    double value = 0.0;
    bool valid = true;
    bool noise = false;
};

/// Factorially normalized derivative ladders at one time.
///
///   a_k = t^{k/2} |nabla^k Rm|_inf / (k+1)!      (k = 0..kmax)
///   b_k = t^{k/2} |nabla^{k+1} T|_inf / (k+1)!
///   c_k = t^{k/2} |nabla^{k+2} phi|_inf / (k+1)!
///   d_k = t^{k/2} |nabla^{k+2} psi|_inf / (k+1)!
///
/// The tilde ladders divide by k! and carry t^{(k-1)/2} instead.  The
/// negative-index tail extends both conventions downward with k! = 1:
/// b_m1 = t^{-1/2}|T|, c_m1 = t^{-1/2}|nabla phi|, c_m2 = t^{-1}|phi|,
/// d_m1, d_m2 likewise for psi, and the tilde versions carry one extra
/// factor of t^{-1/2}.  Powers and factorials are combined in log space.
///
/// The raw jet norms are kept alongside, and the zeroth norms of T, phi, psi
/// are stored squared and unrounded so aggregate identities that are exact
/// in exact arithmetic stay exact in floating point.
struct ShiSequences {
    double t = 0.0;
    int kmax = 0;
    std::vector<ShiEntry> a, b, c, d;      // index k = 0..kmax
    std::vector<ShiEntry> ta, tb, tc, td;  // tilde ladders, same indexing
    ShiEntry b_m1, c_m1, c_m2, d_m1, d_m2;
    ShiEntry tb_m1, tc_m1, tc_m2, td_m1, td_m2;
    std::vector<JetEntry> rm_jets;   // orders 0..kmax
    std::vector<JetEntry> t_jets;    // orders 0..kmax+1
    std::vector<JetEntry> phi_jets;  // orders 0..kmax+2
    std::vector<JetEntry> psi_jets;  // orders 0..kmax+2
    double t_norm2 = 0.0;    // sup_n |T|^2, not rounded through a sqrt
    double phi_norm2 = 0.0;  // sup_n |phi|^2
    double psi_norm2 = 0.0;  // sup_n |psi|^2
};

/// Builds every ladder from iterated covariant derivative norms of Rm, T,
/// phi (from the cache) and the evolved 4-form psi.  kmax must lie in
/// [0, 4]: the 4-form ladders need derivatives up to order kmax + 2 and the
/// junk floor caps iterated norms at order 6.  t must be >= 0; at t = 0 the
/// entries with negative powers are marked invalid.
ShiSequences shi_sequences(const TensorField& psi, const GeometryCache& cache,
                           const DerivOps& ops, double t, int kmax);

/// Squared-ladder sums up to a cutoff n, and the two bootstrap totals:
///   total         = A_N + B_N + C_N + D_N + |T|^2 + A^2 + |phi|^2 + |psi|^2
///   tilde_total_* = the tilde ladder sums, starting at k = 1 or at k = 0
/// (both conventions are reported; the k = 0 start adds the four tilde-0
/// squares when they are defined at the given t).
struct AggregateQuantities {
    int n = 0;
    double a_sum = 0.0, b_sum = 0.0, c_sum = 0.0, d_sum = 0.0;
    double ta_sum = 0.0, tb_sum = 0.0, tc_sum = 0.0, td_sum = 0.0;
    double t_norm2 = 0.0, a_const2 = 0.0, phi_norm2 = 0.0, psi_norm2 = 0.0;
    double total = 0.0;
    double tilde_total_k1 = 0.0;
    double tilde_total_k0 = 0.0;
};

/// n = -1 means "use seq.kmax".  Throws invalid_argument when n exceeds the
/// ladder length.  At the flat state `total` equals A^2 + 210 exactly.
AggregateQuantities aggregates(const ShiSequences& seq, double a_const,
                               int n = -1);

/// The powered-sum difference
///   P = t^{m/2} [ (B_N + b_m1^2)^{x/2} (C_N + c_m1^2)^{y/2}
///                 (C_N + c_m1^2 + c_m2^2)^{z/2} (D_N + d_m1^2 + d_m2^2)^{w/2}
///               - b_m1^x c_m1^y c_m2^z d_m2^w ],   m = x + y + 2z + 2w.
/// Nonnegative for all admissible arguments (each sum dominates the single
/// term it is compared against).  Exponents must be nonnegative; positive
/// exponents require the corresponding negative-index entries to be defined
/// (t > 0).
double p_function(int x, int y, int z, int w, const ShiSequences& seq,
                  const AggregateQuantities& ag);

/// Least-squares fit of log(a_k + b_k) = log C + (k/2) log L over every
/// valid, unflagged ladder entry pooled from the given snapshots.  A ladder
/// that is identically zero (flat data) reports the degenerate C = 0 case;
/// fewer than three usable nonzero entries is an error.  `consistent` is
/// true when the absolute fit residuals show no growing trend in k, i.e.
/// the data does not visibly outrun the factorial form.
struct AnalyticityFit {
    double c_fit = 0.0;
    double l_fit = 0.0;
    int kmax_used = 0;
    std::vector<double> residuals;
    bool degenerate = false;
    bool consistent = false;
};

AnalyticityFit fit_analyticity(const std::vector<ShiSequences>& series);

/// Residual of the derivative/Laplacian exchange on a test field S:
///   lhs = nabla^k (lap S) - lap (nabla^k S)
/// both taken from a single iterated-derivative stack (the trace slides
/// between the innermost and outermost derivative pair), against the
/// curvature bound
///   rhs = (p+1) sum_{i=0}^k (k+2)!/((i+2)!(k-i)!) |nabla^i Rm| |nabla^{k-i} S|
/// evaluated pointwise with unit constant.  c_hat is the sup of the
/// pointwise ratio over nodes where the lhs rises above the roundoff floor;
/// covered reports whether the rhs was positive at every such node.
struct CommutatorReport {
    int k = 0;
    TensorField lhs;
    double lhs_sup = 0.0;
    double rhs_sup = 0.0;
    double c_hat = 0.0;
    bool covered = true;
};

/// k must be 1 or 2; higher orders drown in amplified grid noise.
CommutatorReport commutator_monitor(const TensorField& s, const MetricField& m,
                                    const ConnectionField& conn,
                                    const CurvatureField& curv,
                                    const DerivOps& ops, int k);

/// Residual monitors over a uniformly spaced stored trajectory:
///  - metric_residual: sup |(g(t+dt) - g(t-dt))/(2dt) - 2h(t)|, and the same
///    at double stride; metric_order is the dyadic rate log2(r_2dt / r_dt)
///    (ceteris paribus ~2 for a second-order centered difference),
///  - heat_chat: fitted constant of the one-sided heat inequality
///    (d/dt - lap)|T|^2 <= c (|Rm||T|^2 + A^2|T|^2 + A|T|^3 + |T|^4), with
///    heat_rhs_covers false if the right side vanished where the left rose
///    above the roundoff floor,
///  - growth_chat_*: sup-norm growth rates of T and Rm between steps,
///    normalized by (1 + sup lambda)(1 + |T|_inf)(1 + A^2).
/// Needs at least 3 states; stride-2 quantities need 5 and are zero below.
struct EvolutionReport {
    double dt = 0.0;
    double metric_residual = 0.0;
    double metric_residual_2dt = 0.0;
    double metric_order = 0.0;
    double heat_chat = 0.0;
    bool heat_rhs_covers = true;
    double growth_chat_t = 0.0;
    double growth_chat_rm = 0.0;
};

EvolutionReport evolution_monitors(const std::vector<FlowState>& traj,
                                   const DerivOps& ops);

/// Reference ceiling for the aggregate total: starting from the algebraic
/// bound k0 = 5376 (m0 + a + 1)^2 at t = 0, the comparison ODE gives
///   k0 (1 - 4 (c + 1) t k0^4)^{-1/4},
/// finite for t below 1/(4 (c + 1) k0^4) and +infinity past it.
double aggregate_envelope(double t, double m0, double a_const, double c_fit);

}  // namespace g2cf
