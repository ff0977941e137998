#include "g2coflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

namespace {

constexpr int64_t kChunk = 64;  // nodes per reduction chunk

/// sup over nodes of |f|^2, kept squared so integer-valued norms (the
/// standard forms) survive without a sqrt/square round trip.
double sup_norm2(const TensorField& f, const MetricField& m) {
    int64_t nn = f.grid.nodes();
    std::vector<double> part(chunk_count(nn, kChunk), 0.0);
    parallel_chunks(nn, kChunk, [&](int ci, int64_t lo, int64_t hi) {
        double mx = 0.0;
        for (int64_t n = lo; n < hi; ++n)
            mx = std::fmax(mx, node_norm2(f.shape, m.at(n), f.node(n)));
        part[ci] = mx;
    });
    double mx = 0.0;
    for (double p : part) mx = std::fmax(mx, p);
    return mx;
}

/// t^{halfpow/2} * norm / exp(lgam), combined in log space.  Zero norms and
/// the t = 0 boundary short-circuit so exact zeros stay exact.
ShiEntry ladder_entry(double norm, int halfpow, double lgam, double t,
                      bool noise) {
    ShiEntry e;
    e.noise = noise;
    e.valid = t > 0.0 || halfpow >= 0;
    if (!e.valid || norm == 0.0) return e;
    if (t == 0.0) {
        if (halfpow == 0) e.value = std::exp(std::log(norm) - lgam);
        return e;  // positive powers of t = 0 vanish
    }
    e.value = std::exp(0.5 * halfpow * std::log(t) + std::log(norm) - lgam);
    return e;
}

double entry_sq(const ShiEntry& e) { return e.value * e.value; }

double small_factorial(int v) {
    double r = 1.0;
    for (int i = 2; i <= v; ++i) r *= i;
    return r;
}

}  // namespace

double lambda_node(const TensorShape& rm_shape, const double* rm,
                   const TensorShape& dt_shape, const double* dt,
                   const TensorShape& t_shape, const double* t,
                   const Metric& m) {
    double rm2 = node_norm2(rm_shape, m, rm);
    double dt2 = node_norm2(dt_shape, m, dt);
    double t2 = node_norm2(t_shape, m, t);
    return std::sqrt(rm2 + dt2 + t2 * t2);
}

LambdaField lambda_field(const GeometryCache& cache, const DerivOps& ops) {
    TensorField nt = covariant_derivative(cache.torsion.t, cache.conn, ops);
    LambdaField out;
    out.value = form_field(cache.phi.grid, 0);
    int64_t nn = cache.phi.grid.nodes();
    std::vector<double> part(chunk_count(nn, kChunk), 0.0);
    parallel_chunks(nn, kChunk, [&](int ci, int64_t lo, int64_t hi) {
        double mx = 0.0;
        for (int64_t n = lo; n < hi; ++n) {
            double v = lambda_node(cache.curv.rm.shape, cache.curv.rm.node(n),
                                   nt.shape, nt.node(n),
                                   cache.torsion.t.shape,
                                   cache.torsion.t.node(n), cache.m.at(n));
            out.value.node(n)[0] = v;
            mx = std::fmax(mx, v);
        }
        part[ci] = mx;
    });
    for (double p : part) out.sup = std::fmax(out.sup, p);
    return out;
}

ShiSequences shi_sequences(const TensorField& psi, const GeometryCache& cache,
                           const DerivOps& ops, double t, int kmax) {
    if (kmax < 0 || kmax > 4)
        throw Error(ErrorCode::invalid_argument,
                    "ladder depth must lie in [0, 4]");
    if (!(t >= 0.0))
        throw Error(ErrorCode::invalid_argument, "time must be >= 0");
    ShiSequences s;
    s.t = t;
    s.kmax = kmax;
    s.rm_jets = iterated_norms(cache.curv.rm, cache.m, cache.conn, ops, kmax);
    s.t_jets =
        iterated_norms(cache.torsion.t, cache.m, cache.conn, ops, kmax + 1);
    s.phi_jets = iterated_norms(cache.phi, cache.m, cache.conn, ops, kmax + 2);
    s.psi_jets = iterated_norms(psi, cache.m, cache.conn, ops, kmax + 2);
    s.t_norm2 = sup_norm2(cache.torsion.t, cache.m);
    s.phi_norm2 = sup_norm2(cache.phi, cache.m);
    s.psi_norm2 = sup_norm2(psi, cache.m);

    s.a.resize(kmax + 1);
    s.b.resize(kmax + 1);
    s.c.resize(kmax + 1);
    s.d.resize(kmax + 1);
    s.ta.resize(kmax + 1);
    s.tb.resize(kmax + 1);
    s.tc.resize(kmax + 1);
    s.td.resize(kmax + 1);
    for (int k = 0; k <= kmax; ++k) {
        double lg1 = std::lgamma(double(k + 2));  // log (k+1)!
        double lg0 = std::lgamma(double(k + 1));  // log k!
        const JetEntry& jr = s.rm_jets[k];
        const JetEntry& jt = s.t_jets[k + 1];
        const JetEntry& jp = s.phi_jets[k + 2];
        const JetEntry& jq = s.psi_jets[k + 2];
        s.a[k] = ladder_entry(jr.sup, k, lg1, t, jr.noise);
        s.b[k] = ladder_entry(jt.sup, k, lg1, t, jt.noise);
        s.c[k] = ladder_entry(jp.sup, k, lg1, t, jp.noise);
        s.d[k] = ladder_entry(jq.sup, k, lg1, t, jq.noise);
        s.ta[k] = ladder_entry(jr.sup, k - 1, lg0, t, jr.noise);
        s.tb[k] = ladder_entry(jt.sup, k - 1, lg0, t, jt.noise);
        s.tc[k] = ladder_entry(jp.sup, k - 1, lg0, t, jp.noise);
        s.td[k] = ladder_entry(jq.sup, k - 1, lg0, t, jq.noise);
    }
    s.b_m1 = ladder_entry(s.t_jets[0].sup, -1, 0.0, t, s.t_jets[0].noise);
    s.c_m1 = ladder_entry(s.phi_jets[1].sup, -1, 0.0, t, s.phi_jets[1].noise);
    s.c_m2 = ladder_entry(s.phi_jets[0].sup, -2, 0.0, t, s.phi_jets[0].noise);
    s.d_m1 = ladder_entry(s.psi_jets[1].sup, -1, 0.0, t, s.psi_jets[1].noise);
    s.d_m2 = ladder_entry(s.psi_jets[0].sup, -2, 0.0, t, s.psi_jets[0].noise);
    s.tb_m1 = ladder_entry(s.t_jets[0].sup, -2, 0.0, t, s.t_jets[0].noise);
    s.tc_m1 = ladder_entry(s.phi_jets[1].sup, -2, 0.0, t, s.phi_jets[1].noise);
    s.tc_m2 = ladder_entry(s.phi_jets[0].sup, -3, 0.0, t, s.phi_jets[0].noise);
    s.td_m1 = ladder_entry(s.psi_jets[1].sup, -2, 0.0, t, s.psi_jets[1].noise);
    s.td_m2 = ladder_entry(s.psi_jets[0].sup, -3, 0.0, t, s.psi_jets[0].noise);
    return s;
}

AggregateQuantities aggregates(const ShiSequences& seq, double a_const,
                               int n) {
    if (n == -1) n = seq.kmax;
    if (n < 0 || n > seq.kmax)
        throw Error(ErrorCode::invalid_argument,
                    "cutoff exceeds the ladder depth");
    AggregateQuantities ag;
    ag.n = n;
    for (int k = 0; k <= n; ++k) {
        ag.a_sum += entry_sq(seq.a[k]);
        ag.b_sum += entry_sq(seq.b[k]);
        ag.c_sum += entry_sq(seq.c[k]);
        ag.d_sum += entry_sq(seq.d[k]);
    }
    for (int k = 1; k <= n; ++k) {
        ag.ta_sum += entry_sq(seq.ta[k]);
        ag.tb_sum += entry_sq(seq.tb[k]);
        ag.tc_sum += entry_sq(seq.tc[k]);
        ag.td_sum += entry_sq(seq.td[k]);
    }
    ag.t_norm2 = seq.t_norm2;
    ag.a_const2 = a_const * a_const;
    ag.phi_norm2 = seq.phi_norm2;
    ag.psi_norm2 = seq.psi_norm2;
    // grouped so that at the flat state (every ladder term zero) the total
    // collapses to a_const^2 + 210 with no rounding
    double head =
        ((ag.a_sum + ag.b_sum) + (ag.c_sum + ag.d_sum)) + ag.t_norm2;
    ag.total = head + (ag.a_const2 + (ag.phi_norm2 + ag.psi_norm2));
    ag.tilde_total_k1 = (ag.ta_sum + ag.tb_sum) + (ag.tc_sum + ag.td_sum);
    double extra = 0.0;
    if (seq.ta[0].valid) extra += entry_sq(seq.ta[0]);
    if (seq.tb[0].valid) extra += entry_sq(seq.tb[0]);
    if (seq.tc[0].valid) extra += entry_sq(seq.tc[0]);
    if (seq.td[0].valid) extra += entry_sq(seq.td[0]);
    ag.tilde_total_k0 = ag.tilde_total_k1 + extra;
    return ag;
}

double p_function(int x, int y, int z, int w, const ShiSequences& seq,
                  const AggregateQuantities& ag) {
    if (x < 0 || y < 0 || z < 0 || w < 0)
        throw Error(ErrorCode::invalid_argument, "exponents must be >= 0");
    if (x + y + z + w == 0) return 0.0;
    auto need = [](const ShiEntry& e) {
        if (!e.valid)
            throw Error(ErrorCode::invalid_argument,
                        "negative-index entries are undefined at t = 0");
    };
    if (x > 0) need(seq.b_m1);
    if (y > 0 || z > 0) need(seq.c_m1);
    if (z > 0) need(seq.c_m2);
    if (w > 0) {
        need(seq.d_m1);
        need(seq.d_m2);
    }
    int m = x + y + 2 * z + 2 * w;
    double b1 = seq.b_m1.value, c1 = seq.c_m1.value, c2 = seq.c_m2.value;
    double d1 = seq.d_m1.value, d2 = seq.d_m2.value;
    double sums = std::pow(ag.b_sum + b1 * b1, 0.5 * x) *
                  std::pow(ag.c_sum + c1 * c1, 0.5 * y) *
                  std::pow(ag.c_sum + c1 * c1 + c2 * c2, 0.5 * z) *
                  std::pow(ag.d_sum + d1 * d1 + d2 * d2, 0.5 * w);
    double lead = std::pow(b1, x) * std::pow(c1, y) * std::pow(c2, z) *
                  std::pow(d2, w);
    // each sum dominates its leading term, so the difference is >= 0; the
    // clamp only removes the last-ulp wobble of the pow round trips
    return std::fmax(0.0, std::pow(seq.t, 0.5 * m) * (sums - lead));
}

AnalyticityFit fit_analyticity(const std::vector<ShiSequences>& series) {
    struct Pt {
        int k;
        double v;
    };
    std::vector<Pt> pts;
    for (const ShiSequences& s : series)
        for (int k = 0; k <= s.kmax; ++k) {
            const ShiEntry& ea = s.a[k];
            const ShiEntry& eb = s.b[k];
            if (!ea.valid || !eb.valid || ea.noise || eb.noise) continue;
            pts.push_back({k, ea.value + eb.value});
        }
    if (pts.empty())
        throw Error(ErrorCode::insufficient_data, "no usable ladder entries");
    std::vector<Pt> nz;
    for (const Pt& p : pts)
        if (p.v > 0.0) nz.push_back(p);
    AnalyticityFit f;
    if (nz.empty()) {
        // identically-zero ladder: the factorial bound holds with C = 0
        f.degenerate = true;
        f.consistent = true;
        for (const Pt& p : pts) f.kmax_used = std::max(f.kmax_used, p.k);
        return f;
    }
    bool spread = false;
    for (const Pt& p : nz)
        if (p.k != nz[0].k) spread = true;
    if (nz.size() < 3 || !spread)
        throw Error(ErrorCode::insufficient_data,
                    "need 3 nonzero entries across 2 ladder depths");
    double sx = 0.0, sxx = 0.0, sy = 0.0, sxy = 0.0;
    for (const Pt& p : nz) {
        double X = 0.5 * p.k, Y = std::log(p.v);
        sx += X;
        sxx += X * X;
        sy += Y;
        sxy += X * Y;
        f.kmax_used = std::max(f.kmax_used, p.k);
    }
    double n = double(nz.size());
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double icept = (sy - slope * sx) / n;
    f.c_fit = std::exp(icept);
    f.l_fit = std::exp(slope);
    double rx = 0.0, rxx = 0.0, ry = 0.0, rxy = 0.0, r2 = 0.0;
    for (const Pt& p : nz) {
        double r = std::log(p.v) - (icept + slope * 0.5 * p.k);
        f.residuals.push_back(r);
        r2 += r * r;
        double ar = std::fabs(r);
        rx += p.k;
        rxx += double(p.k) * p.k;
        ry += ar;
        rxy += p.k * ar;
    }
    // consistency = the absolute residuals show no growing trend in k
    double rms = std::sqrt(r2 / n);
    double den = n * rxx - rx * rx;
    double trend = den > 0.0 ? (n * rxy - rx * ry) / den : 0.0;
    f.consistent = trend <= 1e-10 + 0.1 * rms;
    return f;
}

CommutatorReport commutator_monitor(const TensorField& s, const MetricField& m,
                                    const ConnectionField& conn,
                                    const CurvatureField& curv,
                                    const DerivOps& ops, int k) {
    if (k != 1 && k != 2)
        throw Error(ErrorCode::invalid_argument,
                    "the exchange monitor supports k = 1 and k = 2 only");
    std::vector<TensorField> sj;
    sj.reserve(k + 3);
    sj.push_back(s);
    for (int i = 1; i <= k + 2; ++i)
        sj.push_back(covariant_derivative(sj.back(), conn, ops));
    std::vector<TensorField> rj;
    rj.reserve(k + 1);
    rj.push_back(curv.rm);
    for (int i = 1; i <= k; ++i)
        rj.push_back(covariant_derivative(rj.back(), conn, ops));

    CommutatorReport rep;
    rep.k = k;
    TensorShape lshape = s.shape;
    for (int i = 0; i < k; ++i) lshape = prepended(lshape);
    rep.lhs = TensorField(s.grid, lshape);

    const TensorField& top = sj[k + 2];
    int64_t cs = s.comps();
    int64_t na = 1;
    for (int i = 0; i < k; ++i) na *= 7;
    int p = s.shape.rank();
    std::vector<double> wts(k + 1);
    for (int i = 0; i <= k; ++i)
        wts[i] = small_factorial(k + 2) /
                 (small_factorial(i + 2) * small_factorial(k - i));

    int64_t nn = s.grid.nodes();
    std::vector<double> lhsn(nn), rhsn(nn);
    parallel_chunks(nn, kChunk, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mt = m.at(n);
            const double* tp = top.node(n);
            double* out = rep.lhs.node(n);
            // the jet stores the outermost derivative first, so the trace
            // over the last pair is nabla^k(lap S) and over the first pair
            // lap(nabla^k S)
            for (int64_t a = 0; a < na; ++a)
                for (int64_t sc = 0; sc < cs; ++sc) {
                    double inner = 0.0, outer = 0.0;
                    for (int bi = 0; bi < 7; ++bi)
                        for (int ci = 0; ci < 7; ++ci) {
                            double gi = mt.inv[bi * 7 + ci];
                            if (gi == 0.0) continue;
                            inner +=
                                gi * tp[((a * 7 + bi) * 7 + ci) * cs + sc];
                            outer +=
                                gi *
                                tp[(int64_t(bi * 7 + ci) * na + a) * cs + sc];
                        }
                    out[a * cs + sc] = inner - outer;
                }
            lhsn[n] = std::sqrt(node_norm2(rep.lhs.shape, mt, out));
            double r = 0.0;
            for (int i = 0; i <= k; ++i) {
                double ri =
                    std::sqrt(node_norm2(rj[i].shape, mt, rj[i].node(n)));
                double si = std::sqrt(
                    node_norm2(sj[k - i].shape, mt, sj[k - i].node(n)));
                r += wts[i] * ri * si;
            }
            rhsn[n] = (p + 1) * r;
        }
    });
    for (int64_t n = 0; n < nn; ++n) {
        rep.lhs_sup = std::fmax(rep.lhs_sup, lhsn[n]);
        rep.rhs_sup = std::fmax(rep.rhs_sup, rhsn[n]);
    }
    // roundoff floor: cancellation noise of the top jet
    double floor = 1e-11 * std::fmax(1.0, tensor_norms(top, m).sup);
    for (int64_t n = 0; n < nn; ++n) {
        if (lhsn[n] <= floor) continue;
        if (rhsn[n] <= 0.0) {
            rep.covered = false;
            continue;
        }
        rep.c_hat = std::fmax(rep.c_hat, lhsn[n] / rhsn[n]);
    }
    return rep;
}

EvolutionReport evolution_monitors(const std::vector<FlowState>& traj,
                                   const DerivOps& ops) {
    int ns = int(traj.size());
    if (ns < 3)
        throw Error(ErrorCode::insufficient_trajectory,
                    "monitors need at least 3 stored steps");
    double dt = traj[1].t - traj[0].t;
    if (!(dt > 0.0))
        throw Error(ErrorCode::invalid_argument, "times must increase");
    for (int i = 0; i + 1 < ns; ++i)
        if (std::fabs((traj[i + 1].t - traj[i].t) - dt) > 1e-9 * dt)
            throw Error(ErrorCode::invalid_argument,
                        "trajectory spacing is not uniform");
    EvolutionReport rep;
    rep.dt = dt;
    int64_t nn = traj[0].psi.grid.nodes();

    // |T|^2 scalar fields and the sup norms every monitor shares
    std::vector<TensorField> u(ns);
    std::vector<double> tsup(ns), rmsup(ns), lamsup(ns);
    for (int i = 0; i < ns; ++i) {
        const GeometryCache& c = traj[i].cache;
        u[i] = form_field(c.phi.grid, 0);
        double mx = 0.0;
        for (int64_t n = 0; n < nn; ++n) {
            double v =
                node_norm2(c.torsion.t.shape, c.m.at(n), c.torsion.t.node(n));
            u[i].node(n)[0] = v;
            mx = std::fmax(mx, v);
        }
        tsup[i] = std::sqrt(mx);
        rmsup[i] = tensor_norms(c.curv.rm, c.m).sup;
        lamsup[i] = lambda_field(c, ops).sup;
    }

    double r1_matched = 0.0;
    std::vector<std::vector<double>> heat_lhs(ns), heat_rhs(ns);
    for (int i = 1; i + 1 < ns; ++i) {
        const GeometryCache& c = traj[i].cache;
        FlowVelocity v = velocity(traj[i], ops);
        const TensorField& gp = traj[i + 1].cache.m.g;
        const TensorField& gm = traj[i - 1].cache.m.g;
        double r = 0.0;
        for (size_t ci = 0; ci < v.h.data.size(); ++ci)
            r = std::fmax(r, std::fabs((gp.data[ci] - gm.data[ci]) /
                                           (2.0 * dt) -
                                       2.0 * v.h.data[ci]));
        rep.metric_residual = std::fmax(rep.metric_residual, r);
        if (i >= 2 && i + 2 < ns) {
            const TensorField& gp2 = traj[i + 2].cache.m.g;
            const TensorField& gm2 = traj[i - 2].cache.m.g;
            double r2 = 0.0;
            for (size_t ci = 0; ci < v.h.data.size(); ++ci)
                r2 = std::fmax(r2, std::fabs((gp2.data[ci] - gm2.data[ci]) /
                                                 (4.0 * dt) -
                                             2.0 * v.h.data[ci]));
            rep.metric_residual_2dt = std::fmax(rep.metric_residual_2dt, r2);
            r1_matched = std::fmax(r1_matched, r);
        }

        TensorField lap = trace_laplacian(u[i], c.m, c.conn, ops);
        heat_lhs[i].resize(nn);
        heat_rhs[i].resize(nn);
        double a = traj[i].a;
        for (int64_t n = 0; n < nn; ++n) {
            double un = u[i].node(n)[0];
            heat_lhs[i][n] = (u[i + 1].node(n)[0] - u[i - 1].node(n)[0]) /
                                 (2.0 * dt) -
                             lap.node(n)[0];
            double rmn = std::sqrt(
                node_norm2(c.curv.rm.shape, c.m.at(n), c.curv.rm.node(n)));
            heat_rhs[i][n] = rmn * un + a * a * un +
                             a * std::pow(un, 1.5) + un * un;
        }

        double rate_t = std::fabs(tsup[i + 1] - tsup[i - 1]) / (2.0 * dt);
        double rate_rm = std::fabs(rmsup[i + 1] - rmsup[i - 1]) / (2.0 * dt);
        double den =
            (1.0 + lamsup[i]) * (1.0 + tsup[i]) * (1.0 + a * a);
        rep.growth_chat_t = std::fmax(rep.growth_chat_t, rate_t / den);
        rep.growth_chat_rm = std::fmax(rep.growth_chat_rm, rate_rm / den);
    }
    if (r1_matched > 0.0 && rep.metric_residual_2dt > 0.0)
        rep.metric_order = std::log2(rep.metric_residual_2dt / r1_matched);

    double lhs_abs = 0.0;
    for (int i = 1; i + 1 < ns; ++i)
        for (int64_t n = 0; n < nn; ++n)
            lhs_abs = std::fmax(lhs_abs, std::fabs(heat_lhs[i][n]));
    double floor = 1e-10 * lhs_abs;
    for (int i = 1; i + 1 < ns; ++i)
        for (int64_t n = 0; n < nn; ++n) {
            double l = heat_lhs[i][n];
            if (l <= floor) continue;  // the inequality is one-sided
            if (heat_rhs[i][n] <= 0.0) {
                rep.heat_rhs_covers = false;
                continue;
            }
            rep.heat_chat = std::fmax(rep.heat_chat, l / heat_rhs[i][n]);
        }
    return rep;
}

double aggregate_envelope(double t, double m0, double a_const, double c_fit) {
    if (t < 0.0)
        throw Error(ErrorCode::invalid_argument, "time must be >= 0");
    double base = m0 + a_const + 1.0;
    double k0 = 5376.0 * base * base;
    double rad = 1.0 - 4.0 * (c_fit + 1.0) * t * (k0 * k0) * (k0 * k0);
    if (rad <= 0.0) return std::numeric_limits<double>::infinity();
    return k0 / std::pow(rad, 0.25);
}

}  // namespace g2cf
