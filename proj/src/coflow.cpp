#include "g2coflow/coflow.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

const char* to_string(Route r) {
    return r == Route::direct ? "direct" : "velocity";
}

const char* to_string(TimeScheme s) {
    return s == TimeScheme::euler ? "euler" : "rk4";
}

namespace {

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::string node_label(const Grid& g, int64_t n) {
    auto c = g.coords(n);
    std::string s = "node (";
    for (int a = 0; a < 7; ++a)
        s += std::to_string(c[a]) + (a < 6 ? "," : ")");
    return s;
}

void atomic_min(std::atomic<int64_t>& a, int64_t v) {
    int64_t cur = a.load(std::memory_order_relaxed);
    while (v < cur &&
           !a.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
    }
}

void atomic_max(std::atomic<int>& a, int v) {
    int cur = a.load(std::memory_order_relaxed);
    while (v > cur &&
           !a.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
    }
}

}  // namespace

GeometryCache refresh_geometry(const TensorField& psi,
                               const TensorField& phi_guess,
                               const DerivOps& ops, double tol,
                               int max_iter) {
    const Grid& g = psi.grid;
    TensorField phi = form_field(g, 3);
    std::atomic<int64_t> bad{INT64_MAX};
    std::atomic<int> worst_iter{0};
    parallel_chunks(g.nodes(), 16, [&](int, int64_t lo, int64_t hi) {
        int local_worst = 0;
        for (int64_t n = lo; n < hi; ++n) {
            auto r = phi_from_psi(form_at(psi, n), form_at(phi_guess, n), tol,
                                  max_iter);
            if (!r) {
                atomic_min(bad, n);
                continue;
            }
            local_worst = std::max(local_worst, r->iterations);
            set_form(phi, n, r->phi);
        }
        atomic_max(worst_iter, local_worst);
    });
    if (int64_t n = bad.load(); n != INT64_MAX) {
        FormError fe = FormError::none;
        (void)phi_from_psi(form_at(psi, n), form_at(phi_guess, n), tol,
                           max_iter, &fe);
        ErrorCode code = fe == FormError::not_positive
                             ? ErrorCode::not_positive
                             : ErrorCode::no_convergence;
        throw Error(code, std::string("3-form recovery failed (") +
                              to_string(fe) + ") at " + node_label(g, n));
    }

    GeometryCache cache;
    cache.recover_iterations = worst_iter.load();
    cache.m = metric_field_from_phi(phi);
    cache.conn = levi_civita(cache.m, ops);
    cache.curv = riemann(cache.m, cache.conn, ops);
    cache.torsion = full_torsion(phi, psi, cache.m, cache.conn, ops);

    std::vector<double> partial(chunk_count(g.nodes(), 16), 0.0);
    parallel_chunks(g.nodes(), 16, [&](int ci, int64_t lo, int64_t hi) {
        double r = 0.0;
        for (int64_t n = lo; n < hi; ++n) {
            PointForm back = hodge_star(form_at(phi, n), cache.m.at(n));
            const double* ps = psi.node(n);
            for (int c = 0; c < 35; ++c)
                r = std::fmax(r, std::fabs(back[c] - ps[c]));
        }
        partial[ci] = r;
    });
    for (double r : partial)
        cache.star_residual = std::fmax(cache.star_residual, r);
    cache.phi = std::move(phi);
    return cache;
}

FlowState make_state(TensorField psi, double t, double a,
                     const DerivOps& ops) {
    if (!(a > 0.0))
        throw Error(ErrorCode::invalid_argument,
                    "flow constant must be positive");
    if (psi.shape.slots.size() != 1 || psi.shape.slots[0].degree != 4)
        throw Error(ErrorCode::invalid_argument,
                    "flow state wants a 4-form field");
    FlowState s;
    s.t = t;
    s.a = a;
    TensorField guess = constant_form_field(psi.grid, standard_phi());
    s.cache = refresh_geometry(psi, guess, ops);
    s.psi = std::move(psi);
    return s;
}

FlowVelocity velocity(const FlowState& s, const DerivOps& ops) {
    const Grid& g = s.psi.grid;
    const GeometryCache& cache = s.cache;
    const auto& tb = FormTables::get();
    FlowVelocity out;
    out.h = TensorField(g, TensorShape{{1, -1}, {1, -1}});
    out.x = exterior_d(cache.torsion.trace, ops);
    out.psi_rate = form_field(g, 4);

    std::vector<double> skew(chunk_count(g.nodes(), 16), 0.0);
    parallel_chunks(g.nodes(), 16, [&](int ci, int64_t lo, int64_t hi) {
        double local_skew = 0.0;
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mm = cache.m.at(n);
            const double* tl = cache.torsion.t.node(n);
            const double* ric = cache.curv.ric.node(n);
            double tr = cache.torsion.trace.node(n)[0];
            PointForm ph = form_at(cache.phi, n);

            // T with both indices raised
            double tu[49];
            for (int k = 0; k < 7; ++k)
                for (int m2 = 0; m2 < 7; ++m2) {
                    double v = 0.0;
                    for (int i = 0; i < 7; ++i)
                        for (int j = 0; j < 7; ++j)
                            v += mm.inv[k * 7 + i] * tl[i * 7 + j] *
                                 mm.inv[j * 7 + m2];
                    tu[k * 7 + m2] = v;
                }
            // dense slices P_i[k][l] = phi_{ikl}
            double pd[7][49];
            for (int i = 0; i < 7; ++i) {
                std::memset(pd[i], 0, sizeof(pd[i]));
                double e[7] = {};
                e[i] = 1.0;
                PointForm pi = interior(e, ph);
                for (int c = 0; c < 21; ++c) {
                    const auto& t = tb.tuples[2][c];
                    pd[i][t[0] * 7 + t[1]] = pi[c];
                    pd[i][t[1] * 7 + t[0]] = -pi[c];
                }
            }
            // W_i = Tu^t P_i Tu, then Q_ij = (1/2) <W_i, P_j>
            double wma[7][49];
            for (int i = 0; i < 7; ++i) {
                double tmp[49];  // P_i Tu
                for (int k = 0; k < 7; ++k)
                    for (int m2 = 0; m2 < 7; ++m2) {
                        double v = 0.0;
                        for (int l = 0; l < 7; ++l)
                            v += pd[i][k * 7 + l] * tu[l * 7 + m2];
                        tmp[k * 7 + m2] = v;
                    }
                for (int m1 = 0; m1 < 7; ++m1)
                    for (int m2 = 0; m2 < 7; ++m2) {
                        double v = 0.0;
                        for (int k = 0; k < 7; ++k)
                            v += tu[k * 7 + m1] * tmp[k * 7 + m2];
                        wma[i][m1 * 7 + m2] = v;
                    }
            }
            double raw[49];
            for (int i = 0; i < 7; ++i)
                for (int j = 0; j < 7; ++j) {
                    double q = 0.0;
                    for (int c = 0; c < 49; ++c) q += wma[i][c] * pd[j][c];
                    raw[i * 7 + j] = -ric[i * 7 + j] + 0.5 * q +
                                     (2.0 * s.a - tr) * tl[i * 7 + j];
                }
            double* hp = out.h.node(n);
            for (int i = 0; i < 7; ++i)
                for (int j = 0; j < 7; ++j) {
                    hp[i * 7 + j] = 0.5 * (raw[i * 7 + j] + raw[j * 7 + i]);
                    local_skew = std::fmax(
                        local_skew,
                        0.5 * std::fabs(raw[i * 7 + j] - raw[j * 7 + i]));
                }
        }
        skew[ci] = local_skew;
    });
    for (double v : skew) out.skew_defect = std::fmax(out.skew_defect, v);

    // rate: action of h on the four slots of psi minus wedge(x, phi)
    parallel_chunks(g.nodes(), 16, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mm = cache.m.at(n);
            const double* hp = out.h.node(n);
            const double* ps = s.psi.node(n);
            double hm[49];  // h_s^q = h_sp g^{pq}
            for (int i = 0; i < 7; ++i)
                for (int q = 0; q < 7; ++q) {
                    double v = 0.0;
                    for (int p = 0; p < 7; ++p)
                        v += hp[i * 7 + p] * mm.inv[p * 7 + q];
                    hm[i * 7 + q] = v;
                }
            PointForm xf(1);
            for (int i = 0; i < 7; ++i) xf[i] = out.x.node(n)[i];
            PointForm xphi = wedge(xf, form_at(cache.phi, n));
            double* rp = out.psi_rate.node(n);
            const auto& subst = tb.subst[4];
            for (int c = 0; c < 35; ++c) {
                const auto& t = tb.tuples[4][c];
                double v = -xphi[c];
                for (int pos = 0; pos < 4; ++pos) {
                    const double* row = hm + t[pos] * 7;
                    const auto& sub = subst[c][pos];
                    for (int q = 0; q < 7; ++q) {
                        int16_t enc = sub[q];
                        if (enc > 0)
                            v += row[q] * ps[enc - 1];
                        else if (enc < 0)
                            v -= row[q] * ps[-enc - 1];
                    }
                }
                rp[c] = v;
            }
        }
    });
    return out;
}

TensorField psi_rate_direct(const FlowState& s, const DerivOps& ops) {
    const Grid& g = s.psi.grid;
    TensorField rate =
        exterior_d(codifferential(s.psi, s.cache.m, ops), ops);
    TensorField sphi = s.cache.phi;
    parallel_chunks(g.nodes(), 64, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            double c = s.a - s.cache.torsion.trace.node(n)[0];
            double* p = sphi.node(n);
            for (int i = 0; i < 35; ++i) p[i] *= c;
        }
    });
    axpy(rate, 2.0, exterior_d(sphi, ops));
    return rate;
}

namespace {

TensorField flow_rate(const FlowState& s, const StepControls& c,
                      const DerivOps& ops) {
    if (c.route == Route::direct) return psi_rate_direct(s, ops);
    return velocity(s, ops).psi_rate;
}

FlowState stage_state(const FlowState& base, TensorField psi, double t,
                      const DerivOps& ops) {
    FlowState st;
    st.t = t;
    st.a = base.a;
    st.cache = refresh_geometry(psi, base.cache.phi, ops);
    st.psi = std::move(psi);
    return st;
}

}  // namespace

double step(FlowState& s, double dt, const StepControls& c,
            const DerivOps& ops) {
    double sup_k1 = 0.0;
    TensorField next;
    // a positivity / recovery failure inside the step is a loss of flow
    // stability, not a caller error, so the code is rewritten
    try {
        TensorField k1 = flow_rate(s, c, ops);
        sup_k1 = k1.sup_abs();
        if (c.scheme == TimeScheme::euler) {
            next = lincomb(1.0, s.psi, dt, k1);
        } else {
            FlowState s2 = stage_state(
                s, lincomb(1.0, s.psi, 0.5 * dt, k1), s.t + 0.5 * dt, ops);
            TensorField k2 = flow_rate(s2, c, ops);
            FlowState s3 = stage_state(
                s, lincomb(1.0, s.psi, 0.5 * dt, k2), s.t + 0.5 * dt, ops);
            TensorField k3 = flow_rate(s3, c, ops);
            FlowState s4 =
                stage_state(s, lincomb(1.0, s.psi, dt, k3), s.t + dt, ops);
            TensorField k4 = flow_rate(s4, c, ops);
            next = s.psi;
            axpy(next, dt / 6.0, k1);
            axpy(next, dt / 3.0, k2);
            axpy(next, dt / 3.0, k3);
            axpy(next, dt / 6.0, k4);
        }
        for (double v : next.data)
            if (!std::isfinite(v))
                throw Error(ErrorCode::stability_violation,
                            "non-finite 4-form after step from t = " +
                                std::to_string(s.t));
        s.cache = refresh_geometry(next, s.cache.phi, ops);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::not_positive ||
            e.code() == ErrorCode::no_convergence ||
            e.code() == ErrorCode::singular_metric)
            throw Error(ErrorCode::stability_violation,
                        std::string("geometry lost mid-step: ") + e.what());
        throw;
    }
    s.psi = std::move(next);
    s.t += dt;
    double cc = coclosed_residual(s.psi, ops);
    if (cc > c.coclosed_threshold)
        throw Error(ErrorCode::stability_violation,
                    "coclosedness residual " + sci(cc) +
                        " above threshold at t = " + std::to_string(s.t));
    double me = s.cache.m.min_eig();
    if (me < c.min_eig_floor)
        throw Error(ErrorCode::stability_violation,
                    "metric eigenvalue " + sci(me) +
                        " below floor at t = " + std::to_string(s.t));
    return sup_k1;
}

double suggested_dt(const FlowState& s, const DerivOps& ops, double cfl) {
    double h = s.psi.grid.min_spacing();
    double sup_h = velocity(s, ops).h.sup_abs();
    return cfl * h * h / std::fmax(1.0, sup_h);
}

MonitorRow monitor_row(const FlowState& s, const DerivOps& ops, int64_t step,
                       double dt, double sup_rate) {
    MonitorRow r;
    r.step = step;
    r.t = s.t;
    r.dt = dt;
    r.coclosed = coclosed_residual(s.psi, ops);
    r.min_eig = s.cache.m.min_eig();
    r.star_residual = s.cache.star_residual;
    r.sup_torsion = s.cache.torsion.t.sup_abs();
    r.sup_rate = sup_rate;
    r.trace_min = r.trace_max = s.cache.torsion.trace.node(0)[0];
    for (int64_t n = 1; n < s.psi.grid.nodes(); ++n) {
        double v = s.cache.torsion.trace.node(n)[0];
        r.trace_min = std::fmin(r.trace_min, v);
        r.trace_max = std::fmax(r.trace_max, v);
    }
    return r;
}

FlowState run(FlowState initial, double t_end, const StepControls& c,
              const DerivOps& ops, std::vector<MonitorRow>& rows, double cfl,
              double dt_override) {
    FlowState s = std::move(initial);
    if (t_end < s.t)
        throw Error(ErrorCode::invalid_argument, "t_end precedes the state");
    double dt0 = dt_override > 0.0 ? dt_override : suggested_dt(s, ops, cfl);
    rows.push_back(
        monitor_row(s, ops, 0, 0.0, flow_rate(s, c, ops).sup_abs()));
    int64_t k = 0;
    while (s.t < t_end - 1e-14 * std::fmax(1.0, t_end)) {
        double dt = std::fmin(dt0, t_end - s.t);
        double sup;
        try {
            sup = step(s, dt, c, ops);
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " (step " +
                                      std::to_string(k + 1) + ")");
        }
        ++k;
        rows.push_back(monitor_row(s, ops, k, dt, sup));
    }
    return s;
}

double metric_velocity_residual(const FlowState& s, double dt,
                                const StepControls& c, const DerivOps& ops) {
    FlowState fwd = s;
    FlowState bwd = s;
    step(fwd, dt, c, ops);
    step(bwd, -dt, c, ops);
    FlowVelocity v = velocity(s, ops);
    double r = 0.0;
    const auto& gf = fwd.cache.m.g.data;
    const auto& gb = bwd.cache.m.g.data;
    for (size_t i = 0; i < gf.size(); ++i)
        r = std::fmax(r, std::fabs((gf[i] - gb[i]) / (2.0 * dt) -
                                   2.0 * v.h.data[i]));
    return r;
}

}  // namespace g2cf
