#include "g2coflow/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include "g2coflow/analysis.hpp"
#include "g2coflow/cli.hpp"
#include "g2coflow/errors.hpp"
#include "g2coflow/torsion.hpp"

namespace g2cf {
namespace {

// regression ceiling for the end-state discrepancy between the two rate
// formulations on the reference configuration; measured ~1.4e-14 (roundoff
// accumulation over the run), pinned two orders above that floor
constexpr double kGoldenRouteGap = 1.0e-12;

struct Mix {
    uint64_t state;
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }
    double sym() { return 2.0 * uniform() - 1.0; }
};

PointForm random_form(int degree, Mix& rng, double scale) {
    PointForm f(degree);
    for (int c = 0; c < f.size(); ++c) f.comp[c] = scale * rng.sym();
    return f;
}

/// Rejection sampler anchored at the standard form; positivity is an open
/// condition, so scaled-and-perturbed copies land inside it often enough.
PointForm random_positive_phi(Mix& rng) {
    for (;;) {
        double c = 0.5 + 1.5 * rng.uniform();
        PointForm phi = c * standard_phi();
        phi = phi + random_form(3, rng, 0.35 * c * rng.uniform());
        if (metric_from_phi(phi)) return phi;
    }
}

double sup_abs(const TensorField& f) {
    double m = 0.0;
    for (double v : f.data) m = std::fmax(m, std::fabs(v));
    return m;
}

double sup_diff(const TensorField& a, const TensorField& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::fmax(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

std::string fmtg(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

RunConfig perturbed_cfg(int n, Scheme sch) {
    RunConfig c;
    c.dims[0] = n;
    c.scheme = sch;
    c.t_end = 0.1;
    c.init = InitKind::perturbation;
    c.amplitude = 0.01;
    c.modes = {1, 2};
    c.seed = 7;
    c.seed_set = true;
    c.series_out.clear();
    c.report_out.clear();
    return c;
}

FlowState perturbed_state(int n, Scheme sch, const DerivOps& ops) {
    RunConfig cfg = perturbed_cfg(n, sch);
    return make_state(build_initial(cfg, ops), 0.0, cfg.a, ops);
}

constexpr StepControls kDirect{Route::direct, TimeScheme::rk4, 1e-8, 1e-10};

/// Residual of the 4-form derivative identity with the production torsion
/// substituted in: sup |nabla_m psi_ijkl - model| where the model
/// antisymmetrizes T against the 3-form.  This reads nabla psi and phi; the
/// production tensor reads nabla phi and psi, so agreement crosses the two
/// derivative relations.
double dpsi_substitution_residual(const FlowState& s, const DerivOps& ops) {
    const auto& tb = FormTables::get();
    TensorField dpsi = covariant_derivative(s.psi, s.cache.conn, ops);
    const TensorField& tt = s.cache.torsion.t;
    double worst = 0.0;
    for (int64_t n = 0; n < s.psi.grid.nodes(); ++n) {
        PointForm ph = form_at(s.cache.phi, n);
        const double* tv = tt.node(n);
        const double* dp = dpsi.node(n);
        for (int md = 0; md < 7; ++md)
            for (int c = 0; c < 35; ++c) {
                const auto& t4 = tb.tuples[4][c];
                uint8_t i = t4[0], j = t4[1], k = t4[2], l = t4[3];
                uint8_t jkl[3] = {j, k, l}, ikl[3] = {i, k, l};
                uint8_t jil[3] = {j, i, l}, jki[3] = {j, k, i};
                double model = -tv[md * 7 + i] * ph.at(jkl) +
                               tv[md * 7 + j] * ph.at(ikl) +
                               tv[md * 7 + k] * ph.at(jil) +
                               tv[md * 7 + l] * ph.at(jki);
                worst = std::fmax(worst, std::fabs(dp[md * 35 + c] - model));
            }
    }
    return worst;
}

/// e^{2u} delta metric with a single wave along axis 0, carrying exact
/// nodewise u, u', u'' so the curvature has a closed form.
struct Conformal {
    Grid grid;
    MetricField m;
    std::vector<double> u, du, ddu;
};

Conformal make_conformal(int n, double amp, int mode) {
    Conformal c;
    c.grid.dims[0] = n;
    constexpr double tau = 6.283185307179586476925;
    double k = tau * mode / c.grid.lengths[0];
    TensorField g(c.grid, TensorShape{{1, -1}, {1, -1}});
    c.u.resize(n);
    c.du.resize(n);
    c.ddu.resize(n);
    for (int j = 0; j < n; ++j) {
        double x = tau * double(mode) * j / n;
        c.u[j] = amp * std::sin(x);
        c.du[j] = amp * k * std::cos(x);
        c.ddu[j] = -amp * k * k * std::sin(x);
        double scale = std::exp(2.0 * c.u[j]);
        double* p = g.node(j);
        for (int i = 0; i < 7; ++i) p[i * 7 + i] = scale;
    }
    c.m = metric_field(std::move(g));
    return c;
}

/// Closed-form curvature of the conformal case: R_(ij)(ij) = e^{2u} u'' when
/// the pair contains axis 0, e^{2u} u'^2 otherwise, everything else zero.
TensorField conformal_rm(const Conformal& c) {
    const auto& tb = FormTables::get();
    TensorField rm(c.grid, TensorShape{{2, -1}, {2, -1}});
    for (int64_t n = 0; n < c.grid.nodes(); ++n) {
        double e2u = std::exp(2.0 * c.u[n]);
        double* p = rm.node(n);
        for (int cij = 0; cij < 21; ++cij) {
            int i = tb.tuples[2][cij][0], j = tb.tuples[2][cij][1];
            p[cij * 21 + cij] = (i == 0 || j == 0) ? e2u * c.ddu[n]
                                                   : e2u * c.du[n] * c.du[n];
        }
    }
    return rm;
}

TensorField wave_one_form(const Grid& g, double amp) {
    TensorField f = form_field(g, 1);
    constexpr double tau = 6.283185307179586476925;
    for (int64_t n = 0; n < g.nodes(); ++n) {
        double x = tau * double(g.coords(n)[0]) / double(g.dims[0]);
        for (int c = 0; c < 7; ++c)
            f.node(n)[c] = amp * std::sin(x + 0.7 * c + 0.3);
    }
    return f;
}

/// Antisymmetrized second covariant derivative of a 1-form against the
/// closed-form curvature action; the discrete side converges to the exact
/// side at the scheme's order.
double conformal_commutator_gap(int n, Scheme sch) {
    Conformal c = make_conformal(n, 0.25, 1);
    DerivOps ops(c.grid, sch);
    ConnectionField conn = levi_civita(c.m, ops);
    TensorField sf = wave_one_form(c.grid, 1.0);
    TensorField w1 = covariant_derivative(sf, conn, ops);
    TensorField w2 = covariant_derivative(w1, conn, ops);
    TensorField rmf = conformal_rm(c);
    double worst = 0.0;
    std::vector<double> rd(2401);
    for (int64_t nd = 0; nd < c.grid.nodes(); ++nd) {
        const Metric& m = c.m.at(nd);
        expand_node_dense(rmf.shape, rmf.node(nd), rd.data());
        const double* w = w2.node(nd);
        const double* sv = sf.node(nd);
        for (int a = 0; a < 7; ++a)
            for (int b = 0; b < 7; ++b)
                for (int cc = 0; cc < 7; ++cc) {
                    double lhs =
                        w[(a * 7 + b) * 7 + cc] - w[(b * 7 + a) * 7 + cc];
                    double rhs = 0.0;
                    for (int e = 0; e < 7; ++e)
                        for (int q = 0; q < 7; ++q)
                            rhs -= rd[((a * 7 + b) * 7 + cc) * 7 + e] *
                                   m.inv[e * 7 + q] * sv[q];
                    worst = std::fmax(worst, std::fabs(lhs - rhs));
                }
    }
    return worst;
}

/// Reference configuration shared by the route-consistency and ladder
/// criteria: one active axis, both rate formulations side by side, full
/// ladder depth sampled past t = 0.05.
struct ReferenceRun {
    RunConfig cfg;
    RunArtifacts art;
    double m0 = 0.0;    // sqrt of the initial lambda sup
    double agg0 = 0.0;  // aggregate of the t = 0 ladder
    bool ok = false;
    std::string err;
};

ReferenceRun make_reference(int n, int kmax, int64_t every, RouteChoice route,
                            double dt) {
    ReferenceRun r;
    r.cfg = perturbed_cfg(n, Scheme::spectral);
    r.cfg.route = route;
    r.cfg.kmax = kmax;
    r.cfg.dt = dt;
    r.cfg.shi_time = 0.05;
    r.cfg.monitors = {"shi"};
    r.cfg.monitor_every = every;
    // the velocity-form trajectory carries non-coclosed roundoff modes that
    // are roughly twice as stiff as the coclosed dynamics, so the cfl-derived
    // step at c_cfl = 0.5 puts them outside the rk4 stability region; the
    // pinned dt keeps the whole spectrum inside.  The surviving drift sits at
    // the discretization floor, under the loosened guard.  The primary
    // trajectory is discretely d-exact and is checked at 1e-8 elsewhere.
    r.cfg.coclosed_threshold = 1e-6;
    try {
        DerivOps ops = make_ops(r.cfg);
        FlowState s0 =
            make_state(build_initial(r.cfg, ops), 0.0, r.cfg.a, ops);
        r.m0 = std::sqrt(lambda_field(s0.cache, ops).sup);
        // at t = 0 only the k = 0 squares and k = 1 tilde terms are valid,
        // so a depth-1 ladder carries the full aggregate
        r.agg0 =
            aggregates(shi_sequences(s0.psi, s0.cache, ops, 0.0, 1), r.cfg.a)
                .total;
        r.art = execute(r.cfg);
        r.ok = !r.art.aborted;
        if (r.art.aborted) r.err = r.art.abort_message;
    } catch (const std::exception& e) {
        r.err = e.what();
    }
    return r;
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::io_error, "cannot read '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

bool same_bits(const TensorField& a, const TensorField& b) {
    return a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(),
                       a.data.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// the nine criteria

void c1_identities(CriterionResult& r) {
    Mix rng{101};
    double worst_id = 0.0, worst_phi = 0.0, worst_psi = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        PointForm phi = random_positive_phi(rng);
        auto mfp = metric_from_phi(phi);
        const Metric& m = mfp->metric;
        PointForm psi = hodge_star(phi, m);
        worst_id = std::fmax(worst_id, identity_residuals(phi, psi, m).max());
        worst_phi = std::fmax(
            worst_phi, std::fabs(norm2_tensor(phi, m) - 42.0) / 42.0);
        worst_psi = std::fmax(
            worst_psi, std::fabs(norm2_tensor(psi, m) - 168.0) / 168.0);
    }
    r.passed = worst_id <= 1e-10 && worst_phi <= 1e-10 && worst_psi <= 1e-10;
    r.detail = "identity residual " + fmtg(worst_id) + ", |phi|^2 rel err " +
               fmtg(worst_phi) + ", |psi|^2 rel err " + fmtg(worst_psi) +
               " over 1000 forms";
}

void c2_torsion_relations(CriterionResult& r) {
    auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = perturbed_cfg(64, Scheme::spectral);
    DerivOps ops = make_ops(cfg);
    FlowState s = make_state(build_initial(cfg, ops), 0.0, cfg.a, ops);
    double res_spec = dpsi_substitution_residual(s, ops);
    double sym = coclosed_symmetry_check(s.cache.torsion, s.psi, ops, 1e-6);

    double res_fd[2];
    for (int i = 0; i < 2; ++i) {
        RunConfig c2 = perturbed_cfg(i == 0 ? 16 : 32, Scheme::fd4);
        DerivOps o2 = make_ops(c2);
        FlowState s2 = make_state(build_initial(c2, o2), 0.0, c2.a, o2);
        res_fd[i] = dpsi_substitution_residual(s2, o2);
    }
    double order = std::log2(res_fd[0] / res_fd[1]);
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    r.passed = (res_spec <= 1e-10 || order >= 3.5) && sym <= 1e-10 &&
               secs < 60.0;
    r.detail = "spectral residual " + fmtg(res_spec) + ", fd4 order " +
               fmtg(order) + ", symmetry defect " + fmtg(sym);
}

void c3_split_round_trip(CriterionResult& r) {
    Mix rng{202};
    double worst_rt = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        PointForm phi = random_positive_phi(rng);
        const Metric& m = metric_from_phi(phi)->metric;
        double t_in[49], t_out[49];
        for (double& v : t_in) v = rng.sym();
        TorsionSplitNode f = split_torsion_node(t_in, phi, m);
        reconstruct_torsion_node(f, phi, m, t_out);
        for (int i = 0; i < 49; ++i)
            worst_rt = std::fmax(worst_rt, std::fabs(t_out[i] - t_in[i]));
    }

    RunConfig cfg = perturbed_cfg(64, Scheme::spectral);
    DerivOps ops = make_ops(cfg);
    FlowState s = make_state(build_initial(cfg, ops), 0.0, cfg.a, ops);
    TorsionSplit sp = split_torsion(s.cache.torsion, s.cache.phi, s.cache.m);
    double tau1 = sup_abs(sp.tau1), tau2 = sup_abs(sp.tau2);
    r.passed = worst_rt <= 1e-11 && tau1 <= 1e-8 && tau2 <= 1e-8;
    r.detail = "round trip " + fmtg(worst_rt) + " over 1000 tensors; coclosed "
               "|tau1| " + fmtg(tau1) + ", |tau2| " + fmtg(tau2);
}

void c4_fixed_point(CriterionResult& r) {
    Grid g;
    g.dims[0] = 8;
    DerivOps ops(g, Scheme::spectral);
    TensorField psi0 = constant_form_field(g, standard_psi());
    double worst = 0.0;
    for (double a : {0.5, 1.0, 2.0}) {
        FlowState s = make_state(psi0, 0.0, a, ops);
        for (int k = 0; k < 100; ++k) step(s, 1e-3, kDirect, ops);
        worst = std::fmax(worst, sup_diff(s.psi, psi0));
    }
    r.passed = worst <= 1e-10;
    r.detail = "sup drift " + fmtg(worst) +
               " after 100 steps at each flow constant";
}

void c5_route_consistency(CriterionResult& r, const ReferenceRun& ref) {
    double gap[2];
    for (int i = 0; i < 2; ++i) {
        RunConfig cfg = perturbed_cfg(i == 0 ? 32 : 64, Scheme::fd4);
        DerivOps ops = make_ops(cfg);
        FlowState s = make_state(build_initial(cfg, ops), 0.0, cfg.a, ops);
        gap[i] = sup_diff(psi_rate_direct(s, ops), velocity(s, ops).psi_rate);
    }
    double order_gap = std::log2(gap[0] / gap[1]);

    bool golden_ok = ref.ok && ref.art.final_gap <= kGoldenRouteGap;

    RunConfig cfg = perturbed_cfg(16, Scheme::spectral);
    DerivOps ops = make_ops(cfg);
    TensorField psi0 = build_initial(cfg, ops);
    TensorField end[3];
    for (int i = 0; i < 3; ++i) {
        int steps = 8 << i;
        double dt = 8e-3 / steps;
        FlowState s = make_state(psi0, 0.0, cfg.a, ops);
        for (int k = 0; k < steps; ++k) step(s, dt, kDirect, ops);
        end[i] = std::move(s.psi);
    }
    double e1 = sup_diff(end[0], end[1]), e2 = sup_diff(end[1], end[2]);
    double order_rk = std::log2(e1 / e2);

    r.passed = order_gap >= 3.5 && golden_ok && order_rk >= 3.5;
    r.detail = "rate-gap order " + fmtg(order_gap) + ", end-state gap " +
               (ref.ok ? fmtg(ref.art.final_gap) : "(" + ref.err + ")") +
               " vs ceiling " + fmtg(kGoldenRouteGap) + ", rk4 order " +
               fmtg(order_rk);
}

void c6_structure_preservation(CriterionResult& r) {
    RunConfig cfg = perturbed_cfg(16, Scheme::spectral);
    DerivOps ops = make_ops(cfg);
    FlowState s = make_state(build_initial(cfg, ops), 0.0, cfg.a, ops);
    double worst_dpsi = 0.0;
    double min_eig = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 20; ++k) {
        step(s, 1e-3, kDirect, ops);
        worst_dpsi = std::fmax(worst_dpsi, coclosed_residual(s.psi, ops));
        min_eig = std::fmin(min_eig, monitor_row(s, ops, k, 1e-3, 0.0).min_eig);
    }

    RunConfig c32 = perturbed_cfg(32, Scheme::spectral);
    DerivOps o32 = make_ops(c32);
    FlowState s32 = make_state(build_initial(c32, o32), 0.0, c32.a, o32);
    double r1 = metric_velocity_residual(s32, 2e-3, kDirect, o32);
    double r2 = metric_velocity_residual(s32, 1e-3, kDirect, o32);
    double order = std::log2(r1 / r2);

    r.passed = worst_dpsi <= 1e-8 && min_eig > 0.0 && order >= 1.7;
    r.detail = "sup |d psi| " + fmtg(worst_dpsi) + ", min metric eig " +
               fmtg(min_eig) + ", metric-velocity order " + fmtg(order);
}

void c7_commutator(CriterionResult& r) {
    Grid g;
    g.dims[0] = 16;
    DerivOps ops(g, Scheme::spectral);
    FlowState flat =
        make_state(constant_form_field(g, standard_psi()), 0.0, 1.0, ops);
    CommutatorReport rep =
        commutator_monitor(wave_one_form(g, 0.1), flat.cache.m,
                           flat.cache.conn, flat.cache.curv, ops, 1);
    bool flat_ok = rep.lhs_sup <= 1e-10;

    double w16 = conformal_commutator_gap(16, Scheme::fd4);
    double w32 = conformal_commutator_gap(32, Scheme::fd4);
    double order = std::log2(w16 / w32);

    double chat[2];
    for (int i = 0; i < 2; ++i) {
        Conformal c = make_conformal(i == 0 ? 16 : 32, 0.25, 1);
        DerivOps o(c.grid, Scheme::spectral);
        ConnectionField conn = levi_civita(c.m, o);
        CurvatureField curv = riemann(c.m, conn, o);
        chat[i] = commutator_monitor(wave_one_form(c.grid, 1.0), c.m, conn,
                                     curv, o, 1)
                      .c_hat;
    }
    double ratio = chat[0] / chat[1];

    r.passed = flat_ok && order >= 3.5 && ratio > 0.5 && ratio < 2.0;
    r.detail = "flat lhs " + fmtg(rep.lhs_sup) + ", conformal fd4 order " +
               fmtg(order) + ", constant ratio under doubling " + fmtg(ratio);
}

void c8_ladders_and_fit(CriterionResult& r, const ReferenceRun& ref,
                        const ReferenceRun& ref2, double ref_seconds) {
    auto t0 = std::chrono::steady_clock::now();
    if (!ref.ok || !ref2.ok) {
        r.passed = false;
        r.detail = "reference run failed: " + (ref.ok ? ref2.err : ref.err);
        return;
    }

    bool sample_ok = ref.art.have_sample && ref.art.sample.kmax == 4;
    if (sample_ok)
        for (int k = 0; k <= 4; ++k)
            for (const auto* seq :
                 {&ref.art.sample.a, &ref.art.sample.b, &ref.art.sample.c,
                  &ref.art.sample.d})
                sample_ok = sample_ok && (*seq)[k].valid && !(*seq)[k].noise &&
                            std::isfinite((*seq)[k].value);

    std::vector<ShiSequences> synth(2);
    for (int i = 0; i < 2; ++i) {
        ShiSequences& s = synth[i];
        s.t = 0.01 * (i + 1);
        s.kmax = 4;
        for (int k = 0; k <= 4; ++k) {
            ShiEntry a;
            a.value = 3.0 * std::pow(2.0, 0.5 * k);
            s.a.push_back(a);
            ShiEntry b;
            b.value = 0.0;
            s.b.push_back(b);
            s.c.push_back(b);
            s.d.push_back(b);
        }
    }
    AnalyticityFit sf = fit_analyticity(synth);
    bool synth_ok = !sf.degenerate && std::fabs(sf.c_fit - 3.0) <= 1e-10 &&
                    std::fabs(sf.l_fit - 2.0) <= 1e-10;

    // grid stability is judged on depth-matched pools: the doubled run
    // carries ladders to k = 2, so the reference ladders are truncated to
    // the same depth before fitting
    std::vector<ShiSequences> trunc = ref.art.ladders;
    for (ShiSequences& sq : trunc)
        if (sq.kmax > 2) {
            sq.kmax = 2;
            sq.a.resize(3);
            sq.b.resize(3);
            sq.c.resize(3);
            sq.d.resize(3);
        }
    AnalyticityFit f64 = fit_analyticity(trunc);
    bool fits_ok = ref.art.have_fit && ref2.art.have_fit &&
                   !ref.art.fit.degenerate && !ref2.art.fit.degenerate &&
                   !f64.degenerate && f64.l_fit > 0.0;
    double shift = fits_ok ? std::fabs(ref2.art.fit.l_fit - f64.l_fit) /
                                 f64.l_fit
                           : std::numeric_limits<double>::infinity();
    bool stable_ok = fits_ok && shift < 0.2;

    // the aggregate stays below its ceiling curve wherever the curve is
    // finite; past the window the ceiling is infinite and constrains nothing
    double a_const = ref.cfg.a;
    double cfit = fits_ok ? ref.art.fit.c_fit : 0.0;
    bool env_ok = fits_ok &&
                  ref.agg0 <= aggregate_envelope(0.0, ref.m0, a_const, cfit);
    if (env_ok)
        for (const ShiSequences& seq : ref.art.ladders)
            env_ok = env_ok &&
                     aggregates(seq, a_const).total <=
                         aggregate_envelope(seq.t, ref.m0, a_const, cfit);

    double secs = ref_seconds + std::chrono::duration<double>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count();
    r.passed = sample_ok && synth_ok && stable_ok && env_ok && secs < 300.0;
    r.detail = std::string("full-depth ladder ") +
               (sample_ok ? "clean" : "flagged") + ", synthetic fit (" +
               fmtg(sf.c_fit) + ", " + fmtg(sf.l_fit) + "), L shift " +
               fmtg(shift) + " under doubling, envelope " +
               (env_ok ? "respected" : "violated");
}

void c9_determinism(CriterionResult& r, const std::string& scratch) {
    namespace fs = std::filesystem;
    fs::create_directories(scratch);
    auto at = [&](const char* n) { return (fs::path(scratch) / n).string(); };

    RunConfig cfg;
    cfg.dims[0] = 8;
    cfg.t_end = 6e-3;
    cfg.dt = 1e-3;
    cfg.init = InitKind::perturbation;
    cfg.amplitude = 0.005;
    cfg.modes = {1};
    cfg.seed = 21;
    cfg.seed_set = true;
    cfg.monitors.clear();
    cfg.report_out.clear();
    cfg.checkpoint_every = 3;

    cfg.series_out = at("w2.csv");
    cfg.checkpoint_out = at("w2.ck");
    cfg.workers = 2;
    RunArtifacts a2 = execute(cfg);

    cfg.series_out = at("w5.csv");
    cfg.checkpoint_out = at("w5.ck");
    cfg.workers = 5;
    RunArtifacts a5 = execute(cfg);

    bool workers_ok = !a2.aborted && !a5.aborted &&
                      same_bits(a2.state.psi, a5.state.psi) &&
                      read_bytes(at("w2.ck")) == read_bytes(at("w5.ck"));

    Checkpoint mid = load_checkpoint(at("w2.ck") + ".3");
    cfg.series_out = at("r.csv");
    cfg.checkpoint_out = at("r.ck");
    cfg.workers = 3;
    RunArtifacts ar = execute_resumed(cfg, mid);
    bool resume_ok = !ar.aborted && same_bits(ar.state.psi, a2.state.psi) &&
                     read_bytes(at("r.ck")) == read_bytes(at("w2.ck"));

    r.passed = workers_ok && resume_ok;
    r.detail = std::string("worker invariance ") +
               (workers_ok ? "bit-exact" : "BROKEN") + ", resume " +
               (resume_ok ? "bit-exact" : "BROKEN");
}

}  // namespace

std::vector<CriterionResult> run_acceptance(
    const std::string& scratch_dir,
    const std::function<bool(const CriterionResult&)>& progress) {
    auto tr0 = std::chrono::steady_clock::now();
    // commensurate steps and cadences: rows of both runs land on the same
    // times, so the pooled fits see matched samples of the decaying ladder
    // dt scales with the squared spacing so both grids run the same
    // normalized step, safely inside the rk4 stability region for the top
    // spatial mode (the velocity-form trajectory is the stiffest client)
    ReferenceRun ref64 =
        make_reference(64, 4, 4, RouteChoice::both, 1.6e-3);
    ReferenceRun ref128 =
        make_reference(128, 2, 16, RouteChoice::direct, 4e-4);
    double ref_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - tr0)
                             .count();

    std::vector<CriterionResult> out;
    auto run = [&](int idx, const char* name,
                   const std::function<void(CriterionResult&)>& fn) {
        CriterionResult r;
        r.index = idx;
        r.name = name;
        auto t0 = std::chrono::steady_clock::now();
        try {
            fn(r);
        } catch (const std::exception& e) {
            r.passed = false;
            r.detail = e.what();
        }
        r.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
        out.push_back(std::move(r));
    };

    run(1, "pointwise contraction identities", c1_identities);
    run(2, "torsion relation cross-check", c2_torsion_relations);
    run(3, "torsion split round trip", c3_split_round_trip);
    run(4, "flat structure is a fixed point", c4_fixed_point);
    run(5, "route consistency",
        [&](CriterionResult& r) { c5_route_consistency(r, ref64); });
    run(6, "structure preservation along runs", c6_structure_preservation);
    run(7, "derivative commutator monitor", c7_commutator);
    run(8, "derivative ladders and analyticity fit", [&](CriterionResult& r) {
        c8_ladders_and_fit(r, ref64, ref128, ref_seconds);
    });
    out.back().seconds += ref_seconds;
    run(9, "determinism and persistence",
        [&](CriterionResult& r) { c9_determinism(r, scratch_dir); });
    return out;
}

}  // namespace g2cf
