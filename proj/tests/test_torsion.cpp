#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <vector>

#include "g2coflow/errors.hpp"
#include "g2coflow/exterior.hpp"
#include "g2coflow/field.hpp"
#include "g2coflow/geometry.hpp"
#include "g2coflow/parallel.hpp"
#include "g2coflow/torsion.hpp"
#include "test_util.hpp"

using namespace g2cf;
using testutil::grid1;
using testutil::grid2;
using testutil::random_band_form;
using testutil::Rng;

namespace {

double sup_diff(const TensorField& a, const TensorField& b) {
    double r = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        r = std::fmax(r, std::fabs(a.data[i] - b.data[i]));
    return r;
}

/// A full G2-structure field: the 3-form, its dual, and the induced metric.
struct Structure {
    TensorField phi;
    TensorField psi;
    MetricField m;
};

/// Structure generated from a positive 3-form field; the 4-form is its
/// nodewise Hodge dual, so the pair is exactly compatible but in general
/// not coclosed.
Structure structure_from_phi(TensorField phif) {
    MetricField m = metric_field_from_phi(phif);
    TensorField psif = form_field(phif.grid, 4);
    for (int64_t n = 0; n < phif.grid.nodes(); ++n)
        set_form(psif, n, hodge_star(form_at(phif, n), m.at(n)));
    return {std::move(phif), std::move(psif), std::move(m)};
}

/// Structure recovered from a 4-form field (nodewise 3-form recovery).
Structure structure_from_psi(const TensorField& psif) {
    TensorField phif = form_field(psif.grid, 3);
    for (int64_t n = 0; n < psif.grid.nodes(); ++n) {
        auto r = phi_from_psi(form_at(psif, n), standard_phi(), 1e-13, 80);
        REQUIRE(r.has_value());
        set_form(phif, n, r->phi);
    }
    MetricField m = metric_field_from_phi(phif);
    return {std::move(phif), psif, std::move(m)};
}

/// The standard structure plus a band-limited 3-form perturbation.
Structure perturbed_structure(const Grid& g, uint64_t seed, double amp,
                              int max_mode = 2) {
    Rng rng(seed);
    TensorField phif = constant_form_field(g, standard_phi());
    axpy(phif, 1.0, random_band_form(rng, g, 3, max_mode, amp));
    return structure_from_phi(std::move(phif));
}

/// Coclosed state: the standard 4-form plus an exact band-limited piece.
TensorField coclosed_psi(const Grid& g, uint64_t seed, double amp,
                         const DerivOps& ops, int max_mode = 2) {
    Rng rng(seed);
    TensorField psif = constant_form_field(g, standard_psi());
    TensorField beta = random_band_form(rng, g, 3, max_mode, amp);
    axpy(psif, 1.0, exterior_d(beta, ops));
    return psif;
}

// ---------------------------------------------------------------------------
// Independent oracle: torsion fitted from the derivative of the 4-form.
//
// nabla_m psi_ijkl = -(T_mi phi_jkl - T_mj phi_ikl - T_mk phi_jil
//                      - T_ml phi_jki)
//
// is, for each node and each derivative direction m, an overdetermined
// linear system: 35 equations (increasing ijkl) in the 7 unknowns T_mn.
// Solving it by least squares uses only nabla psi and phi -- never the
// production contraction, which reads nabla phi and psi.
// ---------------------------------------------------------------------------

struct DpsiFit {
    TensorField t;        // fitted T_ij, shape [lower, lower]
    double fit_residual;  // sup over nodes of the per-row equation residual
};

DpsiFit torsion_from_dpsi_fit(const Structure& s, const ConnectionField& conn,
                              const DerivOps& ops) {
    const auto& tb = FormTables::get();
    TensorField dpsi = covariant_derivative(s.psi, conn, ops);
    DpsiFit out{TensorField(s.phi.grid, TensorShape{{1, -1}, {1, -1}}), 0.0};
    for (int64_t n = 0; n < s.phi.grid.nodes(); ++n) {
        PointForm ph = form_at(s.phi, n);
        Eigen::Matrix<double, 35, 7> a = Eigen::Matrix<double, 35, 7>::Zero();
        for (int c = 0; c < 35; ++c) {
            const auto& t = tb.tuples[4][c];
            uint8_t i = t[0], j = t[1], k = t[2], l = t[3];
            uint8_t jkl[3] = {j, k, l}, ikl[3] = {i, k, l};
            uint8_t jil[3] = {j, i, l}, jki[3] = {j, k, i};
            a(c, i) -= ph.at(jkl);
            a(c, j) += ph.at(ikl);
            a(c, k) += ph.at(jil);
            a(c, l) += ph.at(jki);
        }
        auto qr = a.colPivHouseholderQr();
        REQUIRE(qr.rank() == 7);
        for (int mr = 0; mr < 7; ++mr) {
            Eigen::Matrix<double, 35, 1> b;
            std::memcpy(b.data(), dpsi.node(n) + mr * 35, 35 * sizeof(double));
            Eigen::Matrix<double, 7, 1> x = qr.solve(b);
            out.fit_residual = std::fmax(
                out.fit_residual, (a * x - b).cwiseAbs().maxCoeff());
            for (int q = 0; q < 7; ++q) out.t.node(n)[mr * 7 + q] = x(q);
        }
    }
    return out;
}

/// Direct residual of the 3-form derivative identity,
/// sup |nabla_i phi_jkl - T_i^m psi_mjkl|, with T_i^m raised from the
/// production tensor.
double dphi_substitution_residual(const Structure& s, const TorsionTensor& t,
                                  const ConnectionField& conn,
                                  const DerivOps& ops) {
    const auto& tb = FormTables::get();
    TensorField dphi = covariant_derivative(s.phi, conn, ops);
    double res = 0.0;
    for (int64_t n = 0; n < s.phi.grid.nodes(); ++n) {
        PointForm ps = form_at(s.psi, n);
        const Metric& mm = s.m.at(n);
        const double* tl = t.t.node(n);
        double tmix[49];
        for (int i = 0; i < 7; ++i)
            for (int q = 0; q < 7; ++q) {
                double v = 0.0;
                for (int p = 0; p < 7; ++p)
                    v += tl[i * 7 + p] * mm.inv[p * 7 + q];
                tmix[i * 7 + q] = v;
            }
        for (int i = 0; i < 7; ++i) {
            const double* row = dphi.node(n) + i * 35;
            for (int c = 0; c < 35; ++c) {
                const auto& tp = tb.tuples[3][c];
                double want = 0.0;
                for (uint8_t q = 0; q < 7; ++q) {
                    uint8_t idx[4] = {q, tp[0], tp[1], tp[2]};
                    want += tmix[i * 7 + q] * ps.at(idx);
                }
                res = std::fmax(res, std::fabs(row[c] - want));
            }
        }
    }
    return res;
}

double sup_skew(const TensorField& t) {
    double r = 0.0;
    for (int64_t n = 0; n < t.grid.nodes(); ++n) {
        const double* p = t.node(n);
        for (int i = 0; i < 7; ++i)
            for (int j = i + 1; j < 7; ++j)
                r = std::fmax(r, std::fabs(p[i * 7 + j] - p[j * 7 + i]));
    }
    return r;
}

}  // namespace

TEST_CASE("flat structure has exactly zero torsion") {
    for (Scheme sc : {Scheme::spectral, Scheme::fd4}) {
        Grid g = grid2(0, 8, 4, 6);
        TensorField phif = constant_form_field(g, standard_phi());
        TensorField psif = constant_form_field(g, standard_psi());
        MetricField m = metric_field_from_phi(phif);
        DerivOps ops(g, sc);
        ConnectionField conn = levi_civita(m, ops);
        TorsionTensor t = full_torsion(phif, psif, m, conn, ops);
        CHECK(t.t.sup_abs() == 0.0);
        CHECK(t.trace.sup_abs() == 0.0);
        TorsionSplit sp = split_torsion(t, phif, m);
        CHECK(sp.tau0.sup_abs() == 0.0);
        CHECK(sp.tau1.sup_abs() == 0.0);
        CHECK(sp.tau2.sup_abs() == 0.0);
        CHECK(sp.tau3.sup_abs() == 0.0);
    }
}

TEST_CASE("torsion from the 3-form route matches the 4-form fit") {
    Structure s = perturbed_structure(grid1(2, 32), 91, 5e-3);
    DerivOps ops(s.phi.grid, Scheme::spectral);
    ConnectionField conn = levi_civita(s.m, ops);
    TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
    DpsiFit fit = torsion_from_dpsi_fit(s, conn, ops);
    CHECK(fit.fit_residual <= 1e-10);
    CHECK(sup_diff(t.t, fit.t) <= 1e-10);
    // the structure is not coclosed, so the skew part must be genuinely
    // nonzero -- otherwise the cross-check would not see the tau1/tau2 space
    CHECK(sup_skew(t.t) >= 1e-5);
}

TEST_CASE("route agreement converges at fourth order for fd4") {
    double err[2];
    for (int r = 0; r < 2; ++r) {
        int n = r == 0 ? 16 : 32;
        Structure s = perturbed_structure(grid1(3, n), 91, 5e-3);
        DerivOps ops(s.phi.grid, Scheme::fd4);
        ConnectionField conn = levi_civita(s.m, ops);
        TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
        DpsiFit fit = torsion_from_dpsi_fit(s, conn, ops);
        err[r] = sup_diff(t.t, fit.t);
    }
    double order = std::log2(err[0] / err[1]);
    CHECK(order >= 3.5);
}

TEST_CASE("recovered torsion reproduces the 3-form derivative") {
    Structure s = perturbed_structure(grid1(5, 32), 17, 5e-3);
    DerivOps ops(s.phi.grid, Scheme::spectral);
    ConnectionField conn = levi_civita(s.m, ops);
    TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
    CHECK(dphi_substitution_residual(s, t, conn, ops) <= 1e-10);

    // trace field is the metric trace of T (algebraic, any structure)
    for (int64_t n = 0; n < s.phi.grid.nodes(); ++n) {
        const Metric& mm = s.m.at(n);
        const double* tl = t.t.node(n);
        double tr = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) tr += mm.inv[i * 7 + j] * tl[i * 7 + j];
        CHECK(std::fabs(t.trace.node(n)[0] - tr) <= 1e-13);
    }
}

TEST_CASE("coclosed structures have symmetric torsion and no skew forms") {
    Grid g = grid1(1, 32);
    DerivOps ops(g, Scheme::spectral);
    Structure s = structure_from_psi(coclosed_psi(g, 23, 1e-2, ops));
    CHECK(coclosed_residual(s.psi, ops) <= 1e-12);
    ConnectionField conn = levi_civita(s.m, ops);
    TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
    CHECK(coclosed_symmetry_check(t, s.psi, ops, 1e-8) <= 1e-9);

    TorsionSplit sp = split_torsion(t, s.phi, s.m);
    CHECK(sp.tau1.sup_abs() <= 1e-9);
    CHECK(sp.tau2.sup_abs() <= 1e-9);
    // the state is genuinely non-flat: scalar and traceless parts alive
    CHECK(sp.tau0.sup_abs() >= 1e-4);
    CHECK(sp.tau3.sup_abs() >= 1e-4);

    // trace relation tr_g T = (7/4) tau0 is algebraic
    for (int64_t n = 0; n < g.nodes(); ++n)
        CHECK(std::fabs(t.trace.node(n)[0] -
                        1.75 * sp.tau0.node(n)[0]) <= 1e-12);

    TensorField back = reconstruct_torsion(sp, s.phi, s.m);
    CHECK(sup_diff(back, t.t) <= 1e-11);
}

TEST_CASE("symmetry defect of a coclosed state converges at fourth order") {
    double err[2];
    for (int r = 0; r < 2; ++r) {
        int n = r == 0 ? 16 : 32;
        Grid g = grid1(1, n);
        DerivOps ops(g, Scheme::fd4);
        Structure s = structure_from_psi(coclosed_psi(g, 23, 1e-2, ops));
        ConnectionField conn = levi_civita(s.m, ops);
        TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
        err[r] = sup_skew(t.t);
    }
    double order = std::log2(err[0] / err[1]);
    CHECK(order >= 3.5);
}

TEST_CASE("pure trace tensors split onto the scalar component alone") {
    Metric id = Metric::identity();
    const PointForm& ph = standard_phi();
    double c = 1.7;
    double tl[49] = {};
    for (int i = 0; i < 7; ++i) tl[i * 7 + i] = 0.25 * c;
    TorsionSplitNode sp = split_torsion_node(tl, ph, id);
    CHECK(std::fabs(sp.tau0 - c) <= 1e-15);
    for (int i = 0; i < 7; ++i) CHECK(std::fabs(sp.tau1[i]) <= 1e-15);
    CHECK(sup_comp(sp.tau2) <= 1e-15);
    for (int i = 0; i < 49; ++i) CHECK(std::fabs(sp.tau3[i]) <= 1e-15);
}

TEST_CASE("split and reconstruction round-trip arbitrary 2-tensors") {
    Rng rng(5);
    Metric id = Metric::identity();
    const auto& tb = FormTables::get();
    for (int trial = 0; trial < 1000; ++trial) {
        // half the trials on the standard structure, half on random
        // positive 3-forms with their induced metrics
        PointForm ph;
        Metric mm;
        if (trial % 2 == 0) {
            ph = standard_phi();
            mm = id;
        } else {
            ph = testutil::random_positive_phi(rng);
            mm = metric_from_phi(ph)->metric;
        }
        double tl[49];
        for (int i = 0; i < 49; ++i) tl[i] = rng.sym();

        TorsionSplitNode sp = split_torsion_node(tl, ph, mm);
        double back[49];
        reconstruct_torsion_node(sp, ph, mm, back);
        for (int i = 0; i < 49; ++i) CHECK(std::fabs(back[i] - tl[i]) <= 1e-11);

        // tau3 symmetric and metric-traceless
        double tr = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j) {
                tr += mm.inv[i * 7 + j] * sp.tau3[i * 7 + j];
                CHECK(std::fabs(sp.tau3[i * 7 + j] - sp.tau3[j * 7 + i]) <=
                      1e-13);
            }
        CHECK(std::fabs(tr) <= 1e-11);

        // tau2 stays in the 14-dimensional eigenspace
        ProjectionSplit p2 = project_2(sp.tau2, ph, mm);
        CHECK(sup_comp(p2.part_7) <= 1e-11);
        (void)tb;
    }
}

TEST_CASE("non-coclosed input trips the symmetry-check guard") {
    Grid g = grid1(0, 16);
    DerivOps ops(g, Scheme::spectral);
    Rng rng(3);
    // a band-limited 4-form that is not closed
    TensorField psif = constant_form_field(g, standard_psi());
    TensorField junk = random_band_form(rng, g, 4, 2, 1e-3);
    axpy(psif, 1.0, junk);
    double r1 = coclosed_residual(psif, ops);
    CHECK(r1 >= 1e-5);

    Structure s = structure_from_psi(psif);
    ConnectionField conn = levi_civita(s.m, ops);
    TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
    CHECK_THROWS_AS((void)coclosed_symmetry_check(t, s.psi, ops, 1e-8), Error);
    try {
        (void)coclosed_symmetry_check(t, s.psi, ops, 1e-8);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_coclosed);
    }

    // residual is linear in the amplitude of the non-exact piece
    TensorField psif2 = constant_form_field(g, standard_psi());
    axpy(psif2, 2.0, junk);
    double r2 = coclosed_residual(psif2, ops);
    CHECK(std::fabs(r2 / r1 - 2.0) <= 1e-6);
}

TEST_CASE("torsion pipeline is bit-identical across worker counts") {
    Structure s = perturbed_structure(grid2(1, 12, 6, 10), 77, 1e-2);
    DerivOps ops(s.phi.grid, Scheme::fd4);
    std::vector<std::vector<double>> results;
    for (int workers : {1, 5}) {
        set_worker_count(workers);
        ConnectionField conn = levi_civita(s.m, ops);
        TorsionTensor t = full_torsion(s.phi, s.psi, s.m, conn, ops);
        TorsionSplit sp = split_torsion(t, s.phi, s.m);
        std::vector<double> blob;
        auto app = [&](const TensorField& f) {
            blob.insert(blob.end(), f.data.begin(), f.data.end());
        };
        app(t.t);
        app(t.trace);
        app(sp.tau0);
        app(sp.tau1);
        app(sp.tau2);
        app(sp.tau3);
        results.push_back(std::move(blob));
    }
    set_worker_count(0);
    REQUIRE(results[0].size() == results[1].size());
    CHECK(std::memcmp(results[0].data(), results[1].data(),
                      results[0].size() * sizeof(double)) == 0);
}
