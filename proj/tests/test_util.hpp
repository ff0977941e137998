// Shared helpers for the test suites: a deterministic RNG (so expected values
// never depend on the standard library's distribution internals) and
// generators for random metrics and positive 3-forms.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "g2coflow/field.hpp"
#include "g2coflow/forms.hpp"
#include "g2coflow/grid.hpp"

namespace testutil {

struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed) {}
    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double sym() { return 2.0 * uniform() - 1.0; }
};

inline g2cf::PointForm random_form(int degree, Rng& rng, double scale = 1.0) {
    g2cf::PointForm f(degree);
    for (int c = 0; c < f.size(); ++c) f.comp[c] = scale * rng.sym();
    return f;
}

inline g2cf::Metric random_metric(Rng& rng, double skew = 1.0) {
    Eigen::Matrix<double, 7, 7> a;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) a(i, j) = skew * rng.sym();
    Eigen::Matrix<double, 7, 7> g = a.transpose() * a +
                                    Eigen::Matrix<double, 7, 7>::Identity() * 0.8;
    g2cf::Mat7 m{};
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) m[i * 7 + j] = g(i, j);
    return *g2cf::Metric::from_matrix(m);
}

// rejection sampling anchored at the standard form: scaled, perturbed, and
// pushed around by a well-conditioned linear map (positivity is preserved
// under pullback by invertible maps with positive determinant)
inline g2cf::PointForm random_positive_phi(Rng& rng) {
    for (;;) {
        double c = 0.5 + 1.5 * rng.uniform();
        g2cf::PointForm phi = c * g2cf::standard_phi();
        g2cf::PointForm pert = random_form(3, rng, 0.35 * c * rng.uniform());
        phi = phi + pert;
        if (g2cf::metric_from_phi(phi)) return phi;
    }
}

inline g2cf::Grid grid1(int axis, int n, double len = 6.283185307179586476925) {
    g2cf::Grid g;
    g.dims[axis] = n;
    g.lengths[axis] = len;
    return g;
}

inline g2cf::Grid grid2(int axis_a, int na, int axis_b, int nb) {
    g2cf::Grid g;
    g.dims[axis_a] = na;
    g.dims[axis_b] = nb;
    return g;
}

// Band-limited random form field: per component, a sum of low-mode waves
// along each active axis plus one product wave per axis pair, so data varies
// genuinely in every active direction and also jointly.
inline g2cf::TensorField random_band_form(Rng& rng, const g2cf::Grid& g,
                                          int degree, int max_mode,
                                          double amp) {
    g2cf::TensorField f = g2cf::form_field(g, degree);
    int nc = g2cf::kCompCount[degree];
    constexpr double tau = 6.283185307179586476925;
    struct Wave {
        int axis, mode;
        double a, b;
    };
    struct Cross {
        int ax1, ax2, m1, m2;
        double a, p1, p2;
    };
    for (int c = 0; c < nc; ++c) {
        std::vector<Wave> waves;
        std::vector<Cross> crosses;
        double base = amp * rng.sym();
        for (int ax = 0; ax < 7; ++ax) {
            if (!g.active(ax)) continue;
            for (int m = 1; m <= max_mode; ++m)
                waves.push_back({ax, m, amp * rng.sym(), amp * rng.sym()});
            for (int bx = ax + 1; bx < 7; ++bx) {
                if (!g.active(bx)) continue;
                crosses.push_back({ax, bx, 1 + int(rng.uniform() * max_mode),
                                   1 + int(rng.uniform() * max_mode),
                                   amp * rng.sym(), tau * rng.uniform(),
                                   tau * rng.uniform()});
            }
        }
        for (int64_t n = 0; n < g.nodes(); ++n) {
            auto co = g.coords(n);
            double v = base;
            for (const Wave& w : waves) {
                double x = tau * w.mode * co[w.axis] / g.dims[w.axis];
                v += w.a * std::sin(x) + w.b * std::cos(x);
            }
            for (const Cross& x : crosses) {
                double x1 = tau * x.m1 * co[x.ax1] / g.dims[x.ax1] + x.p1;
                double x2 = tau * x.m2 * co[x.ax2] / g.dims[x.ax2] + x.p2;
                v += x.a * std::sin(x1) * std::cos(x2);
            }
            f.node(n)[c] = v;
        }
    }
    return f;
}

}  // namespace testutil
