#include "g2coflow/derivatives.hpp"

#include <cmath>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

const char* to_string(Scheme s) {
    return s == Scheme::spectral ? "spectral" : "fd4";
}

DerivOps::DerivOps(const Grid& g, Scheme s) : grid(g), scheme(s) {
    for (int a = 0; a < 7; ++a) {
        if (!g.active(a)) continue;
        int n = g.dims[a];
        if (s == Scheme::spectral) {
            if (n % 2 != 0)
                throw Error(ErrorCode::invalid_argument,
                            "spectral axes need an even node count");
            // weight of (f_{j+d} - f_{j-d}); the Nyquist column vanishes:
            // cot(pi/2) = 0
            double scale = 2.0 * kPi / g.lengths[a];
            for (int d = 1; 2 * d < n; ++d) {
                double sgn = d % 2 == 0 ? 1.0 : -1.0;
                taps[a].push_back(
                    {d, -scale * 0.5 * sgn / std::tan(d * kPi / n)});
            }
        } else {
            double h = g.spacing(a);
            taps[a].push_back({1, 8.0 / (12.0 * h)});
            taps[a].push_back({2, -1.0 / (12.0 * h)});
        }
    }
}

TensorField DerivOps::apply_axis(const TensorField& f, int axis) const {
    TensorField out(f.grid, f.shape);
    if (!grid.active(axis)) return out;
    const auto& tp = taps[axis];
    int n = grid.dims[axis];
    int64_t c = f.comps();
    int64_t sa = grid.strides()[axis];
    int64_t block = int64_t(n) * sa;
    int64_t lines = grid.nodes() / n;
    parallel_chunks(lines, 4, [&](int, int64_t lo, int64_t hi) {
        for (int64_t l = lo; l < hi; ++l) {
            int64_t base = (l / sa) * block + l % sa;
            for (int j = 0; j < n; ++j) {
                double* o = out.node(base + j * sa);
                for (const auto& [d, w] : tp) {
                    const double* ip = f.node(base + ((j + d) % n) * sa);
                    const double* im = f.node(base + ((j - d + n) % n) * sa);
                    for (int64_t k = 0; k < c; ++k)
                        o[k] += w * (ip[k] - im[k]);
                }
            }
        }
    });
    return out;
}

void DerivOps::deriv_at_node(const TensorField& f, int axis, int64_t node,
                             double* out) const {
    int64_t c = f.comps();
    for (int64_t k = 0; k < c; ++k) out[k] = 0.0;
    if (!grid.active(axis)) return;
    int n = grid.dims[axis];
    int64_t sa = grid.strides()[axis];
    int64_t block = int64_t(n) * sa;
    int64_t inner = node % sa;
    int64_t rest = node / sa;
    int j = static_cast<int>(rest % n);
    int64_t base = (rest / n) * block + inner;
    for (const auto& [d, w] : taps[axis]) {
        const double* ip = f.node(base + ((j + d) % n) * sa);
        const double* im = f.node(base + ((j - d + n) % n) * sa);
        for (int64_t k = 0; k < c; ++k) out[k] += w * (ip[k] - im[k]);
    }
}

double DerivOps::highband_fraction(const TensorField& f, int order) const {
    double high = 0.0, total = 0.0;
    double high0 = 0.0, total0 = 0.0;  // unamplified, for the junk floor
    int64_t c = f.comps();
    for (int a = 0; a < 7; ++a) {
        if (!grid.active(a)) continue;
        int n = grid.dims[a];
        int nyq = n / 2;
        // direct real DFT of every line and component; modes m = 0..n/2
        std::vector<double> cs(size_t(n) * (nyq + 1)), sn(cs.size());
        for (int j = 0; j < n; ++j)
            for (int m = 0; m <= nyq; ++m) {
                double ang = 2.0 * kPi * j * m / n;
                cs[size_t(j) * (nyq + 1) + m] = std::cos(ang);
                sn[size_t(j) * (nyq + 1) + m] = std::sin(ang);
            }
        int64_t sa = grid.strides()[a];
        int64_t block = int64_t(n) * sa;
        int64_t lines = grid.nodes() / n;
        double kappa1 = 2.0 * kPi / grid.lengths[a];
        for (int64_t l = 0; l < lines; ++l) {
            int64_t base = (l / sa) * block + l % sa;
            for (int64_t k = 0; k < c; ++k) {
                for (int m = 0; m <= nyq; ++m) {
                    double re = 0.0, im = 0.0;
                    for (int j = 0; j < n; ++j) {
                        double v = f.node(base + j * sa)[k];
                        re += v * cs[size_t(j) * (nyq + 1) + m];
                        im -= v * sn[size_t(j) * (nyq + 1) + m];
                    }
                    double mult = (m == 0 || 2 * m == n) ? 1.0 : 2.0;
                    double e = mult * (re * re + im * im);
                    total0 += e;
                    if (3 * m > n) high0 += e;
                    if (order > 0) e *= std::pow(kappa1 * m, 2 * order);
                    total += e;
                    if (3 * m > n) high += e;
                }
            }
        }
    }
    // below this, the high band is DFT roundoff of smooth data, not content
    if (high0 <= 1e-25 * total0) return 0.0;
    return total > 0.0 ? high / total : 0.0;
}

}  // namespace g2cf
