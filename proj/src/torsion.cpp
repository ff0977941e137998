#include "g2coflow/torsion.hpp"

#include <cmath>
#include <cstring>

#include "g2coflow/errors.hpp"
#include "g2coflow/exterior.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

TorsionTensor full_torsion(const TensorField& phi, const TensorField& psi,
                           const MetricField& m, const ConnectionField& conn,
                           const DerivOps& ops) {
    const Grid& g = phi.grid;
    TensorField dphi = covariant_derivative(phi, conn, ops);
    TorsionTensor out{TensorField(g, TensorShape{{1, -1}, {1, -1}}),
                      form_field(g, 0)};
    int64_t nodes = g.nodes();
    parallel_chunks(nodes, 16, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mm = m.at(n);
            PointForm psra = raise_all(form_at(psi, n), mm);
            const double* dp = dphi.node(n);
            // T_i^j = (1/24) nabla_i phi_lmn psi^{jlmn}; on increasing
            // tuples the 3! permutations collapse into a factor 1/4
            double tmix[49];
            for (int j = 0; j < 7; ++j) {
                double e[7] = {};
                e[j] = 1.0;
                PointForm pj = interior(e, psra);
                for (int i = 0; i < 7; ++i) {
                    double s = 0.0;
                    const double* row = dp + i * 35;
                    for (int c = 0; c < 35; ++c) s += row[c] * pj[c];
                    tmix[i * 7 + j] = 0.25 * s;
                }
            }
            double* tl = out.t.node(n);
            double tr = 0.0;
            for (int i = 0; i < 7; ++i) {
                tr += tmix[i * 7 + i];
                for (int j = 0; j < 7; ++j) {
                    double s = 0.0;
                    for (int q = 0; q < 7; ++q)
                        s += tmix[i * 7 + q] * mm.g[q * 7 + j];
                    tl[i * 7 + j] = s;
                }
            }
            out.trace.node(n)[0] = tr;
        }
    });
    return out;
}

TorsionSplitNode split_torsion_node(const double* t_low, const PointForm& phi,
                                    const Metric& m) {
    TorsionSplitNode out;
    double tr = 0.0;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) tr += m.inv[i * 7 + j] * t_low[i * 7 + j];
    out.tau0 = 4.0 / 7.0 * tr;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            out.tau3[i * 7 + j] = 0.25 * out.tau0 * m.g[i * 7 + j] -
                                  0.5 * (t_low[i * 7 + j] + t_low[j * 7 + i]);
    const auto& tb = FormTables::get();
    PointForm a(2);
    for (int c = 0; c < 21; ++c) {
        const auto& t = tb.tuples[2][c];
        a[c] = 0.5 * (t_low[t[0] * 7 + t[1]] - t_low[t[1] * 7 + t[0]]);
    }
    ProjectionSplit sp = project_2(a, phi, m);
    out.tau2 = -2.0 * sp.part_14;
    // invert X -> X . phi on the 7-part through phi_lij phi^m_ij = 6 delta
    PointForm phra = raise_all(phi, m);
    double x[7];
    for (int l = 0; l < 7; ++l) {
        double e[7] = {};
        e[l] = 1.0;
        PointForm pl = interior(e, phra);
        double s = 0.0;
        for (int c = 0; c < 21; ++c) s += sp.part_7[c] * pl[c];
        x[l] = -s / 3.0;
    }
    for (int i = 0; i < 7; ++i) {
        double s = 0.0;
        for (int l = 0; l < 7; ++l) s += m.g[i * 7 + l] * x[l];
        out.tau1[i] = s;
    }
    return out;
}

void reconstruct_torsion_node(const TorsionSplitNode& f, const PointForm& phi,
                              const Metric& m, double* t_out) {
    double x[7];
    for (int l = 0; l < 7; ++l) {
        double s = 0.0;
        for (int i = 0; i < 7; ++i) s += m.inv[l * 7 + i] * f.tau1[i];
        x[l] = s;
    }
    PointForm xphi = interior(x, phi);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j)
            t_out[i * 7 + j] =
                0.25 * f.tau0 * m.g[i * 7 + j] - f.tau3[i * 7 + j];
    const auto& tb = FormTables::get();
    for (int c = 0; c < 21; ++c) {
        const auto& t = tb.tuples[2][c];
        double v = xphi[c] + 0.5 * f.tau2[c];
        t_out[t[0] * 7 + t[1]] -= v;
        t_out[t[1] * 7 + t[0]] += v;
    }
}

TorsionSplit split_torsion(const TorsionTensor& t, const TensorField& phi,
                           const MetricField& m) {
    const Grid& g = phi.grid;
    TorsionSplit out{form_field(g, 0), form_field(g, 1), form_field(g, 2),
                     TensorField(g, TensorShape{{1, -1}, {1, -1}})};
    parallel_chunks(g.nodes(), 16, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            TorsionSplitNode sp =
                split_torsion_node(t.t.node(n), form_at(phi, n), m.at(n));
            out.tau0.node(n)[0] = sp.tau0;
            std::memcpy(out.tau1.node(n), sp.tau1, 7 * sizeof(double));
            std::memcpy(out.tau2.node(n), sp.tau2.comp.data(),
                        21 * sizeof(double));
            std::memcpy(out.tau3.node(n), sp.tau3, 49 * sizeof(double));
        }
    });
    return out;
}

TensorField reconstruct_torsion(const TorsionSplit& f, const TensorField& phi,
                                const MetricField& m) {
    const Grid& g = phi.grid;
    TensorField out(g, TensorShape{{1, -1}, {1, -1}});
    parallel_chunks(g.nodes(), 16, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            TorsionSplitNode sp;
            sp.tau0 = f.tau0.node(n)[0];
            std::memcpy(sp.tau1, f.tau1.node(n), 7 * sizeof(double));
            sp.tau2 = form_at(f.tau2, n);
            std::memcpy(sp.tau3, f.tau3.node(n), 49 * sizeof(double));
            reconstruct_torsion_node(sp, form_at(phi, n), m.at(n),
                                     out.node(n));
        }
    });
    return out;
}

double coclosed_residual(const TensorField& psi, const DerivOps& ops) {
    return exterior_d(psi, ops).sup_abs();
}

double coclosed_symmetry_check(const TorsionTensor& t, const TensorField& psi,
                               const DerivOps& ops, double threshold) {
    double res = coclosed_residual(psi, ops);
    if (res > threshold)
        throw Error(ErrorCode::not_coclosed,
                    "coclosedness residual " + std::to_string(res) +
                        " exceeds threshold " + std::to_string(threshold));
    double r = 0.0;
    for (int64_t n = 0; n < t.t.grid.nodes(); ++n) {
        const double* p = t.t.node(n);
        for (int i = 0; i < 7; ++i)
            for (int j = i + 1; j < 7; ++j)
                r = std::fmax(r, std::fabs(p[i * 7 + j] - p[j * 7 + i]));
    }
    return r;
}

}  // namespace g2cf
