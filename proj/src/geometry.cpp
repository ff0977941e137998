#include "g2coflow/geometry.hpp"

#include <cmath>
#include <cstring>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

double MetricField::min_eig() const {
    double r = pt.empty() ? 0.0 : pt[0].min_eig;
    for (const Metric& m : pt) r = std::fmin(r, m.min_eig);
    return r;
}

double MetricField::weight(int64_t n) const {
    double w = pt[n].sqrt_det;
    for (int a = 0; a < 7; ++a) w *= grid.spacing(a);
    return w;
}

MetricField metric_field(TensorField g) {
    MetricField out;
    out.grid = g.grid;
    out.pt.resize(g.grid.nodes());
    int64_t nodes = g.grid.nodes();
    for (int64_t n = 0; n < nodes; ++n) {
        Mat7 m;
        const double* p = g.node(n);
        for (int i = 0; i < 49; ++i) m[i] = p[i];
        auto mt = Metric::from_matrix(m);
        if (!mt || mt->det <= 1e-12)
            throw Error(ErrorCode::singular_metric,
                        "metric not positive definite at node " +
                            std::to_string(n));
        out.pt[n] = *mt;
    }
    out.g = std::move(g);
    return out;
}

MetricField metric_field_from_phi(const TensorField& phi) {
    TensorField g(phi.grid, TensorShape{{1, -1}, {1, -1}});
    int64_t nodes = phi.grid.nodes();
    std::vector<int> bad(chunk_count(nodes, 64), 0);
    parallel_chunks(nodes, 64, [&](int64_t chunk, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            auto mfp = metric_from_phi(form_at(phi, n));
            if (!mfp) {
                bad[chunk] = 1;
                return;
            }
            double* p = g.node(n);
            for (int i = 0; i < 49; ++i) p[i] = mfp->metric.g[i];
        }
    });
    for (int b : bad)
        if (b)
            throw Error(ErrorCode::not_positive,
                        "3-form left the positive cone");
    return metric_field(std::move(g));
}

ConnectionField levi_civita(const MetricField& m, const DerivOps& ops) {
    // dg[a] = partial_a g (zero field on inactive axes)
    std::array<TensorField, 7> dg;
    for (int a = 0; a < 7; ++a) dg[a] = ops.apply_axis(m.g, a);

    ConnectionField out{TensorField(m.grid, TensorShape{{1, 1}, {1, -1}, {1, -1}})};
    int64_t nodes = m.grid.nodes();
    parallel_chunks(nodes, 64, [&](int64_t, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mt = m.at(n);
            const double* d[7];
            for (int a = 0; a < 7; ++a) d[a] = dg[a].node(n);
            double* gm = out.gamma.node(n);
            for (int i = 0; i < 7; ++i)
                for (int j = i; j < 7; ++j) {
                    double half[7];  // (1/2)(di g_jq + dj g_iq - dq g_ij)
                    for (int q = 0; q < 7; ++q)
                        half[q] = 0.5 * (d[i][j * 7 + q] + d[j][i * 7 + q] -
                                         d[q][i * 7 + j]);
                    for (int l = 0; l < 7; ++l) {
                        double acc = 0.0;
                        for (int q = 0; q < 7; ++q)
                            acc += mt.inv[l * 7 + q] * half[q];
                        gm[l * 49 + i * 7 + j] = acc;
                        gm[l * 49 + j * 7 + i] = acc;
                    }
                }
        }
    });
    return out;
}

CurvatureField riemann(const MetricField& m, const ConnectionField& conn,
                       const DerivOps& ops) {
    std::array<TensorField, 7> dgamma;
    for (int a = 0; a < 7; ++a) dgamma[a] = ops.apply_axis(conn.gamma, a);

    CurvatureField out;
    out.rm = TensorField(m.grid, TensorShape{{2, -1}, {2, -1}});
    out.ric = TensorField(m.grid, TensorShape{{1, -1}, {1, -1}});
    out.scalar = TensorField(m.grid, TensorShape{});
    const auto& tb = FormTables::get();
    int64_t nodes = m.grid.nodes();
    int64_t nchunks = chunk_count(nodes, 64);
    std::vector<double> defect(nchunks, 0.0);
    parallel_chunks(nodes, 64, [&](int64_t chunk, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mt = m.at(n);
            const double* gm = conn.gamma.node(n);
            const double* d[7];
            for (int a = 0; a < 7; ++a) d[a] = dgamma[a].node(n);
            // upper[k*7+l] = R_ijk^l for the current increasing pair (i,j)
            double upper[49], lower[49];
            double* rm = out.rm.node(n);
            double* ric = out.ric.node(n);
            for (int i = 0; i < 49; ++i) ric[i] = 0.0;
            for (int cij = 0; cij < 21; ++cij) {
                int i = tb.tuples[2][cij][0], j = tb.tuples[2][cij][1];
                for (int k = 0; k < 7; ++k)
                    for (int l = 0; l < 7; ++l) {
                        double v = d[i][l * 49 + j * 7 + k] -
                                   d[j][l * 49 + i * 7 + k];
                        for (int p = 0; p < 7; ++p)
                            v += gm[l * 49 + i * 7 + p] * gm[p * 49 + j * 7 + k] -
                                 gm[l * 49 + j * 7 + p] * gm[p * 49 + i * 7 + k];
                        upper[k * 7 + l] = v;
                    }
                // Ricci trace l = i over the pair and its transpose
                for (int k = 0; k < 7; ++k) {
                    ric[j * 7 + k] += upper[k * 7 + i];
                    ric[i * 7 + k] -= upper[k * 7 + j];
                }
                for (int k = 0; k < 7; ++k)
                    for (int l = 0; l < 7; ++l) {
                        double v = 0.0;
                        for (int q = 0; q < 7; ++q)
                            v += mt.g[l * 7 + q] * upper[k * 7 + q];
                        lower[k * 7 + l] = v;
                    }
                for (int ckl = 0; ckl < 21; ++ckl) {
                    int k = tb.tuples[2][ckl][0], l = tb.tuples[2][ckl][1];
                    double anti = 0.5 * (lower[k * 7 + l] - lower[l * 7 + k]);
                    double sym = 0.5 * (lower[k * 7 + l] + lower[l * 7 + k]);
                    rm[cij * 21 + ckl] = anti;
                    defect[chunk] = std::fmax(defect[chunk], std::fabs(sym));
                }
            }
            double scal = 0.0;
            for (int jj = 0; jj < 7; ++jj)
                for (int kk = 0; kk < 7; ++kk)
                    scal += mt.inv[jj * 7 + kk] * ric[jj * 7 + kk];
            out.scalar.node(n)[0] = scal;
        }
    });
    for (double v : defect) out.kl_defect = std::fmax(out.kl_defect, v);
    return out;
}

namespace {

/// Connection corrections of one derivative slot: adds to `out` (f-comps
/// layout) the Gamma terms of nabla_m applied to the node values `in`.
void gamma_corrections(const TensorShape& shape, const double* gamma, int mi,
                       const double* in, double* out) {
    const auto& tb = FormTables::get();
    size_t nslots = shape.slots.size();
    int64_t pre = 1;
    for (size_t s = 0; s < nslots; ++s) {
        const Slot& sl = shape.slots[s];
        int sz = kCompCount[sl.degree];
        int64_t post = shape.stride(s);
        if (sl.degree == 1) {
            // one 7 x 7 transform along this slot
            double mat[49];
            for (int i = 0; i < 7; ++i)
                for (int q = 0; q < 7; ++q)
                    mat[i * 7 + q] = sl.variance < 0
                                         ? -gamma[q * 49 + mi * 7 + i]
                                         : gamma[i * 49 + mi * 7 + q];
            for (int64_t a = 0; a < pre; ++a)
                for (int i = 0; i < 7; ++i) {
                    double* o = out + (a * 7 + i) * post;
                    for (int q = 0; q < 7; ++q) {
                        double w = mat[i * 7 + q];
                        if (w == 0.0) continue;
                        const double* src = in + (a * 7 + q) * post;
                        for (int64_t b = 0; b < post; ++b) o[b] += w * src[b];
                    }
                }
        } else {
            int p = sl.degree;
            const auto& subst = tb.subst[p];
            const auto& tuples = tb.tuples[p];
            for (int64_t a = 0; a < pre; ++a)
                for (int c = 0; c < sz; ++c) {
                    double* o = out + (a * sz + c) * post;
                    for (int pos = 0; pos < p; ++pos) {
                        int idx = tuples[c][pos];
                        for (int q = 0; q < 7; ++q) {
                            int16_t enc = subst[c][pos][q];
                            if (enc == 0) continue;
                            double w = -gamma[q * 49 + mi * 7 + idx];
                            if (w == 0.0) continue;
                            int cc = (enc > 0 ? enc : -enc) - 1;
                            double sgn = enc > 0 ? w : -w;
                            const double* src = in + (a * sz + cc) * post;
                            for (int64_t b = 0; b < post; ++b)
                                o[b] += sgn * src[b];
                        }
                    }
                }
        }
        pre *= sz;
    }
}

}  // namespace

TensorField covariant_derivative(const TensorField& f,
                                 const ConnectionField& conn,
                                 const DerivOps& ops) {
    TensorField out(f.grid, prepended(f.shape));
    int64_t c = f.comps();
    for (int a = 0; a < 7; ++a) {
        if (!f.grid.active(a)) continue;
        TensorField da = ops.apply_axis(f, a);
        int64_t nodes = f.grid.nodes();
        parallel_chunks(nodes, 64, [&](int64_t, int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n)
                std::memcpy(out.node(n) + a * c, da.node(n), c * 8);
        });
    }
    int64_t nodes = f.grid.nodes();
    parallel_chunks(nodes, 16, [&](int64_t, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const double* gm = conn.gamma.node(n);
            const double* in = f.node(n);
            double* o = out.node(n);
            for (int mi = 0; mi < 7; ++mi)
                gamma_corrections(f.shape, gm, mi, in, o + mi * c);
        }
    });
    return out;
}

void covariant_derivative_at_node(const TensorField& f,
                                  const ConnectionField& conn,
                                  const DerivOps& ops, int64_t node,
                                  double* out) {
    int64_t c = f.comps();
    const double* gm = conn.gamma.node(node);
    const double* in = f.node(node);
    for (int mi = 0; mi < 7; ++mi) {
        ops.deriv_at_node(f, mi, node, out + mi * c);
        gamma_corrections(f.shape, gm, mi, in, out + mi * c);
    }
}

}  // namespace g2cf
