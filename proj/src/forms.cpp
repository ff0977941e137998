#include "g2coflow/forms.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

namespace g2cf {

namespace {

int popcount7(int mask) {
    int n = 0;
    for (int b = 0; b < kDim; ++b) n += (mask >> b) & 1;
    return n;
}

void enumerate_tuples(int p, std::vector<std::array<uint8_t, 7>>& out) {
    std::array<uint8_t, 7> t{};
    if (p == 0) {
        out.push_back(t);
        return;
    }
    // lexicographic enumeration of strictly increasing tuples
    for (int i = 0; i < p; ++i) t[i] = static_cast<uint8_t>(i);
    while (true) {
        out.push_back(t);
        int a = p - 1;
        while (a >= 0 && t[a] == kDim - p + a) --a;
        if (a < 0) break;
        ++t[a];
        for (int b = a + 1; b < p; ++b) t[b] = static_cast<uint8_t>(t[b - 1] + 1);
    }
}

FormTables build_tables() {
    FormTables tb;
    for (int p = 0; p <= kDim; ++p) {
        enumerate_tuples(p, tb.tuples[p]);
        tb.pos[p].fill(-1);
        for (size_t c = 0; c < tb.tuples[p].size(); ++c) {
            int mask = 0;
            for (int a = 0; a < p; ++a) mask |= 1 << tb.tuples[p][c][a];
            tb.pos[p][mask] = static_cast<int16_t>(c);
        }
    }
    for (int p = 1; p <= kDim; ++p) {
        tb.subst[p].resize(tb.tuples[p].size());
        for (size_t c = 0; c < tb.tuples[p].size(); ++c) {
            for (int a = 0; a < p; ++a) {
                for (int v = 0; v < kDim; ++v) {
                    std::array<uint8_t, 7> t = tb.tuples[p][c];
                    t[a] = static_cast<uint8_t>(v);
                    int s = sort_sign(t.data(), p);
                    int16_t enc = 0;
                    if (s != 0) {
                        int mask = 0;
                        for (int b = 0; b < p; ++b) mask |= 1 << t[b];
                        enc = static_cast<int16_t>(s * (tb.pos[p][mask] + 1));
                    }
                    tb.subst[p][c][a][v] = enc;
                }
            }
        }
    }
    for (int p = 0; p <= kDim; ++p) {
        size_t n = tb.tuples[p].size();
        tb.comp_sign[p].resize(n);
        tb.comp_idx[p].resize(n);
        for (size_t c = 0; c < n; ++c) {
            std::array<uint8_t, 7> perm{};
            int k = 0;
            int mask = 0;
            for (int a = 0; a < p; ++a) {
                perm[k++] = tb.tuples[p][c][a];
                mask |= 1 << tb.tuples[p][c][a];
            }
            int cmask = 0;
            for (int v = 0; v < kDim; ++v)
                if (!((mask >> v) & 1)) {
                    perm[k++] = static_cast<uint8_t>(v);
                    cmask |= 1 << v;
                }
            std::array<uint8_t, 7> copy = perm;
            tb.comp_sign[p][c] = static_cast<int8_t>(sort_sign(copy.data(), kDim));
            tb.comp_idx[p][c] = tb.pos[kDim - p][cmask];
        }
    }
    for (int p = 0; p <= kDim; ++p) {
        for (int q = 0; p + q <= kDim; ++q) {
            auto& list = tb.wedge[p][q];
            for (size_t out = 0; out < tb.tuples[p + q].size(); ++out) {
                const auto& kt = tb.tuples[p + q][out];
                // all p-element subsets of the output tuple
                int nsub = 1 << (p + q);
                for (int sel = 0; sel < nsub; ++sel) {
                    if (popcount7(sel) != p) continue;
                    std::array<uint8_t, 7> arranged{};
                    int amask = 0, bmask = 0, na = 0, nb = p;
                    for (int a = 0; a < p + q; ++a) {
                        if ((sel >> a) & 1) {
                            arranged[na++] = kt[a];
                            amask |= 1 << kt[a];
                        } else {
                            arranged[nb++] = kt[a];
                            bmask |= 1 << kt[a];
                        }
                    }
                    int s = sort_sign(arranged.data(), p + q);
                    list.push_back({static_cast<int16_t>(out), tb.pos[p][amask],
                                    tb.pos[q][bmask], static_cast<int8_t>(s)});
                }
            }
        }
    }
    return tb;
}

}  // namespace

const FormTables& FormTables::get() {
    static const FormTables tb = build_tables();
    return tb;
}

int sort_sign(uint8_t* idx, int p) {
    int sign = 1;
    for (int i = 1; i < p; ++i) {  // insertion sort, counting swaps
        uint8_t v = idx[i];
        int j = i - 1;
        while (j >= 0 && idx[j] > v) {
            idx[j + 1] = idx[j];
            --j;
            sign = -sign;
        }
        idx[j + 1] = v;
    }
    for (int i = 1; i < p; ++i)
        if (idx[i] == idx[i - 1]) return 0;
    return sign;
}

double PointForm::at(const uint8_t* idx) const {
    std::array<uint8_t, 7> t{};
    std::memcpy(t.data(), idx, static_cast<size_t>(degree));
    int s = sort_sign(t.data(), degree);
    if (s == 0) return 0.0;
    const auto& tb = FormTables::get();
    int mask = 0;
    for (int a = 0; a < degree; ++a) mask |= 1 << t[a];
    return s * comp[tb.pos[degree][mask]];
}

void PointForm::accumulate(const uint8_t* idx, double value) {
    std::array<uint8_t, 7> t{};
    std::memcpy(t.data(), idx, static_cast<size_t>(degree));
    int s = sort_sign(t.data(), degree);
    if (s == 0) return;
    const auto& tb = FormTables::get();
    int mask = 0;
    for (int a = 0; a < degree; ++a) mask |= 1 << t[a];
    comp[tb.pos[degree][mask]] += s * value;
}

PointForm operator+(const PointForm& a, const PointForm& b) {
    PointForm r(a.degree);
    for (int c = 0; c < a.size(); ++c) r.comp[c] = a.comp[c] + b.comp[c];
    return r;
}

PointForm operator-(const PointForm& a, const PointForm& b) {
    PointForm r(a.degree);
    for (int c = 0; c < a.size(); ++c) r.comp[c] = a.comp[c] - b.comp[c];
    return r;
}

PointForm operator*(double c, const PointForm& a) {
    PointForm r(a.degree);
    for (int i = 0; i < a.size(); ++i) r.comp[i] = c * a.comp[i];
    return r;
}

void expand_dense(const PointForm& a, double* out) {
    int p = a.degree;
    int64_t total = 1;
    for (int i = 0; i < p; ++i) total *= kDim;
    std::array<uint8_t, 7> idx{};
    for (int64_t flat = 0; flat < total; ++flat) {
        int64_t rem = flat;
        for (int i = p - 1; i >= 0; --i) {
            idx[i] = static_cast<uint8_t>(rem % kDim);
            rem /= kDim;
        }
        out[flat] = a.at(idx.data());
    }
}

Metric Metric::identity() {
    Metric m;
    for (int i = 0; i < kDim; ++i) {
        m.g[i * kDim + i] = 1.0;
        m.inv[i * kDim + i] = 1.0;
    }
    m.det = 1.0;
    m.sqrt_det = 1.0;
    m.min_eig = 1.0;
    return m;
}

std::optional<Metric> Metric::from_matrix(const Mat7& g) {
    using M7 = Eigen::Matrix<double, 7, 7, Eigen::RowMajor>;
    Eigen::Map<const M7> gm(g.data());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 7, 7>> es(gm);
    if (es.info() != Eigen::Success) return std::nullopt;
    double mini = es.eigenvalues().minCoeff();
    double det = es.eigenvalues().prod();
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
    Metric m;
    m.g = g;
    Eigen::Map<M7> im(m.inv.data());
    im = gm.inverse();
    m.det = det;
    m.sqrt_det = std::sqrt(det);
    m.min_eig = mini;
    return m;
}

namespace {

PointForm make_form(int degree,
                    std::initializer_list<std::pair<std::array<uint8_t, 4>, double>>
                        entries) {
    PointForm f(degree);
    for (const auto& e : entries) f.accumulate(e.first.data(), e.second);
    return f;
}

}  // namespace

const PointForm& standard_phi() {
    static const PointForm phi = make_form(3, {{{0, 1, 2, 0}, 1.0},
                                               {{0, 3, 4, 0}, 1.0},
                                               {{0, 5, 6, 0}, 1.0},
                                               {{1, 3, 5, 0}, 1.0},
                                               {{1, 4, 6, 0}, -1.0},
                                               {{2, 3, 6, 0}, -1.0},
                                               {{2, 4, 5, 0}, -1.0}});
    return phi;
}

const PointForm& standard_psi() {
    static const PointForm psi = make_form(4, {{{3, 4, 5, 6}, 1.0},
                                               {{1, 2, 5, 6}, 1.0},
                                               {{1, 2, 3, 4}, 1.0},
                                               {{0, 2, 4, 6}, 1.0},
                                               {{0, 2, 3, 5}, -1.0},
                                               {{0, 1, 4, 5}, -1.0},
                                               {{0, 1, 3, 6}, -1.0}});
    return psi;
}

PointForm wedge(const PointForm& a, const PointForm& b) {
    const auto& tb = FormTables::get();
    PointForm r(a.degree + b.degree);
    for (const auto& t : tb.wedge[a.degree][b.degree])
        r.comp[t.out] += t.sign * a.comp[t.a] * b.comp[t.b];
    return r;
}

PointForm interior(const double x[7], const PointForm& a) {
    const auto& tb = FormTables::get();
    int p = a.degree;
    PointForm r(p - 1);
    const auto& tuples_out = tb.tuples[p - 1];
    for (size_t c = 0; c < tuples_out.size(); ++c) {
        const auto& kt = tuples_out[c];
        double acc = 0.0;
        for (int m = 0; m < kDim; ++m) {
            std::array<uint8_t, 7> t{};
            t[0] = static_cast<uint8_t>(m);
            for (int i = 0; i < p - 1; ++i) t[i + 1] = kt[i];
            acc += x[m] * a.at(t.data());
        }
        r.comp[c] = acc;
    }
    return r;
}

namespace {

/// det of the p x p minor mat[rows, cols] of a 7 x 7 matrix
double minor_det(const double* mat, const uint8_t* rows, const uint8_t* cols,
                 int p) {
    switch (p) {
        case 0:
            return 1.0;
        case 1:
            return mat[rows[0] * kDim + cols[0]];
        case 2:
            return mat[rows[0] * kDim + cols[0]] * mat[rows[1] * kDim + cols[1]] -
                   mat[rows[0] * kDim + cols[1]] * mat[rows[1] * kDim + cols[0]];
        default: {
            double sub[49];
            for (int r2 = 0; r2 < p; ++r2)
                for (int c2 = 0; c2 < p; ++c2)
                    sub[r2 * p + c2] = mat[rows[r2] * kDim + cols[c2]];
            if (p == 3)
                return sub[0] * (sub[4] * sub[8] - sub[5] * sub[7]) -
                       sub[1] * (sub[3] * sub[8] - sub[5] * sub[6]) +
                       sub[2] * (sub[3] * sub[7] - sub[4] * sub[6]);
            if (p == 4) {
                // Laplace expansion along the first row
                double d = 0.0;
                for (int c0 = 0; c0 < 4; ++c0) {
                    double m3[9];
                    int cc = 0;
                    for (int c2 = 0; c2 < 4; ++c2) {
                        if (c2 == c0) continue;
                        m3[cc] = sub[4 + c2];
                        m3[cc + 3] = sub[8 + c2];
                        m3[cc + 6] = sub[12 + c2];
                        ++cc;
                    }
                    double d3 = m3[0] * (m3[4] * m3[8] - m3[5] * m3[7]) -
                                m3[1] * (m3[3] * m3[8] - m3[5] * m3[6]) +
                                m3[2] * (m3[3] * m3[7] - m3[4] * m3[6]);
                    d += ((c0 % 2) ? -1.0 : 1.0) * sub[c0] * d3;
                }
                return d;
            }
            Eigen::MatrixXd em(p, p);
            for (int r2 = 0; r2 < p; ++r2)
                for (int c2 = 0; c2 < p; ++c2) em(r2, c2) = sub[r2 * p + c2];
            return em.determinant();
        }
    }
}

}  // namespace

void compound_matrix(const Mat7& m, int p, double* out) {
    const auto& tuples = FormTables::get().tuples[p];
    int n = kCompCount[p];
    for (int ci = 0; ci < n; ++ci)
        for (int cj = 0; cj < n; ++cj)
            out[ci * n + cj] =
                minor_det(m.data(), tuples[ci].data(), tuples[cj].data(), p);
}

PointForm raise_all(const PointForm& a, const Metric& m) {
    const auto& tb = FormTables::get();
    int p = a.degree;
    PointForm r(p);
    if (p == 0) {
        r.comp[0] = a.comp[0];
        return r;
    }
    const auto& tuples = tb.tuples[p];
    int n = kCompCount[p];
    for (int ci = 0; ci < n; ++ci) {
        double acc = 0.0;
        for (int cj = 0; cj < n; ++cj)
            acc += minor_det(m.inv.data(), tuples[ci].data(), tuples[cj].data(),
                             p) *
                   a.comp[cj];
        r.comp[ci] = acc;
    }
    return r;
}

PointForm hodge_star(const PointForm& a, const Metric& m) {
    const auto& tb = FormTables::get();
    int p = a.degree;
    PointForm raised = raise_all(a, m);
    PointForm r(kDim - p);
    for (int c = 0; c < kCompCount[p]; ++c)
        r.comp[tb.comp_idx[p][c]] = m.sqrt_det * tb.comp_sign[p][c] * raised.comp[c];
    return r;
}

double inner_tensor(const PointForm& a, const PointForm& b, const Metric& m) {
    PointForm braised = raise_all(b, m);
    double fact = 1.0;
    for (int i = 2; i <= a.degree; ++i) fact *= i;
    double acc = 0.0;
    for (int c = 0; c < a.size(); ++c) acc += a.comp[c] * braised.comp[c];
    return fact * acc;
}

double norm2_tensor(const PointForm& a, const Metric& m) {
    return inner_tensor(a, a, m);
}

double sup_comp(const PointForm& a) {
    double s = 0.0;
    for (int c = 0; c < a.size(); ++c) s = std::max(s, std::fabs(a.comp[c]));
    return s;
}

const char* to_string(FormError e) {
    switch (e) {
        case FormError::none: return "none";
        case FormError::not_positive: return "not_positive";
        case FormError::no_convergence: return "no_convergence";
        case FormError::singular_metric: return "singular_metric";
    }
    return "unknown";
}

std::optional<MetricFromPhi> metric_from_phi(const PointForm& phi, FormError* err) {
    auto fail = [&](FormError e) {
        if (err) *err = e;
        return std::nullopt;
    };
    MetricFromPhi out;
    // B_ij = (1/6) of the top coefficient of (e_i . phi)^(e_j . phi)^phi
    std::array<PointForm, 7> hooks;
    for (int i = 0; i < kDim; ++i) {
        double e[7] = {0, 0, 0, 0, 0, 0, 0};
        e[i] = 1.0;
        hooks[i] = interior(e, phi);
    }
    for (int i = 0; i < kDim; ++i) {
        for (int j = i; j < kDim; ++j) {
            double top = wedge(wedge(hooks[i], hooks[j]), phi).comp[0];
            out.bilinear[i * kDim + j] = top / 6.0;
            out.bilinear[j * kDim + i] = top / 6.0;
        }
    }
    using M7 = Eigen::Matrix<double, 7, 7, Eigen::RowMajor>;
    Eigen::Map<const M7> bm(out.bilinear.data());
    out.det_b = bm.determinant();
    if (!(out.det_b > 0.0) || !std::isfinite(out.det_b))
        return fail(FormError::not_positive);
    double scale = std::pow(out.det_b, -1.0 / 9.0);
    Mat7 g;
    for (int k = 0; k < 49; ++k) g[k] = scale * out.bilinear[k];
    auto metric = Metric::from_matrix(g);
    if (!metric) return fail(FormError::singular_metric);
    if (metric->min_eig <= 1e-10) return fail(FormError::not_positive);
    out.metric = *metric;
    if (err) *err = FormError::none;
    return out;
}

std::optional<PhiFromPsi> phi_from_psi(const PointForm& psi, const PointForm& guess,
                                       double tol, int max_iter, FormError* err) {
    // The residual map r(phi) = star_{g(phi)} psi - phi has a universal
    // linearization at the solution: its derivative acts as -4/3 on the
    // scalar type, -1 on the vector type and +1 on the traceless type of the
    // current structure (the plain iteration diverges, the traceless factor
    // of star_{g(phi)} psi being an expansion by 2).  Each step therefore
    // applies the blockwise inverse of that linearization to the residual,
    // which converges superlinearly from warm starts.
    PhiFromPsi out;
    out.phi = guess;
    FormError sub = FormError::none;
    double prev_res = 0.0;
    int grew = 0;
    for (int it = 1; it <= max_iter; ++it) {
        auto mfp = metric_from_phi(out.phi, &sub);
        if (!mfp) {
            if (err) *err = sub;
            return std::nullopt;
        }
        PointForm fval = hodge_star(psi, mfp->metric);
        PointForm res = fval - out.phi;
        double rnorm = sup_comp(res);
        double scale = std::max(1.0, sup_comp(out.phi));
        out.iterations = it;
        if (rnorm <= tol * scale) {
            if (err) *err = FormError::none;
            return out;
        }
        if (it > 1 && rnorm > prev_res) {
            if (++grew >= 3) break;  // diverging: bail out early
        } else {
            grew = 0;
        }
        prev_res = rnorm;
        PointForm own_dual = hodge_star(out.phi, mfp->metric);
        ProjectionSplit s = project_3(res, out.phi, own_dual, mfp->metric);
        for (int c = 0; c < 35; ++c)
            out.phi.comp[c] += 0.75 * s.part_1.comp[c] + s.part_7.comp[c] -
                               s.part_27.comp[c];
    }
    if (err) *err = FormError::no_convergence;
    return std::nullopt;
}

ProjectionSplit project_2(const PointForm& beta, const PointForm& phi,
                          const Metric& m) {
    ProjectionSplit out;
    PointForm l = hodge_star(wedge(phi, beta), m);
    out.part_7 = PointForm(2);
    out.part_14 = PointForm(2);
    for (int c = 0; c < beta.size(); ++c) {
        out.part_7.comp[c] = (l.comp[c] + beta.comp[c]) / 3.0;
        out.part_14.comp[c] = (2.0 * beta.comp[c] - l.comp[c]) / 3.0;
    }
    return out;
}

ProjectionSplit project_3(const PointForm& eta, const PointForm& phi,
                          const PointForm& psi, const Metric& m) {
    ProjectionSplit out;
    double f = inner_tensor(eta, phi, m) / norm2_tensor(phi, m);
    out.part_1 = f * phi;
    // vector part: X_n = (1/24) eta^{jkl} psi_{njkl}
    PointForm etar = raise_all(eta, m);
    double dense_psi[2401];
    expand_dense(psi, dense_psi);
    double dense_etar[343];
    expand_dense(etar, dense_etar);
    double xlow[7] = {0};
    for (int n = 0; n < kDim; ++n) {
        double acc = 0.0;
        for (int f3 = 0; f3 < 343; ++f3) acc += dense_etar[f3] * dense_psi[n * 343 + f3];
        xlow[n] = acc / 24.0;
    }
    double xup[7] = {0};
    for (int n = 0; n < kDim; ++n)
        for (int q = 0; q < kDim; ++q) xup[n] += m.inv[n * kDim + q] * xlow[q];
    out.part_7 = interior(xup, psi);
    out.part_27 = eta - out.part_1 - out.part_7;
    return out;
}

double IdentityResiduals::max() const {
    double r = phiphi_psi;
    r = std::fmax(r, phiphi_metric);
    r = std::fmax(r, psipsi_metric);
    r = std::fmax(r, phipsi_phi);
    return r;
}

IdentityResiduals identity_residuals(const PointForm& phi, const PointForm& psi,
                                     const Metric& m) {
    IdentityResiduals out{};
    double pd[343], qd[2401];
    expand_dense(phi, pd);
    expand_dense(psi, qd);
    const double* inv = m.inv.data();
    const double* g = m.g.data();

    // phi_ijk phi_abc g^{kc} = g_ia g_jb - g_ib g_ja + psi_ijab
    {
        double r = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int j = 0; j < 7; ++j)
                for (int a = 0; a < 7; ++a)
                    for (int b = 0; b < 7; ++b) {
                        double acc = 0.0;
                        for (int k = 0; k < 7; ++k)
                            for (int c = 0; c < 7; ++c)
                                acc += pd[(i * 7 + j) * 7 + k] * pd[(a * 7 + b) * 7 + c] *
                                       inv[k * 7 + c];
                        double rhs = g[i * 7 + a] * g[j * 7 + b] -
                                     g[i * 7 + b] * g[j * 7 + a] +
                                     qd[((i * 7 + j) * 7 + a) * 7 + b];
                        r = std::fmax(r, std::fabs(acc - rhs));
                    }
        out.phiphi_psi = r;
    }

    // phi_ijk phi_abc g^{jb} g^{kc} = 6 g_ia
    {
        double p2[343];  // phi with slots 2,3 raised
        for (int i = 0; i < 7; ++i)
            for (int b = 0; b < 7; ++b)
                for (int c = 0; c < 7; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < 7; ++j)
                        for (int k = 0; k < 7; ++k)
                            acc += pd[(i * 7 + j) * 7 + k] * inv[j * 7 + b] * inv[k * 7 + c];
                    p2[(i * 7 + b) * 7 + c] = acc;
                }
        double r = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int a = 0; a < 7; ++a) {
                double acc = 0.0;
                for (int bc = 0; bc < 49; ++bc) acc += p2[i * 49 + bc] * pd[a * 49 + bc];
                r = std::fmax(r, std::fabs(acc - 6.0 * g[i * 7 + a]));
            }
        out.phiphi_metric = r;
    }

    // psi_ijkl psi_abcd g^{jb} g^{kc} g^{ld} = 24 g_ia
    {
        std::vector<double> q2(2401);
        for (int i = 0; i < 7; ++i)
            for (int b = 0; b < 7; ++b)
                for (int c = 0; c < 7; ++c)
                    for (int d = 0; d < 7; ++d) {
                        double acc = 0.0;
                        for (int j = 0; j < 7; ++j)
                            for (int k = 0; k < 7; ++k)
                                for (int l = 0; l < 7; ++l)
                                    acc += qd[((i * 7 + j) * 7 + k) * 7 + l] *
                                           inv[j * 7 + b] * inv[k * 7 + c] * inv[l * 7 + d];
                        q2[((i * 7 + b) * 7 + c) * 7 + d] = acc;
                    }
        double r = 0.0;
        for (int i = 0; i < 7; ++i)
            for (int a = 0; a < 7; ++a) {
                double acc = 0.0;
                for (int t = 0; t < 343; ++t) acc += q2[i * 343 + t] * qd[a * 343 + t];
                r = std::fmax(r, std::fabs(acc - 24.0 * g[i * 7 + a]));
            }
        out.psipsi_metric = r;
    }

    // phi_ijq psi_abkl g^{ia} g^{jb} = 4 phi_qkl
    {
        double f2[343];  // phi with slots 1,2 raised
        for (int a = 0; a < 7; ++a)
            for (int b = 0; b < 7; ++b)
                for (int q = 0; q < 7; ++q) {
                    double acc = 0.0;
                    for (int i = 0; i < 7; ++i)
                        for (int j = 0; j < 7; ++j)
                            acc += pd[(i * 7 + j) * 7 + q] * inv[i * 7 + a] * inv[j * 7 + b];
                    f2[(a * 7 + b) * 7 + q] = acc;
                }
        double r = 0.0;
        for (int q = 0; q < 7; ++q)
            for (int k = 0; k < 7; ++k)
                for (int l = 0; l < 7; ++l) {
                    double acc = 0.0;
                    for (int a = 0; a < 7; ++a)
                        for (int b = 0; b < 7; ++b)
                            acc += f2[(a * 7 + b) * 7 + q] *
                                   qd[((a * 7 + b) * 7 + k) * 7 + l];
                    r = std::fmax(r, std::fabs(acc - 4.0 * pd[(q * 7 + k) * 7 + l]));
                }
        out.phipsi_phi = r;
    }
    return out;
}

}  // namespace g2cf
