/// @file forms.hpp
/// @brief Pointwise exterior algebra on an oriented 7-dimensional vector space.
///
/// Antisymmetric tensors of degree p are stored by their components on the
/// C(7,p) strictly increasing index tuples; a component with permuted indices
/// carries the sign of the permutation.  Inner products and norms use the
/// plain tensor contraction convention (all p! permutations counted), so the
/// standard 3-form has squared norm 42 and its dual 4-form has 168.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace g2cf {

inline constexpr int kDim = 7;

/// C(7,p) for p = 0..7.
inline constexpr std::array<int, 8> kCompCount = {1, 7, 21, 35, 35, 21, 7, 1};

/// Combinatorial tables shared by every form operation.  Built once.
struct FormTables {
    /// tuples[p][c] = the c-th increasing tuple of degree p (entries 0..6).
    std::array<std::vector<std::array<uint8_t, 7>>, 8> tuples;
    /// pos[p][bitmask of a p-element index set] = component slot, or -1.
    std::array<std::array<int16_t, 128>, 8> pos;
    /// subst[p][c][a][v]: replace slot a of tuple c by index v, resort.
    /// Encoded as sign * (comp + 1); 0 when the result has a repeated index.
    std::array<std::vector<std::array<std::array<int16_t, 7>, 7>>, 8> subst;
    /// comp_sign[p][c] = sign of the permutation (tuple, complement) of 0..6,
    /// comp_idx[p][c] = component slot of the complement in degree 7-p.
    std::array<std::vector<int8_t>, 8> comp_sign;
    std::array<std::vector<int16_t>, 8> comp_idx;
    /// wedge[p][q] for p+q <= 7: list of (out comp, a comp, b comp, sign).
    struct WedgeTerm {
        int16_t out, a, b;
        int8_t sign;
    };
    std::array<std::array<std::vector<WedgeTerm>, 8>, 8> wedge;

    static const FormTables& get();
};

/// Sign of sorting `idx` (length p, values 0..6) into increasing order;
/// 0 if an index repeats.  On return `idx` is sorted.
int sort_sign(uint8_t* idx, int p);

/// Antisymmetric tensor of fixed degree at a single point.
struct PointForm {
    int degree = 0;
    std::array<double, 35> comp{};  // first kCompCount[degree] entries used

    PointForm() = default;
    explicit PointForm(int p) : degree(p) {}

    int size() const { return kCompCount[degree]; }
    double& operator[](int c) { return comp[c]; }
    double operator[](int c) const { return comp[c]; }

    /// Component with arbitrary index order (sign handled); 0 on repeats.
    double at(const uint8_t* idx) const;
    /// Add `value` to the component addressed by an arbitrary index tuple.
    void accumulate(const uint8_t* idx, double value);
};

PointForm operator+(const PointForm& a, const PointForm& b);
PointForm operator-(const PointForm& a, const PointForm& b);
PointForm operator*(double c, const PointForm& a);

/// Dense expansion into a rank-p array indexed by i1*7^(p-1)+...+ip.
void expand_dense(const PointForm& a, double* out);

/// Symmetric bilinear form with 7-form values, one matrix of coefficients.
using Mat7 = std::array<double, 49>;

/// Inner-product data at a point: metric, inverse, determinant, volume factor.
struct Metric {
    Mat7 g{};
    Mat7 inv{};
    double det = 0.0;
    double sqrt_det = 0.0;
    double min_eig = 0.0;

    static Metric identity();
    /// Builds inverse/determinant/eigen floor from a symmetric matrix.
    /// Fails (nullopt) when the matrix is singular.
    static std::optional<Metric> from_matrix(const Mat7& g);
};

/// Reasons a pointwise structure computation can fail.
enum class FormError {
    none = 0,
    not_positive,    // 3-form outside the positive cone
    no_convergence,  // fixed-point recovery did not reach tolerance
    singular_metric,
};

const char* to_string(FormError e);

/// The standard flat structure: the positive 3-form with unit components and
/// its dual 4-form in the same coordinates.
const PointForm& standard_phi();
const PointForm& standard_psi();

/// Result of metric recovery from a 3-form.
struct MetricFromPhi {
    Metric metric;
    Mat7 bilinear;  // un-normalized coefficient matrix B
    double det_b = 0.0;
};

/// Metric induced by a 3-form: B_ij is the 7-form coefficient of
/// (1/6)(e_i . phi) ^ (e_j . phi) ^ phi and g = (det B)^(-1/9) B, normalized
/// so the standard 3-form induces the identity.  Fails with not_positive when
/// det B <= 0 or the normalized matrix has an eigenvalue below 1e-10.
std::optional<MetricFromPhi> metric_from_phi(const PointForm& phi,
                                             FormError* err = nullptr);

/// Hodge star of a p-form for the given metric, orientation fixed by the
/// coordinate order: star of 1 is +sqrt(det g) times the top form.
PointForm hodge_star(const PointForm& a, const Metric& m);

/// Wedge product on compact components (determinant convention:
/// (e1^e2)(e_1,e_2) = 1).
PointForm wedge(const PointForm& a, const PointForm& b);

/// Interior product (contraction of a contravariant vector into slot one).
PointForm interior(const double x[7], const PointForm& a);

/// Raise all indices with the inverse metric: out_I = sum_J det(inv[I,J]) a_J.
PointForm raise_all(const PointForm& a, const Metric& m);

/// Degree-p compound of a 7x7 matrix: out[I*C(7,p)+J] = det m[I,J] over
/// increasing tuples.  Raising every index of an antisymmetric block is one
/// multiplication by the compound of the inverse metric.
void compound_matrix(const Mat7& m, int p, double* out);

/// Tensor-convention inner product <a,b> = a_{i...} b^{i...} (p! times the
/// sum over increasing tuples).
double inner_tensor(const PointForm& a, const PointForm& b, const Metric& m);
double norm2_tensor(const PointForm& a, const Metric& m);

/// Largest absolute component.
double sup_comp(const PointForm& a);

/// Recovery of the 3-form from its dual 4-form, iterating on the residual
/// star_{g(phi)} psi - phi from a warm guess.  Each step applies the
/// blockwise inverse of the residual's linearization at the solution (the
/// plain fixed-point update diverges: the traceless part of the map expands
/// by a factor 2).
struct PhiFromPsi {
    PointForm phi;
    int iterations = 0;
};
std::optional<PhiFromPsi> phi_from_psi(const PointForm& psi,
                                       const PointForm& guess, double tol,
                                       int max_iter, FormError* err = nullptr);

/// Split of a 2-form into the 7- and 14-dimensional invariant pieces, or of
/// a 3-form into the 1-, 7-, 27-dimensional pieces.
struct ProjectionSplit {
    PointForm part_1;   // degree 3 only: multiple of phi
    PointForm part_7;
    PointForm part_14;  // degree 2 only
    PointForm part_27;  // degree 3 only
};

/// Degree-2 split via the eigenvalues (+2 on the vector-type piece, -1 on
/// the complement) of beta -> star(phi ^ beta).
ProjectionSplit project_2(const PointForm& beta, const PointForm& phi,
                          const Metric& m);

/// Degree-3 split; psi must be the dual of phi under m.
ProjectionSplit project_3(const PointForm& eta, const PointForm& phi,
                          const PointForm& psi, const Metric& m);

/// Sup-norm residuals of the four quadratic contraction identities tying
/// phi, psi and the induced metric together.  All four vanish when psi is
/// the dual of phi and m the induced metric.
struct IdentityResiduals {
    double phiphi_psi;     // two-index contraction producing g g - g g + psi
    double phiphi_metric;  // full contraction producing 6 g
    double psipsi_metric;  // full contraction producing 24 g
    double phipsi_phi;     // mixed contraction producing 4 phi
    double max() const;
};
IdentityResiduals identity_residuals(const PointForm& phi,
                                     const PointForm& psi, const Metric& m);

}  // namespace g2cf
