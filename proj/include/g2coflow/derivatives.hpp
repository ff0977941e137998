/// @file derivatives.hpp
/// @brief Periodic differentiation along lattice axes.
///
/// Both schemes are circulant: the derivative of a line is a fixed kernel
/// applied at every node.  The spectral kernel is the exact trigonometric
/// differentiation matrix (derivatives of band-limited data are exact up to
/// roundoff; the Nyquist cosine is sent to zero).  The fd4 kernel is the
/// 4th-order centered five-point stencil.  Derivatives along inactive axes
/// are identically zero.

#pragma once

#include <array>
#include <utility>
#include <vector>

#include "g2coflow/field.hpp"
#include "g2coflow/grid.hpp"

namespace g2cf {

enum class Scheme { spectral = 0, fd4 = 1 };

const char* to_string(Scheme s);

struct DerivOps {
    Grid grid;
    Scheme scheme = Scheme::spectral;
    /// taps[a]: antisymmetric kernel pairs (offset d, weight w); the
    /// derivative at line node j sums w * (f[j+d] - f[j-d]) periodically.
    /// The pair form makes derivatives of constants exactly zero.  Empty
    /// when the axis is inactive.
    std::array<std::vector<std::pair<int, double>>, 7> taps;

    DerivOps() = default;
    DerivOps(const Grid& g, Scheme s);

    /// Componentwise d/dx^axis of every node slice; zero field when the axis
    /// is inactive.
    TensorField apply_axis(const TensorField& f, int axis) const;

    /// Same derivative restricted to one node: writes f.comps() values into
    /// `out` without materializing the whole derivative field.
    void deriv_at_node(const TensorField& f, int axis, int64_t node,
                       double* out) const;

    /// Fraction of line-spectrum energy above 2/3 of the Nyquist mode,
    /// with every mode amplified by |k|^(2*order) — the growth factor a
    /// derivative of that order applies.  0 when the field is identically 0.
    double highband_fraction(const TensorField& f, int order) const;
};

}  // namespace g2cf
