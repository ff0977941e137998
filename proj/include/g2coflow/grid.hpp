/// @file grid.hpp
/// @brief Uniform periodic lattice on the 7-torus.
///
/// Axes with a single node are inactive: fields are constant along them and
/// derivatives in those directions vanish identically.  Node storage is
/// row-major with axis 0 slowest.

#pragma once

#include <array>
#include <cstdint>

namespace g2cf {

struct Grid {
    std::array<int, 7> dims{1, 1, 1, 1, 1, 1, 1};
    std::array<double, 7> lengths{};

    Grid() {
        for (double& l : lengths) l = 6.283185307179586476925;
    }

    int64_t nodes() const {
        int64_t n = 1;
        for (int d : dims) n *= d;
        return n;
    }
    bool active(int a) const { return dims[a] > 1; }
    int active_count() const {
        int n = 0;
        for (int a = 0; a < 7; ++a) n += active(a) ? 1 : 0;
        return n;
    }
    double spacing(int a) const { return lengths[a] / dims[a]; }
    double min_spacing() const {
        double h = lengths[0];  // fall back to the full length when inert
        bool any = false;
        for (int a = 0; a < 7; ++a)
            if (active(a)) {
                double s = spacing(a);
                h = any ? (s < h ? s : h) : s;
                any = true;
            }
        return h;
    }
    std::array<int64_t, 7> strides() const {
        std::array<int64_t, 7> s{};
        s[6] = 1;
        for (int a = 5; a >= 0; --a) s[a] = s[a + 1] * dims[a + 1];
        return s;
    }
    int64_t index(const std::array<int, 7>& c) const {
        auto s = strides();
        int64_t n = 0;
        for (int a = 0; a < 7; ++a) n += c[a] * s[a];
        return n;
    }
    std::array<int, 7> coords(int64_t node) const {
        std::array<int, 7> c{};
        for (int a = 6; a >= 0; --a) {
            c[a] = static_cast<int>(node % dims[a]);
            node /= dims[a];
        }
        return c;
    }
    bool operator==(const Grid& o) const {
        return dims == o.dims && lengths == o.lengths;
    }
};

}  // namespace g2cf
