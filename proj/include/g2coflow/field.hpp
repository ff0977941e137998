/// @file field.hpp
/// @brief Tensor fields on the lattice with antisymmetric-block storage.
///
/// A field's index structure is a list of slots; each slot is either a plain
/// 7-valued index or an antisymmetric block of degree p stored on the C(7,p)
/// increasing tuples.  Differential forms are single-slot fields.  High-order
/// covariant derivatives prepend plain covariant slots, so the storage grows
/// as C(7,p) * 7^k instead of 7^(p+k).

#pragma once

#include <cstdint>
#include <vector>

#include "g2coflow/forms.hpp"
#include "g2coflow/grid.hpp"

namespace g2cf {

struct Slot {
    uint8_t degree = 1;   // antisymmetric block degree (1 = plain index)
    int8_t variance = -1; // -1 covariant, +1 contravariant (degree 1 only)
    bool operator==(const Slot& o) const {
        return degree == o.degree && variance == o.variance;
    }
};

struct TensorShape {
    std::vector<Slot> slots;

    TensorShape() = default;
    TensorShape(std::initializer_list<Slot> s) : slots(s) {}

    int rank() const {
        int r = 0;
        for (const Slot& s : slots) r += s.degree;
        return r;
    }
    int64_t comps() const {
        int64_t n = 1;
        for (const Slot& s : slots) n *= kCompCount[s.degree];
        return n;
    }
    int64_t stride(size_t slot) const {
        int64_t n = 1;
        for (size_t s = slot + 1; s < slots.size(); ++s)
            n *= kCompCount[slots[s].degree];
        return n;
    }
    /// multiplicity factor relating compact dot products to tensor norms
    double multiplicity() const {
        double f = 1.0;
        for (const Slot& s : slots)
            for (int i = 2; i <= s.degree; ++i) f *= i;
        return f;
    }
    bool operator==(const TensorShape& o) const { return slots == o.slots; }
};

struct TensorField {
    Grid grid;
    TensorShape shape;
    std::vector<double> data;  // [node][comp]

    TensorField() = default;
    TensorField(const Grid& g, TensorShape s)
        : grid(g), shape(std::move(s)),
          data(static_cast<size_t>(g.nodes() * shape.comps()), 0.0) {}

    int64_t comps() const { return shape.comps(); }
    double* node(int64_t n) { return data.data() + n * comps(); }
    const double* node(int64_t n) const { return data.data() + n * comps(); }

    double sup_abs() const;
    void fill_zero();
};

/// Shape of a covariant derivative: one covariant plain slot prepended.
inline TensorShape prepended(const TensorShape& s) {
    TensorShape o;
    o.slots.reserve(s.slots.size() + 1);
    o.slots.push_back({1, -1});
    for (const Slot& sl : s.slots) o.slots.push_back(sl);
    return o;
}

/// Field of p-forms (one covariant antisymmetric slot).
TensorField form_field(const Grid& g, int degree);

/// Copies the point value into / out of a form field node.
PointForm form_at(const TensorField& f, int64_t node);
void set_form(TensorField& f, int64_t node, const PointForm& v);

/// A form field whose every node carries the same point value.
TensorField constant_form_field(const Grid& g, const PointForm& v);

/// expand a compact node slice into the dense rank-r array (7^rank entries),
/// applying antisymmetry signs blockwise
void expand_node_dense(const TensorShape& shape, const double* comp, double* dense);

void axpy(TensorField& y, double a, const TensorField& x);  // y += a*x
TensorField lincomb(double a, const TensorField& x, double b, const TensorField& y);

}  // namespace g2cf
