#include "g2coflow/field.hpp"

#include <cmath>
#include <cstring>

namespace g2cf {

double TensorField::sup_abs() const {
    double r = 0.0;
    for (double v : data) r = std::fmax(r, std::fabs(v));
    return r;
}

void TensorField::fill_zero() { std::memset(data.data(), 0, data.size() * 8); }

TensorField form_field(const Grid& g, int degree) {
    return TensorField(g, TensorShape{{static_cast<uint8_t>(degree), -1}});
}

PointForm form_at(const TensorField& f, int64_t node) {
    PointForm v(f.shape.slots[0].degree);
    const double* p = f.node(node);
    for (int c = 0; c < v.size(); ++c) v.comp[c] = p[c];
    return v;
}

void set_form(TensorField& f, int64_t node, const PointForm& v) {
    double* p = f.node(node);
    for (int c = 0; c < v.size(); ++c) p[c] = v.comp[c];
}

TensorField constant_form_field(const Grid& g, const PointForm& v) {
    TensorField f = form_field(g, v.degree);
    for (int64_t n = 0; n < g.nodes(); ++n) set_form(f, n, v);
    return f;
}

void expand_node_dense(const TensorShape& shape, const double* comp, double* dense) {
    const auto& tb = FormTables::get();
    // dense index loops run per block; recursion over slots
    size_t nslots = shape.slots.size();
    int rank = shape.rank();
    int64_t total = 1;
    for (int i = 0; i < rank; ++i) total *= kDim;
    std::array<uint8_t, 12> idx{};
    for (int64_t flat = 0; flat < total; ++flat) {
        int64_t rem = flat;
        for (int i = rank - 1; i >= 0; --i) {
            idx[i] = static_cast<uint8_t>(rem % kDim);
            rem /= kDim;
        }
        double sign = 1.0;
        int64_t c = 0;
        int at = 0;
        for (size_t s = 0; s < nslots && sign != 0.0; ++s) {
            int p = shape.slots[s].degree;
            std::array<uint8_t, 7> t{};
            for (int i = 0; i < p; ++i) t[i] = idx[at + i];
            int sg = sort_sign(t.data(), p);
            if (sg == 0) {
                sign = 0.0;
                break;
            }
            int mask = 0;
            for (int i = 0; i < p; ++i) mask |= 1 << t[i];
            c = c * kCompCount[p] + tb.pos[p][mask];
            sign *= sg;
            at += p;
        }
        dense[flat] = sign == 0.0 ? 0.0 : sign * comp[c];
    }
}

void axpy(TensorField& y, double a, const TensorField& x) {
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

TensorField lincomb(double a, const TensorField& x, double b, const TensorField& y) {
    TensorField out(x.grid, x.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a * x.data[i] + b * y.data[i];
    return out;
}

}  // namespace g2cf
