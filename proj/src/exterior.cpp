#include "g2coflow/exterior.hpp"

#include <array>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

TensorField exterior_d(const TensorField& a, const DerivOps& ops) {
    int p = a.shape.slots[0].degree;
    if (a.shape.slots.size() != 1 || p > 6)
        throw Error(ErrorCode::invalid_argument,
                    "exterior derivative needs a single form slot of degree <= 6");
    const auto& tb = FormTables::get();
    // ins[m][c]: component of e^m ^ (c-th basis p-form), sign * (dst + 1)
    std::array<std::array<int16_t, 35>, 7> ins{};
    int np = kCompCount[p];
    for (int m = 0; m < 7; ++m)
        for (int c = 0; c < np; ++c) {
            int mask = 0;
            for (int i = 0; i < p; ++i) mask |= 1 << tb.tuples[p][c][i];
            if (mask & (1 << m)) continue;
            std::array<uint8_t, 7> idx{};
            idx[0] = static_cast<uint8_t>(m);
            for (int i = 0; i < p; ++i) idx[i + 1] = tb.tuples[p][c][i];
            int sg = sort_sign(idx.data(), p + 1);
            ins[m][c] = static_cast<int16_t>(
                sg * (tb.pos[p + 1][mask | (1 << m)] + 1));
        }

    TensorField out = form_field(a.grid, p + 1);
    int64_t nodes = a.grid.nodes();
    for (int m = 0; m < 7; ++m) {
        if (!a.grid.active(m)) continue;
        TensorField dm = ops.apply_axis(a, m);
        parallel_chunks(nodes, 64, [&](int, int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n) {
                const double* in = dm.node(n);
                double* o = out.node(n);
                for (int c = 0; c < np; ++c) {
                    int16_t enc = ins[m][c];
                    if (enc == 0) continue;
                    int dst = (enc > 0 ? enc : -enc) - 1;
                    o[dst] += enc > 0 ? in[c] : -in[c];
                }
            }
        });
    }
    return out;
}

TensorField hodge_star_field(const TensorField& a, const MetricField& m) {
    int p = a.shape.slots[0].degree;
    TensorField out = form_field(a.grid, 7 - p);
    int64_t nodes = a.grid.nodes();
    parallel_chunks(nodes, 64, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n)
            set_form(out, n, hodge_star(form_at(a, n), m.at(n)));
    });
    return out;
}

TensorField codifferential(const TensorField& a, const MetricField& m,
                           const DerivOps& ops) {
    int p = a.shape.slots[0].degree;
    if (p < 1)
        throw Error(ErrorCode::invalid_argument,
                    "codifferential needs degree >= 1");
    TensorField s1 = hodge_star_field(a, m);
    TensorField ds = exterior_d(s1, ops);
    TensorField out = hodge_star_field(ds, m);
    if (p % 2 == 1)
        for (double& v : out.data) v = -v;
    return out;
}

TensorField hodge_laplacian(const TensorField& a, const MetricField& m,
                            const DerivOps& ops) {
    int p = a.shape.slots[0].degree;
    TensorField out = form_field(a.grid, p);
    if (p < 7) {
        TensorField t = codifferential(exterior_d(a, ops), m, ops);
        axpy(out, 1.0, t);
    }
    if (p > 0) {
        TensorField t = exterior_d(codifferential(a, m, ops), ops);
        axpy(out, 1.0, t);
    }
    return out;
}

double grid_inner(const TensorField& a, const TensorField& b,
                  const MetricField& m) {
    double mult = a.shape.multiplicity();
    int64_t nodes = a.grid.nodes();
    const int64_t chunk = 16;
    std::vector<double> partial(chunk_count(nodes, chunk), 0.0);
    parallel_chunks(nodes, chunk, [&](int ci, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n)
            partial[ci] += m.weight(n) *
                           inner_tensor(form_at(a, n), form_at(b, n), m.at(n)) /
                           mult;
    });
    double s = 0.0;
    for (double v : partial) s += v;
    return s;
}

}  // namespace g2cf
