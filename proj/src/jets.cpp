#include "g2coflow/jets.hpp"

#include <cmath>
#include <memory>

#include "g2coflow/errors.hpp"
#include "g2coflow/parallel.hpp"

namespace g2cf {

namespace {

/// Per-worker buffers for raising every index of one node slice.
struct RaiseScratch {
    std::unique_ptr<double[]> a, b;
    int64_t cap = 0;
    // compound matrices of the inverse metric, rebuilt per node on demand
    std::vector<double> comp[8];
    int comp_built_mask = 0;  // bit p set when comp[p] matches this node

    void ensure(int64_t c) {
        if (cap >= c) return;
        a.reset(new double[c]);
        b.reset(new double[c]);
        cap = c;
    }
};

/// All indices of `in` raised (covariant slots) / lowered (contravariant)
/// so that dot(result, in) is the squared tensor norm over dense indices
/// divided by the shape multiplicity.  Returns the buffer holding the result.
const double* raise_node(const TensorShape& shape, const Metric& m,
                         const double* in, RaiseScratch& s) {
    int64_t c = 1;
    for (const Slot& sl : shape.slots) c *= kCompCount[sl.degree];
    s.ensure(c);
    s.comp_built_mask = 0;
    const double* src = in;
    double* dst = s.a.get();
    int64_t pre = 1;
    for (size_t si = 0; si < shape.slots.size(); ++si) {
        const Slot& sl = shape.slots[si];
        int sz = kCompCount[sl.degree];
        int64_t post = c / (pre * sz);
        if (sl.degree == 1) {
            const double* mat = sl.variance < 0 ? m.inv.data() : m.g.data();
            for (int64_t a = 0; a < pre; ++a)
                for (int i = 0; i < 7; ++i) {
                    double* o = dst + (a * 7 + i) * post;
                    const double* r0 = src + a * 7 * post;
                    for (int64_t b = 0; b < post; ++b) {
                        double acc = 0.0;
                        for (int q = 0; q < 7; ++q)
                            acc += mat[i * 7 + q] * r0[q * post + b];
                        o[b] = acc;
                    }
                }
        } else {
            int p = sl.degree;
            std::vector<double>& cm = s.comp[p];
            if (!(s.comp_built_mask & (1 << p))) {
                cm.resize(size_t(sz) * sz);
                compound_matrix(m.inv, p, cm.data());
                s.comp_built_mask |= 1 << p;
            }
            for (int64_t a = 0; a < pre; ++a)
                for (int i = 0; i < sz; ++i) {
                    double* o = dst + (int64_t(a) * sz + i) * post;
                    const double* r0 = src + a * int64_t(sz) * post;
                    for (int64_t b = 0; b < post; ++b) {
                        double acc = 0.0;
                        for (int q = 0; q < sz; ++q)
                            acc += cm[size_t(i) * sz + q] * r0[q * post + b];
                        o[b] = acc;
                    }
                }
        }
        src = dst;
        dst = dst == s.a.get() ? s.b.get() : s.a.get();
        pre *= sz;
    }
    return src;
}

double node_norm2_with(const TensorShape& shape, const Metric& m,
                       const double* comps, RaiseScratch& s) {
    int64_t c = 1;
    for (const Slot& sl : shape.slots) c *= kCompCount[sl.degree];
    const double* raised = raise_node(shape, m, comps, s);
    double acc = 0.0;
    for (int64_t i = 0; i < c; ++i) acc += raised[i] * comps[i];
    return shape.multiplicity() * acc;
}

/// sup / weighted-L2 partials over one node range, deterministic combine by
/// chunk index.
struct NormPartials {
    std::vector<double> maxv, sum;
};

FieldNorms combine(const NormPartials& p) {
    FieldNorms out;
    double s = 0.0;
    for (size_t i = 0; i < p.maxv.size(); ++i) {
        out.sup = std::fmax(out.sup, p.maxv[i]);
        s += p.sum[i];
    }
    out.l2 = std::sqrt(std::fmax(s, 0.0));
    out.sup = std::sqrt(std::fmax(out.sup, 0.0));
    return out;
}

}  // namespace

double node_norm2(const TensorShape& shape, const Metric& m,
                  const double* comps) {
    RaiseScratch s;
    return node_norm2_with(shape, m, comps, s);
}

FieldNorms tensor_norms(const TensorField& f, const MetricField& m) {
    int64_t nodes = f.grid.nodes();
    const int64_t chunk = 16;
    NormPartials p;
    p.maxv.assign(chunk_count(nodes, chunk), 0.0);
    p.sum.assign(p.maxv.size(), 0.0);
    parallel_chunks(nodes, chunk, [&](int ci, int64_t lo, int64_t hi) {
        RaiseScratch s;
        for (int64_t n = lo; n < hi; ++n) {
            double n2 = node_norm2_with(f.shape, m.at(n), f.node(n), s);
            p.maxv[ci] = std::fmax(p.maxv[ci], n2);
            p.sum[ci] += m.weight(n) * n2;
        }
    });
    return combine(p);
}

std::vector<JetEntry> iterated_norms(const TensorField& f,
                                     const MetricField& m,
                                     const ConnectionField& conn,
                                     const DerivOps& ops, int kmax) {
    if (kmax < 0 || kmax > 6)
        throw Error(ErrorCode::invalid_argument,
                    "derivative order must be between 0 and 6");
    std::vector<JetEntry> res;
    res.reserve(kmax + 1);
    auto push = [&](int k, FieldNorms n) {
        JetEntry e;
        e.k = k;
        e.sup = n.sup;
        e.l2 = n.l2;
        e.noise = ops.highband_fraction(f, k) > 1e-8;
        res.push_back(e);
    };

    TensorField cur = f;
    for (int k = 0; k < kmax; ++k) {
        push(k, tensor_norms(cur, m));
        if (k + 1 < kmax) cur = covariant_derivative(cur, conn, ops);
    }
    if (kmax == 0) {
        push(0, tensor_norms(f, m));
        return res;
    }

    // top level: produce each node row, contract, and discard
    TensorShape top = prepended(cur.shape);
    int64_t ctop = 7 * cur.comps();
    int64_t nodes = f.grid.nodes();
    const int64_t chunk = 4;
    // row + two raise buffers per worker
    int64_t per_worker = 3 * ctop * 8;
    int maxw = static_cast<int>(std::max<int64_t>(
        1, (int64_t(384) << 20) / std::max<int64_t>(per_worker, 1)));
    NormPartials p;
    p.maxv.assign(chunk_count(nodes, chunk), 0.0);
    p.sum.assign(p.maxv.size(), 0.0);
    parallel_chunks_capped(nodes, chunk, maxw,
                           [&](int ci, int64_t lo, int64_t hi) {
        std::unique_ptr<double[]> row(new double[ctop]);
        RaiseScratch s;
        for (int64_t n = lo; n < hi; ++n) {
            covariant_derivative_at_node(cur, conn, ops, n, row.get());
            double n2 = node_norm2_with(top, m.at(n), row.get(), s);
            p.maxv[ci] = std::fmax(p.maxv[ci], n2);
            p.sum[ci] += m.weight(n) * n2;
        }
    });
    push(kmax, combine(p));
    return res;
}

TensorField trace_laplacian(const TensorField& f, const MetricField& m,
                            const ConnectionField& conn, const DerivOps& ops) {
    TensorField lvl1 = covariant_derivative(f, conn, ops);
    TensorField lvl2 = covariant_derivative(lvl1, conn, ops);
    TensorField out(f.grid, f.shape);
    int64_t c = f.comps();
    int64_t nodes = f.grid.nodes();
    parallel_chunks(nodes, 64, [&](int, int64_t lo, int64_t hi) {
        for (int64_t n = lo; n < hi; ++n) {
            const Metric& mt = m.at(n);
            const double* in = lvl2.node(n);
            double* o = out.node(n);
            for (int64_t cc = 0; cc < c; ++cc) {
                double acc = 0.0;
                for (int i = 0; i < 7; ++i)
                    for (int j = 0; j < 7; ++j)
                        acc += mt.inv[i * 7 + j] * in[(i * 7 + j) * c + cc];
                o[cc] = acc;
            }
        }
    });
    return out;
}

}  // namespace g2cf
