#include "hdi/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdi/error.hpp"

namespace hdi::numcore {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void finalize(std::vector<Real>& v) {
    if (precision() == Precision::F32) {
        for (auto& x : v) x = store(x);
    }
}

Tensor make(Shape shape, std::vector<Real> data) {
    finalize(data);
    return Tensor(std::move(shape), std::move(data));
}

template <class F, class D>
Tensor unary(const char* name, const Tensor& x, F f, D df) {
    std::vector<Real> out(x.numel());
    const auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    Tensor y = make(x.shape(), std::move(out));
    ImplPtr xi = x.impl();
    ImplPtr yi = y.impl();
    return record(name, {x}, y, [xi, yi, df](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * df(xi->data[i], yi->data[i]);
    });
}

std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// out[m, n] (+)= a[m, k] * b[k, n]
void gemm(const Real* a, const Real* b, Real* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* orow = out + i * n;
        const Real* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == 0.0) continue;
            const Real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m, n] += a[m, k] * b[n, k]^T
void gemm_nt(const Real* a, const Real* b, Real* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const Real* brow = b + j * k;
            Real s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            out[i * n + j] += s;
        }
    }
}

// out[k, n] += a[m, k]^T * b[m, n]
void gemm_tn(const Real* a, const Real* b, Real* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        const Real* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == 0.0) continue;
            Real* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    Tensor y = make(a.shape(), std::move(out));
    return record("add", {a, b}, y, [](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        for (int k = 0; k < 2; ++k) {
            if (gi[k].empty()) continue;
            for (std::size_t i = 0; i < g.size(); ++i) gi[k][i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    Tensor y = make(a.shape(), std::move(out));
    return record("sub", {a, b}, y, [](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (!gi[0].empty())
            for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
        if (!gi[1].empty())
            for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] -= g[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<Real> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    Tensor y = make(a.shape(), std::move(out));
    ImplPtr ai = a.impl(), bi = b.impl();
    return record("mul", {a, b}, y, [ai, bi](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (!gi[0].empty())
            for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * bi->data[i];
        if (!gi[1].empty())
            for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] += g[i] * ai->data[i];
    });
}

Tensor scale(const Tensor& x, Real c) {
    return unary("scale", x, [c](Real v) { return c * v; }, [c](Real, Real) { return c; });
}

Tensor add_scalar(const Tensor& x, Real c) {
    return unary("add_scalar", x, [c](Real v) { return v + c; }, [](Real, Real) { return 1.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr Real inv_sqrt2 = 0.70710678118654752440;
    constexpr Real inv_sqrt2pi = 0.39894228040143267794;
    return unary(
        "gelu", x, [](Real v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [](Real v, Real) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v); });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](Real v) { return v > 0 ? v : 0.0; }, [](Real v, Real) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x,
        [](Real v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const Real e = std::exp(v);
            return e / (1.0 + e);
        },
        [](Real, Real y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
    for (auto v : x.data()) {
        if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
    }
    return unary("log", x, [](Real v) { return std::log(v); }, [](Real v, Real) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        "abs", x, [](Real v) { return std::fabs(v); },
        [](Real v, Real) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
    return unary(
        "clamp", x, [lo, hi](Real v) { return std::clamp(v, lo, hi); },
        [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() ? add(a, b) : add(a, broadcast_to(b, a.shape()));
}

Tensor mul_broadcast(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() ? mul(a, b) : mul(a, broadcast_to(b, a.shape()));
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel_of(shape) != x.numel()) {
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor y(std::move(shape), x.values());
    return record("reshape", {x}, y, [](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
    });
}

Tensor gather(const Tensor& x, std::vector<std::int64_t> index, Shape out_shape) {
    if (numel_of(out_shape) != index.size()) {
        throw DimensionError("gather: index length " + std::to_string(index.size()) + " vs shape " +
                             shape_str(out_shape));
    }
    const auto n = static_cast<std::int64_t>(x.numel());
    std::vector<Real> out(index.size());
    const auto in = x.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto k = index[i];
        if (k >= n) throw DimensionError("gather: index out of range");
        out[i] = k < 0 ? 0.0 : in[static_cast<std::size_t>(k)];
    }
    Tensor y(std::move(out_shape), std::move(out));
    auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
    return record("gather", {x}, y, [idx](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        const auto& ix = *idx;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (ix[i] >= 0) gi[0][static_cast<std::size_t>(ix[i])] += g[i];
        }
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const auto& s = x.shape();
    if (perm.size() != s.size()) throw DimensionError("permute: rank mismatch");
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = s[perm[i]];
    const auto in_st = strides_of(s);
    const auto out_st = strides_of(out_shape);
    std::vector<std::int64_t> index(x.numel());
    for (std::size_t o = 0; o < index.size(); ++o) {
        std::size_t rem = o, src = 0;
        for (std::size_t d = 0; d < out_shape.size(); ++d) {
            const std::size_t c = rem / out_st[d];
            rem %= out_st[d];
            src += c * in_st[perm[d]];
        }
        index[o] = static_cast<std::int64_t>(src);
    }
    return gather(x, std::move(index), out_shape);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
    const auto& s = x.shape();
    if (s.size() > shape.size()) throw DimensionError("broadcast_to: target rank too small");
    const std::size_t lead = shape.size() - s.size();
    Shape padded(shape.size(), 1);
    for (std::size_t i = 0; i < s.size(); ++i) padded[lead + i] = s[i];
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (padded[i] != shape[i] && padded[i] != 1) {
            throw DimensionError("broadcast_to: cannot broadcast " + shape_str(s) + " to " + shape_str(shape));
        }
    }
    const auto in_st = strides_of(padded);
    const auto out_st = strides_of(shape);
    std::vector<std::int64_t> index(numel_of(shape));
    for (std::size_t o = 0; o < index.size(); ++o) {
        std::size_t rem = o, src = 0;
        for (std::size_t d = 0; d < shape.size(); ++d) {
            const std::size_t c = rem / out_st[d];
            rem %= out_st[d];
            if (padded[d] != 1) src += c * in_st[d];
        }
        index[o] = static_cast<std::int64_t>(src);
    }
    return gather(x, std::move(index), shape);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != s0[d]) {
                throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
            }
        }
        total += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    Shape out_shape = s0;
    out_shape[axis] = total;
    std::vector<Real> out(numel_of(out_shape));
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.shape()[axis] * inner;
        const auto in = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                        out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + off));
        }
        widths.push_back(w);
        off += w;
    }
    Tensor y(out_shape, std::move(out));
    const std::size_t row = total * inner;
    return record("concat", parts, y,
                  [widths, outer, row](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                      std::size_t off = 0;
                      for (std::size_t k = 0; k < widths.size(); ++k) {
                          if (!gi[k].empty()) {
                              for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t j = 0; j < widths[k]; ++j)
                                      gi[k][o * widths[k] + j] += g[o * row + off + j];
                          }
                          off += widths[k];
                      }
                  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const auto& s = x.shape();
    if (axis >= s.size() || begin > end || end > s[axis]) {
        throw DimensionError("slice out of range on " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    Shape out_shape = s;
    out_shape[axis] = end - begin;
    std::vector<std::int64_t> index;
    index.reserve(numel_of(out_shape));
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t a = begin; a < end; ++a)
            for (std::size_t i = 0; i < inner; ++i)
                index.push_back(static_cast<std::int64_t>((o * s[axis] + a) * inner + i));
    return gather(x, std::move(index), out_shape);
}

Tensor sum(const Tensor& x) {
    Real s = 0.0;
    for (auto v : x.data()) s += v;
    Tensor y = make({}, {s});
    return record("sum", {x}, y, [](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        for (auto& v : gi[0]) v += g[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(x), 1.0 / static_cast<Real>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    const auto& s = x.shape();
    if (axis >= s.size()) throw DimensionError("sum_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t n = s[axis];
    std::vector<Real> out(outer * inner, 0.0);
    const auto in = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += in[(o * n + a) * inner + i];
    Shape out_shape;
    for (std::size_t d = 0; d < s.size(); ++d) {
        if (d == axis) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(s[d]);
        }
    }
    Tensor y = make(out_shape, std::move(out));
    return record("sum_axis", {x}, y, [outer, inner, n](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t i = 0; i < inner; ++i) gi[0][(o * n + a) * inner + i] += g[o * inner + i];
    });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<Real>(x.dim(axis)));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<Real> out(m * n, 0.0);
    gemm(a.data().data(), b.data().data(), out.data(), m, k, n);
    Tensor y = make({m, n}, std::move(out));
    ImplPtr ai = a.impl(), bi = b.impl();
    return record("matmul", {a, b}, y, [ai, bi, m, k, n](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (!gi[0].empty()) gemm_nt(g.data(), bi->data.data(), gi[0].data(), m, n, k);
        if (!gi[1].empty()) gemm_tn(ai->data.data(), g.data(), gi[1].data(), m, k, n);
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.rank() < 2 || b.rank() != a.rank()) {
        throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t r = a.rank();
    std::size_t batch = 1;
    for (std::size_t d = 0; d + 2 < r; ++d) {
        if (a.dim(d) != b.dim(d)) {
            throw DimensionError("bmm: batch dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
        batch *= a.dim(d);
    }
    const std::size_t m = a.dim(r - 2), k = a.dim(r - 1);
    const std::size_t bk = transpose_b ? b.dim(r - 1) : b.dim(r - 2);
    const std::size_t n = transpose_b ? b.dim(r - 2) : b.dim(r - 1);
    if (bk != k) {
        throw DimensionError("bmm: inner dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<Real> out(batch * m * n, 0.0);
    const Real* ap = a.data().data();
    const Real* bp = b.data().data();
    for (std::size_t t = 0; t < batch; ++t) {
        if (transpose_b)
            gemm_nt(ap + t * m * k, bp + t * n * k, out.data() + t * m * n, m, k, n);
        else
            gemm(ap + t * m * k, bp + t * k * n, out.data() + t * m * n, m, k, n);
    }
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor y = make(out_shape, std::move(out));
    ImplPtr ai = a.impl(), bi = b.impl();
    return record("bmm", {a, b}, y,
                  [ai, bi, batch, m, k, n, transpose_b](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                      for (std::size_t t = 0; t < batch; ++t) {
                          const Real* gt = g.data() + t * m * n;
                          const Real* at = ai->data.data() + t * m * k;
                          const Real* bt = bi->data.data() + t * k * n;
                          if (!gi[0].empty()) {
                              // dA = G * B^T (or G * B when b was transposed)
                              if (transpose_b)
                                  gemm(gt, bt, gi[0].data() + t * m * k, m, n, k);
                              else
                                  gemm_nt(gt, bt, gi[0].data() + t * m * k, m, n, k);
                          }
                          if (!gi[1].empty()) {
                              if (transpose_b)  // dB[n, k] = G^T * A
                                  gemm_tn(gt, at, gi[1].data() + t * n * k, m, n, k);
                              else  // dB[k, n] = A^T * G
                                  gemm_tn(at, gt, gi[1].data() + t * k * n, m, k, n);
                          }
                      }
                  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.dim(0)) {
        throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const std::size_t in = w.dim(0), outc = w.dim(1);
    const std::size_t rows = x.numel() / in;
    const bool has_bias = bias.defined();
    if (has_bias && (bias.numel() != outc)) {
        throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(outc) +
                             " outputs");
    }
    std::vector<Real> out(rows * outc, 0.0);
    if (has_bias) {
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(bias.data().begin(), outc, out.begin() + r * outc);
    }
    gemm(x.data().data(), w.data().data(), out.data(), rows, in, outc);
    Shape out_shape = x.shape();
    out_shape.back() = outc;
    Tensor y = make(out_shape, std::move(out));
    ImplPtr xi = x.impl(), wi = w.impl();
    std::vector<Tensor> inputs{x, w};
    if (has_bias) inputs.push_back(bias);
    return record("linear", inputs, y,
                  [xi, wi, rows, in, outc, has_bias](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                      if (!gi[0].empty()) gemm_nt(g.data(), wi->data.data(), gi[0].data(), rows, outc, in);
                      if (!gi[1].empty()) gemm_tn(xi->data.data(), g.data(), gi[1].data(), rows, in, outc);
                      if (has_bias && !gi[2].empty()) {
                          for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < outc; ++j) gi[2][j] += g[r * outc + j];
                      }
                  });
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() < 1 || x.shape().back() < 1) throw DimensionError("softmax_rows: empty last axis");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    const auto in = x.data();
    std::vector<Real> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* row = in.data() + r * n;
        Real mx = row[0];
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(row[j])) throw NumericError("softmax_rows: non-finite input");
            mx = std::max(mx, row[j]);
        }
        Real s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[r * n + j] = std::exp(row[j] - mx);
            s += out[r * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] /= s;
    }
    Tensor y = make(x.shape(), std::move(out));
    ImplPtr yi = y.impl();
    return record("softmax", {x}, y, [yi, rows, n](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        const auto& yv = yi->data;
        for (std::size_t r = 0; r < rows; ++r) {
            Real dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * yv[r * n + j];
            for (std::size_t j = 0; j < n; ++j) gi[0][r * n + j] += yv[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

namespace {

// Shared normalization kernel. Statistics run over `count` samples with
// stride `stride` for each of `channels` groups:
//   layer norm: groups are rows, samples the row entries;
//   batch norm: groups are channels, samples the rows.
struct NormGeometry {
    std::size_t groups;
    std::size_t count;
    std::size_t group_step;
    std::size_t sample_step;
    std::size_t at(std::size_t g, std::size_t i) const { return g * group_step + i * sample_step; }
};

void norm_backward(const NormGeometry& geo, std::span<const Real> g, const std::vector<Real>& xhat,
                   const std::vector<Real>& inv_std, std::span<const Real> gamma, bool gamma_per_sample,
                   std::span<Real> gx) {
    const Real n = static_cast<Real>(geo.count);
    for (std::size_t c = 0; c < geo.groups; ++c) {
        Real mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t i = 0; i < geo.count; ++i) {
            const std::size_t k = geo.at(c, i);
            const Real gm = gamma_per_sample ? gamma[i] : gamma[c];
            const Real d = g[k] * gm;
            mean_d += d;
            mean_dx += d * xhat[k];
        }
        mean_d /= n;
        mean_dx /= n;
        for (std::size_t i = 0; i < geo.count; ++i) {
            const std::size_t k = geo.at(c, i);
            const Real gm = gamma_per_sample ? gamma[i] : gamma[c];
            gx[k] += inv_std[c] * (g[k] * gm - mean_d - xhat[k] * mean_dx);
        }
    }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
    if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("layer_norm: empty channel axis");
    const std::size_t c = x.shape().back();
    if (gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("layer_norm: affine parameters do not match channel count " + std::to_string(c));
    }
    const std::size_t rows = x.numel() / c;
    const NormGeometry geo{rows, c, c, 1};
    const auto in = x.data();
    auto xhat = std::make_shared<std::vector<Real>>(x.numel());
    auto inv_std = std::make_shared<std::vector<Real>>(rows);
    std::vector<Real> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        Real mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += in[r * c + j];
        mu /= static_cast<Real>(c);
        Real var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (in[r * c + j] - mu) * (in[r * c + j] - mu);
        var /= static_cast<Real>(c);
        const Real is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const Real h = (in[r * c + j] - mu) * is;
            (*xhat)[r * c + j] = h;
            out[r * c + j] = gamma[j] * h + beta[j];
        }
    }
    Tensor y = make(x.shape(), std::move(out));
    ImplPtr gi_ = gamma.impl();
    return record("layer_norm", {x, gamma, beta}, y,
                  [geo, xhat, inv_std, gi_, c](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                      if (!gi[0].empty()) {
                          // inv_std is per row (group); gamma varies along the sample axis.
                          norm_backward(geo, g, *xhat, *inv_std, gi_->data, true, gi[0]);
                      }
                      for (std::size_t r = 0; r < geo.groups; ++r) {
                          for (std::size_t j = 0; j < c; ++j) {
                              const std::size_t k = r * c + j;
                              if (!gi[1].empty()) gi[1][j] += g[k] * (*xhat)[k];
                              if (!gi[2].empty()) gi[2][j] += g[k];
                          }
                      }
                  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode) {
    if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("batch_norm: empty channel axis");
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.numel() / c;
    if (gamma.numel() != c || beta.numel() != c || stats.running_mean.numel() != c ||
        stats.running_var.numel() != c) {
        throw DimensionError("batch_norm: parameters do not match channel count " + std::to_string(c));
    }
    const auto in = x.data();
    std::vector<Real> out(x.numel());
    if (mode == Mode::Eval) {
        auto inv_std = std::make_shared<std::vector<Real>>(c);
        auto xhat = std::make_shared<std::vector<Real>>(x.numel());
        for (std::size_t j = 0; j < c; ++j) (*inv_std)[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t k = r * c + j;
                const Real h = (in[k] - stats.running_mean[j]) * (*inv_std)[j];
                (*xhat)[k] = h;
                out[k] = gamma[j] * h + beta[j];
            }
        }
        Tensor y = make(x.shape(), std::move(out));
        ImplPtr gi_ = gamma.impl();
        return record("batch_norm", {x, gamma, beta}, y,
                      [xhat, inv_std, gi_, rows, c](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                          for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < c; ++j) {
                                  const std::size_t k = r * c + j;
                                  if (!gi[0].empty()) gi[0][k] += g[k] * gi_->data[j] * (*inv_std)[j];
                                  if (!gi[1].empty()) gi[1][j] += g[k] * (*xhat)[k];
                                  if (!gi[2].empty()) gi[2][j] += g[k];
                              }
                          }
                      });
    }

    if (rows < 2) throw ConfigError("batch_norm: train mode needs at least 2 samples per channel");
    const NormGeometry geo{c, rows, 1, c};
    auto xhat = std::make_shared<std::vector<Real>>(x.numel());
    auto inv_std = std::make_shared<std::vector<Real>>(c);
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    const Real n = static_cast<Real>(rows);
    for (std::size_t j = 0; j < c; ++j) {
        Real mu = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mu += in[r * c + j];
        mu /= n;
        Real var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) var += (in[r * c + j] - mu) * (in[r * c + j] - mu);
        var /= n;
        const Real is = 1.0 / std::sqrt(var + stats.eps);
        (*inv_std)[j] = is;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t k = r * c + j;
            (*xhat)[k] = (in[k] - mu) * is;
            out[k] = gamma[j] * (*xhat)[k] + beta[j];
        }
        rm[j] = store(stats.momentum * rm[j] + (1.0 - stats.momentum) * mu);
        rv[j] = store(stats.momentum * rv[j] + (1.0 - stats.momentum) * var * n / (n - 1.0));
    }
    Tensor y = make(x.shape(), std::move(out));
    ImplPtr gi_ = gamma.impl();
    return record("batch_norm", {x, gamma, beta}, y,
                  [geo, xhat, inv_std, gi_, rows, c](std::span<const Real> g, std::span<const std::span<Real>> gi) {
                      if (!gi[0].empty()) norm_backward(geo, g, *xhat, *inv_std, gi_->data, false, gi[0]);
                      for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t j = 0; j < c; ++j) {
                              const std::size_t k = r * c + j;
                              if (!gi[1].empty()) gi[1][j] += g[k] * (*xhat)[k];
                              if (!gi[2].empty()) gi[2][j] += g[k];
                          }
                      }
                  });
}

Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout rate must lie in [0, 1)");
    if (rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<Real> mask(x.numel());
    for (auto& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor maxpool2d(const Tensor& x, std::size_t k) {
    if (x.rank() != 4) throw DimensionError("maxpool2d expects [B,H,W,C], got " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (k == 0 || h % k != 0 || w % k != 0) {
        throw DimensionError("maxpool2d: spatial dims " + shape_str(x.shape()) + " not divisible by " +
                             std::to_string(k));
    }
    const std::size_t ho = h / k, wo = w / k;
    std::vector<Real> out(b * ho * wo * c);
    auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
    const auto in = x.data();
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    std::size_t best = ((n * h + i * k) * w + j * k) * c + ch;
                    for (std::size_t di = 0; di < k; ++di)
                        for (std::size_t dj = 0; dj < k; ++dj) {
                            const std::size_t src = ((n * h + i * k + di) * w + j * k + dj) * c + ch;
                            if (in[src] > in[best]) best = src;
                        }
                    const std::size_t o = ((n * ho + i) * wo + j) * c + ch;
                    out[o] = in[best];
                    (*arg)[o] = best;
                }
    Tensor y({b, ho, wo, c}, std::move(out));
    return record("maxpool2d", {x}, y, [arg](std::span<const Real> g, std::span<const std::span<Real>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t o = 0; o < g.size(); ++o) gi[0][(*arg)[o]] += g[o];
    });
}

std::vector<std::int64_t> im2col_index(const Shape& s, std::size_t kernel, std::size_t stride, std::size_t pad,
                                       std::size_t& out_h, std::size_t& out_w) {
    if (s.size() != 4) throw DimensionError("im2col expects [B,H,W,C], got " + shape_str(s));
    const std::size_t b = s[0], h = s[1], w = s[2], c = s[3];
    if (stride == 0 || h + 2 * pad < kernel || w + 2 * pad < kernel) {
        throw DimensionError("im2col: kernel larger than padded input " + shape_str(s));
    }
    out_h = (h + 2 * pad - kernel) / stride + 1;
    out_w = (w + 2 * pad - kernel) / stride + 1;
    std::vector<std::int64_t> index;
    index.reserve(b * out_h * out_w * kernel * kernel * c);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j)
                for (std::size_t di = 0; di < kernel; ++di)
                    for (std::size_t dj = 0; dj < kernel; ++dj) {
                        const auto y = static_cast<std::int64_t>(i * stride + di) - static_cast<std::int64_t>(pad);
                        const auto xx = static_cast<std::int64_t>(j * stride + dj) - static_cast<std::int64_t>(pad);
                        const bool inside = y >= 0 && xx >= 0 && y < static_cast<std::int64_t>(h) &&
                                            xx < static_cast<std::int64_t>(w);
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            index.push_back(inside ? static_cast<std::int64_t>(
                                                         ((n * h + static_cast<std::size_t>(y)) * w +
                                                          static_cast<std::size_t>(xx)) *
                                                             c +
                                                         ch)
                                                   : -1);
                        }
                    }
    return index;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kernel, std::size_t stride,
              std::size_t pad) {
    std::size_t oh = 0, ow = 0;
    auto index = im2col_index(x.shape(), kernel, stride, pad, oh, ow);
    const std::size_t cols = kernel * kernel * x.dim(3);
    if (w.rank() != 2 || w.dim(0) != cols) {
        throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " does not match kernel columns " +
                             std::to_string(cols));
    }
    Tensor patches = gather(x, std::move(index), {x.dim(0), oh, ow, cols});
    return linear(patches, w, bias);
}

}  // namespace hdi::numcore
