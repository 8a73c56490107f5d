// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace ssmdiff::ops {

namespace kernel {

// Every c[i][j] accumulates a[i][p] * b[p][j] for p = 0..k-1 in order, so
// a row's result never depends on where it sits in the matrix. The 4x8
// register tiles only change which elements are in flight together.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
  constexpr std::size_t kR = 4, kC = 8;
  std::size_t i = 0;
  for (; i + kR <= m; i += kR) {
    std::size_t j = 0;
    for (; j + kC <= n; j += kC) {
      double acc[kR][kC];
      for (std::size_t r = 0; r < kR; ++r)
        for (std::size_t q = 0; q < kC; ++q) acc[r][q] = c[(i + r) * n + j + q];
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j;
        for (std::size_t r = 0; r < kR; ++r) {
          const double av = a[(i + r) * k + p];
          for (std::size_t q = 0; q < kC; ++q) acc[r][q] += av * brow[q];
        }
      }
      for (std::size_t r = 0; r < kR; ++r)
        for (std::size_t q = 0; q < kC; ++q) c[(i + r) * n + j + q] = acc[r][q];
    }
    for (std::size_t r = 0; r < kR && j < n; ++r) {
      double* crow = c + (i + r) * n;
      const double* arow = a + (i + r) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (std::size_t q = j; q < n; ++q) crow[q] += av * brow[q];
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t q = 0; q < n; ++q) crow[q] += av * brow[q];
    }
  }
}

void transpose2d(const double* src, double* dst, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

}  // namespace kernel

namespace {

using kernel::gemm_acc;

void same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(op, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void accumulate(Tape& t, std::size_t id, std::span<const double> g) {
  if (!t.requires_grad(id)) return;
  NdArray& acc = t.grad_accumulator(id);
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Elementwise op with derivative expressed through input and output.
template <class F, class DF>
Var unary(Var x, const char* op, F f, DF df) {
  const NdArray& xv = x.value();
  NdArray out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, df](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        const NdArray& xv = t.value(xi);
        const NdArray& yv = t.value(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * df(xv[i], yv[i]);
      },
      op);
}

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView view_axis(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace

Var add(Var a, Var b) {
  same_shape("add", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi](Tape& t, std::size_t self) {
        accumulate(t, ai, t.out_grad(self).data());
        accumulate(t, bi, t.out_grad(self).data());
      },
      "add");
}

Var sub(Var a, Var b) {
  same_shape("sub", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi](Tape& t, std::size_t self) {
        accumulate(t, ai, t.out_grad(self).data());
        if (!t.requires_grad(bi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(bi);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= g[i];
      },
      "sub");
}

Var mul(Var a, Var b) {
  same_shape("mul", a, b);
  NdArray out = a.value();
  const NdArray& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        if (t.requires_grad(ai)) {
          const NdArray& bv = t.value(bi);
          NdArray& acc = t.grad_accumulator(ai);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bv[i];
        }
        if (t.requires_grad(bi)) {
          const NdArray& av = t.value(ai);
          NdArray& acc = t.grad_accumulator(bi);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * av[i];
        }
      },
      "mul");
}

Var scale(Var x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Var add_bias(Var x, Var bias) {
  const NdArray& xv = x.value();
  const NdArray& bv = bias.value();
  if (xv.rank() == 0 || bv.rank() != 1 || bv.dim(0) != xv.shape().back()) {
    throw ShapeError("add_bias",
                     shape_str(xv.shape()) + " + " + shape_str(bv.shape()));
  }
  const std::size_t c = bv.size();
  NdArray out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % c];
  const std::size_t xi = x.id, bi = bias.id;
  return x.tape->record(
      std::move(out), {x, bias},
      [xi, bi, c](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        accumulate(t, xi, g.data());
        if (!t.requires_grad(bi)) return;
        NdArray& acc = t.grad_accumulator(bi);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i];
      },
      "add_bias");
}

Var broadcast_to(Var x, const Shape& shape) {
  const Shape& in = x.shape();
  if (in.size() != shape.size()) {
    throw ShapeError("broadcast_to", shape_str(in) + " -> " + shape_str(shape));
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != shape[i] && in[i] != 1) {
      throw ShapeError("broadcast_to",
                       shape_str(in) + " -> " + shape_str(shape));
    }
  }
  // Source offset for every output element.
  const auto in_strides = strides_of(in);
  const std::size_t n = shape_numel(shape);
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape.size(); ++a)
      if (in[a] != 1) off += idx[a] * in_strides[a];
    (*src)[o] = off;
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
  NdArray out(shape);
  const NdArray& xv = x.value();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*src)[o]];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, src](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t o = 0; o < g.size(); ++o) acc[(*src)[o]] += g[o];
      },
      "broadcast_to");
}

Var matmul(Var x, Var w) {
  const NdArray& xv = x.value();
  const NdArray& wv = w.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) {
    throw ShapeError("matmul",
                     shape_str(xv.shape()) + " @ " + shape_str(wv.shape()));
  }
  const std::size_t k = wv.dim(0), n = wv.dim(1), m = xv.size() / k;
  Shape os = xv.shape();
  os.back() = n;
  NdArray out(os);
  gemm_acc(xv.ptr(), wv.ptr(), out.ptr(), m, k, n);
  const std::size_t xi = x.id, wi = w.id;
  return x.tape->record(
      std::move(out), {x, w},
      [xi, wi, m, k, n](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        if (t.requires_grad(xi)) {
          std::vector<double> wt(k * n);
          kernel::transpose2d(t.value(wi).ptr(), wt.data(), k, n);
          gemm_acc(g.ptr(), wt.data(), t.grad_accumulator(xi).ptr(), m, n, k);
        }
        if (t.requires_grad(wi)) {
          std::vector<double> xt(m * k);
          kernel::transpose2d(t.value(xi).ptr(), xt.data(), m, k);
          gemm_acc(xt.data(), g.ptr(), t.grad_accumulator(wi).ptr(), k, m, n);
        }
      },
      "matmul");
}

Var bmm(Var a, Var b, bool transpose_b) {
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  const std::size_t bk = transpose_b ? 2 : 1;
  const std::size_t bn = transpose_b ? 1 : 2;
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) ||
      av.dim(2) != bv.dim(bk)) {
    throw ShapeError("bmm", shape_str(av.shape()) + " @ " +
                                shape_str(bv.shape()) +
                                (transpose_b ? " (b transposed)" : ""));
  }
  const std::size_t G = av.dim(0), M = av.dim(1), K = av.dim(2),
                    N = bv.dim(bn);
  NdArray out({G, M, N});
  std::vector<double> bt(transpose_b ? K * N : 0);
  for (std::size_t g = 0; g < G; ++g) {
    const double* bp = bv.ptr() + g * K * N;
    if (transpose_b) {
      kernel::transpose2d(bp, bt.data(), N, K);
      bp = bt.data();
    }
    gemm_acc(av.ptr() + g * M * K, bp, out.ptr() + g * M * N, M, K, N);
  }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ai, bi, G, M, K, N, transpose_b](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        const NdArray& av = t.value(ai);
        const NdArray& bv = t.value(bi);
        std::vector<double> tmp(std::max({M * K, K * N, M * N}));
        for (std::size_t q = 0; q < G; ++q) {
          const double* gq = g.ptr() + q * M * N;
          const double* aq = av.ptr() + q * M * K;
          const double* bq = bv.ptr() + q * K * N;
          if (t.requires_grad(ai)) {
            // ga = g @ b^T (b stored [K,N]) or g @ b (b stored [N,K]).
            double* ga = t.grad_accumulator(ai).ptr() + q * M * K;
            if (transpose_b) {
              gemm_acc(gq, bq, ga, M, N, K);
            } else {
              kernel::transpose2d(bq, tmp.data(), K, N);
              gemm_acc(gq, tmp.data(), ga, M, N, K);
            }
          }
          if (t.requires_grad(bi)) {
            double* gb = t.grad_accumulator(bi).ptr() + q * K * N;
            if (transpose_b) {
              // gb[N,K] = g^T @ a
              kernel::transpose2d(gq, tmp.data(), M, N);
              gemm_acc(tmp.data(), aq, gb, N, M, K);
            } else {
              kernel::transpose2d(aq, tmp.data(), M, K);
              gemm_acc(tmp.data(), gq, gb, K, M, N);
            }
          }
        }
      },
      "bmm");
}

Var mix_axis(Var x, Var m, std::size_t axis) {
  const NdArray& xv = x.value();
  const NdArray& mv = m.value();
  if (axis >= xv.rank() || mv.rank() != 2 || mv.dim(1) != xv.dim(axis)) {
    throw ShapeError("mix_axis", shape_str(mv.shape()) + " along axis " +
                                     std::to_string(axis) + " of " +
                                     shape_str(xv.shape()));
  }
  const AxisView v = view_axis(xv.shape(), axis);
  const std::size_t I = mv.dim(0), J = v.extent, P = v.outer, Q = v.inner;
  Shape os = xv.shape();
  os[axis] = I;
  NdArray out(os);
  for (std::size_t p = 0; p < P; ++p)
    gemm_acc(mv.ptr(), xv.ptr() + p * J * Q, out.ptr() + p * I * Q, I, J, Q);
  const std::size_t xi = x.id, mi = m.id;
  return x.tape->record(
      std::move(out), {x, m},
      [xi, mi, I, J, P, Q](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        const NdArray& mv = t.value(mi);
        const NdArray& xv = t.value(xi);
        if (t.requires_grad(xi)) {
          std::vector<double> mt(I * J);
          kernel::transpose2d(mv.ptr(), mt.data(), I, J);
          double* gx = t.grad_accumulator(xi).ptr();
          for (std::size_t p = 0; p < P; ++p)
            gemm_acc(mt.data(), g.ptr() + p * I * Q, gx + p * J * Q, J, I, Q);
        }
        if (t.requires_grad(mi)) {
          double* gm = t.grad_accumulator(mi).ptr();
          for (std::size_t p = 0; p < P; ++p) {
            const double* gp = g.ptr() + p * I * Q;
            const double* xp = xv.ptr() + p * J * Q;
            for (std::size_t i = 0; i < I; ++i)
              for (std::size_t j = 0; j < J; ++j) {
                double s = 0.0;
                for (std::size_t q = 0; q < Q; ++q) s += gp[i * Q + q] * xp[j * Q + q];
                gm[i * J + j] += s;
              }
          }
        }
      },
      "mix_axis");
}

Var permute(Var x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) {
    throw ShapeError("permute", "perm rank " + std::to_string(perm.size()) +
                                    " vs " + shape_str(in));
  }
  std::vector<bool> seen(perm.size(), false);
  Shape os(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || seen[perm[i]]) {
      throw ShapeError("permute", "invalid permutation for " + shape_str(in));
    }
    seen[perm[i]] = true;
    os[i] = in[perm[i]];
  }
  const auto in_strides = strides_of(in);
  const std::size_t n = shape_numel(os);
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(os.size(), 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < os.size(); ++a) off += idx[a] * in_strides[perm[a]];
    (*src)[o] = off;
    for (std::size_t a = os.size(); a-- > 0;) {
      if (++idx[a] < os[a]) break;
      idx[a] = 0;
    }
  }
  NdArray out(os);
  const NdArray& xv = x.value();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*src)[o]];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, src](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t o = 0; o < g.size(); ++o) acc[(*src)[o]] += g[o];
      },
      "permute");
}

Var transpose(Var x) {
  if (x.value().rank() != 2) {
    throw ShapeError("transpose", "expected rank 2, got " + shape_str(x.shape()));
  }
  return permute(x, {1, 0});
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) {
    throw ShapeError("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  const std::size_t xi = x.id;
  return x.tape->record(
      x.value().reshaped(std::move(shape)), {x},
      [xi](Tape& t, std::size_t self) {
        accumulate(t, xi, t.out_grad(self).data());
      },
      "reshape");
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat", "no operands");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat", "axis out of range");
  Shape os = s0;
  os[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var& v : xs) {
    const Shape& s = v.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t a = 0; ok && a < s.size(); ++a)
      ok = a == axis || s[a] == s0[a];
    if (!ok) {
      throw ShapeError("concat", shape_str(s0) + " with " + shape_str(s) +
                                     " on axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    os[axis] += s[axis];
  }
  const AxisView v = view_axis(os, axis);
  NdArray out(os);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const NdArray& xv = xs[k].value();
    const std::size_t w = extents[k] * v.inner;
    for (std::size_t p = 0; p < v.outer; ++p)
      std::copy_n(xv.ptr() + p * w, w, out.ptr() + p * v.extent * v.inner + off);
    off += w;
  }
  std::vector<std::size_t> ids;
  for (const Var& x : xs) ids.push_back(x.id);
  return xs[0].tape->record(
      std::move(out), xs,
      [ids, extents, v](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t w = extents[k] * v.inner;
          if (t.requires_grad(ids[k])) {
            NdArray& acc = t.grad_accumulator(ids[k]);
            for (std::size_t p = 0; p < v.outer; ++p) {
              const double* src = g.ptr() + p * v.extent * v.inner + off;
              double* dst = acc.ptr() + p * w;
              for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
            }
          }
          off += w;
        }
      },
      "concat");
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice", shape_str(s) + " axis " + std::to_string(axis) +
                                  " [" + std::to_string(begin) + ", " +
                                  std::to_string(end) + ")");
  }
  const AxisView v = view_axis(s, axis);
  Shape os = s;
  os[axis] = end - begin;
  NdArray out(os);
  const std::size_t w = (end - begin) * v.inner;
  const NdArray& xv = x.value();
  for (std::size_t p = 0; p < v.outer; ++p)
    std::copy_n(xv.ptr() + (p * v.extent + begin) * v.inner, w, out.ptr() + p * w);
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, v, begin, w](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t p = 0; p < v.outer; ++p) {
          double* dst = acc.ptr() + (p * v.extent + begin) * v.inner;
          const double* src = g.ptr() + p * w;
          for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

Var reverse(Var x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("reverse", "axis out of range");
  const AxisView v = view_axis(s, axis);
  auto flip = [v](const double* src, double* dst) {
    for (std::size_t p = 0; p < v.outer; ++p)
      for (std::size_t e = 0; e < v.extent; ++e)
        std::copy_n(src + (p * v.extent + e) * v.inner, v.inner,
                    dst + (p * v.extent + (v.extent - 1 - e)) * v.inner);
  };
  NdArray out(s);
  flip(x.value().ptr(), out.ptr());
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, flip](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray tmp(g.shape());
        flip(g.ptr(), tmp.ptr());
        accumulate(t, xi, tmp.data());
      },
      "reverse");
}

Var sum(Var x) {
  const NdArray& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t xi = x.id;
  return x.tape->record(
      NdArray::scalar(s), {x},
      [xi](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const double g = t.out_grad(self)[0];
        for (double& a : t.grad_accumulator(xi).data()) a += g;
      },
      "sum");
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean", "empty operand");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var sigmoid(Var x) {
  return unary(
      x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var x) {
  return unary(
      x, "silu", [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var softplus(Var x) {
  return unary(
      x, "softplus",
      [](double v) {
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      },
      [](double v, double) { return stable_sigmoid(v); });
}

Var tanh(Var x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Var square(Var x) {
  return unary(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Var softmax(Var x) {
  const NdArray& xv = x.value();
  if (xv.rank() == 0) throw ShapeError("softmax", "rank 0 operand");
  const std::size_t c = xv.shape().back(), rows = xv.size() / c;
  NdArray out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * c;
    double* o = out.ptr() + r * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, c, rows](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        const NdArray& y = t.value(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.ptr() + r * c;
          const double* yr = y.ptr() + r * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
          for (std::size_t j = 0; j < c; ++j) acc[r * c + j] += yr[j] * (gr[j] - dot);
        }
      },
      "softmax");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const NdArray& xv = x.value();
  const std::size_t c = xv.rank() ? xv.shape().back() : 0;
  if (c == 0 || gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("layer_norm", shape_str(xv.shape()) + " with scale " +
                                       shape_str(gamma.shape()) + ", shift " +
                                       shape_str(beta.shape()));
  }
  const std::size_t rows = xv.size() / c;
  auto xhat = std::make_shared<NdArray>(xv.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  NdArray out(xv.shape());
  const NdArray& gv = gamma.value();
  const NdArray& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (in[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gv[j] * h + bv[j];
    }
  }
  const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [xi, gi, bi, c, rows, xhat, rstd](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        if (t.requires_grad(gi)) {
          NdArray& acc = t.grad_accumulator(gi);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i] * (*xhat)[i];
        }
        if (t.requires_grad(bi)) {
          NdArray& acc = t.grad_accumulator(bi);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i];
        }
        if (!t.requires_grad(xi)) return;
        const NdArray& gv = t.value(gi);
        NdArray& acc = t.grad_accumulator(xi);
        std::vector<double> gh(c);
        for (std::size_t r = 0; r < rows; ++r) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gh[j] = g[r * c + j] * gv[j];
            m1 += gh[j];
            m2 += gh[j] * (*xhat)[r * c + j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j)
            acc[r * c + j] += (*rstd)[r] * (gh[j] - m1 - (*xhat)[r * c + j] * m2);
        }
      },
      "layer_norm");
}

Var depthwise_conv1d(Var x, Var w, Var bias) {
  const NdArray& xv = x.value();
  const NdArray& wv = w.value();
  if (xv.rank() < 2 || wv.rank() != 2 || wv.dim(0) != xv.shape().back() ||
      bias.shape() != Shape{wv.dim(0)} || wv.dim(1) == 0) {
    throw ShapeError("depthwise_conv1d", shape_str(xv.shape()) + " kernel " +
                                             shape_str(wv.shape()) + " bias " +
                                             shape_str(bias.shape()));
  }
  const std::size_t C = wv.dim(0), K = wv.dim(1);
  const std::size_t L = xv.dim(xv.rank() - 2), R = xv.size() / (L * C);
  NdArray out(xv.shape());
  const NdArray& bv = bias.value();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t t = 0; t < L; ++t) {
      double* o = out.ptr() + (r * L + t) * C;
      for (std::size_t ch = 0; ch < C; ++ch) o[ch] = bv[ch];
      for (std::size_t k = 0; k < K; ++k) {
        if (t + k + 1 < K) continue;  // source index t-(K-1)+k < 0
        const double* in = xv.ptr() + (r * L + t + k + 1 - K) * C;
        for (std::size_t ch = 0; ch < C; ++ch) o[ch] += wv[ch * K + k] * in[ch];
      }
    }
  const std::size_t xi = x.id, wi = w.id, bi = bias.id;
  return x.tape->record(
      std::move(out), {x, w, bias},
      [xi, wi, bi, C, K, L, R](Tape& t, std::size_t self) {
        const NdArray& g = t.out_grad(self);
        const NdArray& xv = t.value(xi);
        const NdArray& wv = t.value(wi);
        const bool gx = t.requires_grad(xi), gw = t.requires_grad(wi);
        double* ax = gx ? t.grad_accumulator(xi).ptr() : nullptr;
        double* aw = gw ? t.grad_accumulator(wi).ptr() : nullptr;
        if (t.requires_grad(bi)) {
          NdArray& ab = t.grad_accumulator(bi);
          for (std::size_t i = 0; i < g.size(); ++i) ab[i % C] += g[i];
        }
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t s = 0; s < L; ++s) {
            const double* go = g.ptr() + (r * L + s) * C;
            for (std::size_t k = 0; k < K; ++k) {
              if (s + k + 1 < K) continue;
              const std::size_t src = (r * L + s + k + 1 - K) * C;
              for (std::size_t ch = 0; ch < C; ++ch) {
                if (gx) ax[src + ch] += wv[ch * K + k] * go[ch];
                if (gw) aw[ch * K + k] += go[ch] * xv[src + ch];
              }
            }
          }
      },
      "depthwise_conv1d");
}

Var dropout(Var x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: probability must lie in [0, 1)");
  }
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<NdArray>(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask->data()) m = keep(rng) ? s : 0.0;
  NdArray out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, mask](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * (*mask)[i];
      },
      "dropout");
}

Var embedding_lookup(Var table, std::span<const std::size_t> indices) {
  const NdArray& tv = table.value();
  if (tv.rank() != 2) {
    throw ShapeError("embedding_lookup", "table must be rank 2, got " +
                                             shape_str(tv.shape()));
  }
  const std::size_t V = tv.dim(0), D = tv.dim(1);
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  NdArray out({idx->size(), D});
  for (std::size_t i = 0; i < idx->size(); ++i) {
    if ((*idx)[i] >= V) {
      throw ShapeError("embedding_lookup", "index " + std::to_string((*idx)[i]) +
                                               " out of " + std::to_string(V));
    }
    std::copy_n(tv.ptr() + (*idx)[i] * D, D, out.ptr() + i * D);
  }
  const std::size_t ti = table.id;
  return table.tape->record(
      std::move(out), {table},
      [ti, idx, D](Tape& t, std::size_t self) {
        if (!t.requires_grad(ti)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(ti);
        for (std::size_t i = 0; i < idx->size(); ++i)
          for (std::size_t d = 0; d < D; ++d) acc[(*idx)[i] * D + d] += g[i * D + d];
      },
      "embedding_lookup");
}

Var masked_select(Var x, const NdArray& mask) {
  if (mask.shape() != x.shape()) {
    throw ShapeError("masked_select",
                     shape_str(x.shape()) + " mask " + shape_str(mask.shape()));
  }
  auto pos = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0) pos->push_back(i);
  NdArray out({pos->size()});
  const NdArray& xv = x.value();
  for (std::size_t i = 0; i < pos->size(); ++i) out[i] = xv[(*pos)[i]];
  const std::size_t xi = x.id;
  return x.tape->record(
      std::move(out), {x},
      [xi, pos](Tape& t, std::size_t self) {
        if (!t.requires_grad(xi)) return;
        const NdArray& g = t.out_grad(self);
        NdArray& acc = t.grad_accumulator(xi);
        for (std::size_t i = 0; i < pos->size(); ++i) acc[(*pos)[i]] += g[i];
      },
      "masked_select");
}

}  // namespace ssmdiff::ops
