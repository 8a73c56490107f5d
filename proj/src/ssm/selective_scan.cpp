// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/ssm/selective_scan.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <thread>

namespace ssmdiff::ssm {

namespace {

// Chains (r, d, j) per task before fork-join is worth a thread.
constexpr std::size_t kMinParallelWork = 1 << 16;

void fork_join(std::size_t tasks, std::size_t work,
               const std::function<void(std::size_t)>& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(hw, tasks);
  if (workers <= 1 || work < kMinParallelWork) {
    for (std::size_t i = 0; i < tasks; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < tasks; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void check_sizes(const DiscretizedSequence& s) {
  const std::size_t rl = s.rows * s.length;
  const std::size_t dn = s.channels * s.state;
  if (s.a_bar.size() != rl * dn || s.bx.size() != rl * dn ||
      s.c.size() != rl * s.state || s.x.size() != rl * s.channels ||
      s.d_skip.size() != s.channels) {
    throw ShapeError("scan", "inconsistent discretised sequence sizes");
  }
}

void readout(const DiscretizedSequence& s, ScanOutput& out) {
  const std::size_t D = s.channels, n = s.state;
  for (std::size_t rt = 0; rt < s.rows * s.length; ++rt) {
    const double* c = s.c.data() + rt * n;
    const double* x = s.x.data() + rt * D;
    const double* h = out.h.data() + rt * D * n;
    double* y = out.y.data() + rt * D;
    for (std::size_t d = 0; d < D; ++d) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += c[j] * h[d * n + j];
      y[d] = acc + s.d_skip[d] * x[d];
    }
  }
}

inline double bilinear_den(double a, double delta) { return 1.0 - 0.5 * delta * a; }

}  // namespace

Discretized discretize_bilinear(double a, double b, double delta) {
  const double den = bilinear_den(a, delta);
  if (!(delta >= 0.0) || !(den > 0.0)) {
    throw InvariantError("discretize_bilinear: singular or invalid step (a=" +
                         std::to_string(a) + ", delta=" +
                         std::to_string(delta) + ")");
  }
  return {(1.0 + 0.5 * delta * a) / den, delta * b / den};
}

ScanOutput scan_sequential(const DiscretizedSequence& s) {
  check_sizes(s);
  const std::size_t L = s.length, dn = s.channels * s.state;
  ScanOutput out{std::vector<double>(s.rows * L * s.channels),
                 std::vector<double>(s.rows * L * dn)};
  std::vector<double> h(dn);
  for (std::size_t r = 0; r < s.rows; ++r) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t base = (r * L + t) * dn;
      for (std::size_t k = 0; k < dn; ++k) {
        h[k] = s.a_bar[base + k] * h[k] + s.bx[base + k];
        out.h[base + k] = h[k];
      }
    }
  }
  readout(s, out);
  return out;
}

ScanOutput scan_parallel(const DiscretizedSequence& s, std::size_t chunk) {
  check_sizes(s);
  if (chunk == 0) throw std::invalid_argument("scan_parallel: chunk must be > 0");
  const std::size_t L = s.length, dn = s.channels * s.state;
  const std::size_t chunks = (L + chunk - 1) / chunk;
  ScanOutput out{std::vector<double>(s.rows * L * s.channels),
                 std::vector<double>(s.rows * L * dn)};
  if (L == 0) return out;
  // Chunk aggregates (A, B) per chain: A = prod a, B = composed offset.
  std::vector<double> agg_a(s.rows * chunks * dn), agg_b(s.rows * chunks * dn);
  const std::size_t work = s.rows * dn * chunk;

  fork_join(chunks, work, [&](std::size_t c) {
    const std::size_t t0 = c * chunk, t1 = std::min(L, t0 + chunk);
    for (std::size_t r = 0; r < s.rows; ++r) {
      double* A = agg_a.data() + (r * chunks + c) * dn;
      double* B = agg_b.data() + (r * chunks + c) * dn;
      std::fill(A, A + dn, 1.0);
      std::fill(B, B + dn, 0.0);
      for (std::size_t t = t0; t < t1; ++t) {
        const std::size_t base = (r * L + t) * dn;
        for (std::size_t k = 0; k < dn; ++k) {
          const double a = s.a_bar[base + k];
          A[k] = a * A[k];
          B[k] = a * B[k] + s.bx[base + k];
        }
      }
    }
  });

  // Exclusive combine of chunk aggregates gives each chunk's carry-in.
  std::vector<double> carry(s.rows * chunks * dn, 0.0);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 1; c < chunks; ++c) {
      const double* prev = carry.data() + (r * chunks + c - 1) * dn;
      const double* A = agg_a.data() + (r * chunks + c - 1) * dn;
      const double* B = agg_b.data() + (r * chunks + c - 1) * dn;
      double* cur = carry.data() + (r * chunks + c) * dn;
      for (std::size_t k = 0; k < dn; ++k) cur[k] = A[k] * prev[k] + B[k];
    }

  fork_join(chunks, work, [&](std::size_t c) {
    const std::size_t t0 = c * chunk, t1 = std::min(L, t0 + chunk);
    std::vector<double> h(dn);
    for (std::size_t r = 0; r < s.rows; ++r) {
      const double* in = carry.data() + (r * chunks + c) * dn;
      std::copy(in, in + dn, h.begin());
      for (std::size_t t = t0; t < t1; ++t) {
        const std::size_t base = (r * L + t) * dn;
        for (std::size_t k = 0; k < dn; ++k) {
          h[k] = s.a_bar[base + k] * h[k] + s.bx[base + k];
          out.h[base + k] = h[k];
        }
      }
    }
  });

  readout(s, out);
  return out;
}

Var selective_scan(Var u, Var delta, Var a_log, Var b, Var c, Var d_skip,
                   const ScanOptions& options) {
  const NdArray& uv = u.value();
  const NdArray& av = a_log.value();
  if (uv.rank() < 2 || av.rank() != 2 || delta.shape() != uv.shape() ||
      av.dim(0) != uv.shape().back() || d_skip.shape() != Shape{av.dim(0)}) {
    throw ShapeError("selective_scan",
                     "u " + shape_str(uv.shape()) + ", delta " +
                         shape_str(delta.shape()) + ", a_log " +
                         shape_str(av.shape()) + ", d " +
                         shape_str(d_skip.shape()));
  }
  const std::size_t D = av.dim(0), n = av.dim(1);
  const std::size_t L = uv.dim(uv.rank() - 2), R = uv.size() / (L * D);
  Shape bc_shape = uv.shape();
  bc_shape.back() = n;
  if (b.shape() != bc_shape || c.shape() != bc_shape) {
    throw ShapeError("selective_scan", "b " + shape_str(b.shape()) + ", c " +
                                           shape_str(c.shape()) + ", expected " +
                                           shape_str(bc_shape));
  }

  const NdArray& dv = delta.value();
  const NdArray& bv = b.value();
  auto A = std::make_shared<std::vector<double>>(D * n);
  for (std::size_t k = 0; k < D * n; ++k) (*A)[k] = -std::exp(av[k]);

  for (std::size_t i = 0; i < dv.size(); ++i) {
    if (!(dv[i] >= 0.0)) throw InvariantError("selective_scan: step size must be positive");
  }
  const bool need_grad = u.requires_grad() || delta.requires_grad() || a_log.requires_grad() ||
                         b.requires_grad() || c.requires_grad() || d_skip.requires_grad();

  ScanOutput res;
  if (options.parallel) {
    std::vector<double> a_bar(R * L * D * n), bx(R * L * D * n);
    for (std::size_t rt = 0; rt < R * L; ++rt)
      for (std::size_t d = 0; d < D; ++d) {
        const double dt = dv[rt * D + d];
        const double x = uv[rt * D + d];
        for (std::size_t j = 0; j < n; ++j) {
          const double a = (*A)[d * n + j];
          const double den = bilinear_den(a, dt);
          const std::size_t k = (rt * D + d) * n + j;
          a_bar[k] = (1.0 + 0.5 * dt * a) / den;
          bx[k] = dt * bv[rt * n + j] / den * x;
        }
      }
    DiscretizedSequence seq{R, L, D, n, a_bar, bx, c.value().data(), uv.data(),
                            d_skip.value().data()};
    res = scan_parallel(seq, options.chunk);
  } else {
    // Fused discretise-scan-readout; same arithmetic as scan_sequential.
    const NdArray& cv = c.value();
    const NdArray& sv = d_skip.value();
    res.y.resize(R * L * D);
    if (need_grad) res.h.resize(R * L * D * n);
    std::vector<double> h(D * n);
    for (std::size_t r = 0; r < R; ++r) {
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t rt = r * L + t;
        const double* Bt = bv.ptr() + rt * n;
        const double* Ct = cv.ptr() + rt * n;
        for (std::size_t d = 0; d < D; ++d) {
          const double dt = dv[rt * D + d];
          const double x = uv[rt * D + d];
          const double* Ad = A->data() + d * n;
          double* hd = h.data() + d * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double den = bilinear_den(Ad[j], dt);
            hd[j] = (1.0 + 0.5 * dt * Ad[j]) / den * hd[j] + dt * Bt[j] / den * x;
            acc += Ct[j] * hd[j];
          }
          res.y[rt * D + d] = acc + sv[d] * x;
        }
        if (need_grad) std::copy(h.begin(), h.end(), res.h.begin() + rt * D * n);
      }
    }
  }
  auto states = std::make_shared<std::vector<double>>(std::move(res.h));

  const std::size_t ui = u.id, di = delta.id, ai = a_log.id, bi = b.id,
                    ci = c.id, si = d_skip.id;
  return u.tape->record(
      NdArray(uv.shape(), std::move(res.y)), {u, delta, a_log, b, c, d_skip},
      [=](Tape& t, std::size_t self) {
        const NdArray& gy = t.out_grad(self);
        const NdArray& uv = t.value(ui);
        const NdArray& dv = t.value(di);
        const NdArray& bv = t.value(bi);
        const NdArray& cv = t.value(ci);
        const NdArray& sv = t.value(si);
        const std::vector<double>& h = *states;

        std::vector<double> gu(R * L * D, 0.0), gdelta(R * L * D, 0.0),
            gb(R * L * n, 0.0), gc(R * L * n, 0.0), gskip(D, 0.0),
            ga(D * n, 0.0), gh(D * n);
        for (std::size_t r = 0; r < R; ++r) {
          std::fill(gh.begin(), gh.end(), 0.0);
          for (std::size_t t_ = L; t_-- > 0;) {
            const std::size_t rt = r * L + t_;
            const double* gyt = gy.ptr() + rt * D;
            const double* ut = uv.ptr() + rt * D;
            const double* Bt = bv.ptr() + rt * n;
            const double* Ct = cv.ptr() + rt * n;
            const double* ht = h.data() + rt * D * n;
            const double* hp = t_ ? h.data() + (rt - 1) * D * n : nullptr;
            for (std::size_t d = 0; d < D; ++d) {
              const double gyd = gyt[d], ud = ut[d], dt = dv[rt * D + d];
              double gud = sv[d] * gyd;
              double gdt = 0.0;
              gskip[d] += gyd * ud;
              for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = d * n + j;
                gc[rt * n + j] += gyd * ht[k];
                const double g = gh[k] + Ct[j] * gyd;
                const double a = (*A)[k];
                const double inv = 1.0 / bilinear_den(a, dt);
                const double inv2 = inv * inv;
                const double abar = (1.0 + 0.5 * dt * a) * inv;
                const double bbar = dt * Bt[j] * inv;
                const double hprev = hp ? hp[k] : 0.0;
                const double gq = 2.0 * g * hprev * inv2;  // via a_bar
                const double gbbar = g * ud;
                gud += g * bbar;
                gdt += 0.5 * gq * a + gbbar * Bt[j] * inv2;
                ga[k] += 0.5 * gq * dt + 0.5 * gbbar * dt * dt * Bt[j] * inv2;
                gb[rt * n + j] += gbbar * dt * inv;
                gh[k] = abar * g;
              }
              gu[rt * D + d] += gud;
              gdelta[rt * D + d] += gdt;
            }
          }
        }
        auto add_into = [&t](std::size_t id, const std::vector<double>& g) {
          if (!t.requires_grad(id)) return;
          NdArray& acc = t.grad_accumulator(id);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
        };
        for (std::size_t k = 0; k < D * n; ++k) ga[k] *= (*A)[k];  // dA/da_log = A
        add_into(ui, gu);
        add_into(di, gdelta);
        add_into(ai, ga);
        add_into(bi, gb);
        add_into(ci, gc);
        add_into(si, gskip);
      },
      "selective_scan");
}

}  // namespace ssmdiff::ssm
