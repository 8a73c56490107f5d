// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmdiff/autodiff/tape.hpp"

namespace ssmdiff::ssm {

/// One diagonal entry of the bilinear (Tustin) discretisation:
///   a_bar = (1 + delta*a/2) / (1 - delta*a/2)
///   b_bar = delta*b / (1 - delta*a/2)
struct Discretized {
  double a_bar;
  double b_bar;
};

/// Requires delta >= 0 and a <= 0 so that 1 - delta*a/2 >= 1.
Discretized discretize_bilinear(double a, double b, double delta);

/// Discretised per-step quantities for R independent sequences of length L,
/// D channels and state size n. h_t = a_bar_t * h_{t-1} + bx_t elementwise
/// over [D, n]; y_t[d] = sum_j c_t[j] h_t[d, j] + d_skip[d] * x_t[d].
struct DiscretizedSequence {
  std::size_t rows = 0, length = 0, channels = 0, state = 0;
  std::span<const double> a_bar;   // [R, L, D, n]
  std::span<const double> bx;      // [R, L, D, n]
  std::span<const double> c;       // [R, L, n]
  std::span<const double> x;       // [R, L, D]
  std::span<const double> d_skip;  // [D]
};

struct ScanOutput {
  std::vector<double> y;  // [R, L, D]
  std::vector<double> h;  // [R, L, D, n]
};

/// Exact left-to-right recurrence from h_0 = 0.
ScanOutput scan_sequential(const DiscretizedSequence& seq);

/// Three-phase chunked associative scan with the operator
/// (a1, b1) o (a2, b2) = (a2*a1, a2*b1 + b2). Chunks are reduced, their
/// carries combined in order, then each chunk is rescanned from its carry.
/// Deterministic for a fixed chunk size; a single chunk reproduces
/// scan_sequential bit for bit.
ScanOutput scan_parallel(const DiscretizedSequence& seq, std::size_t chunk = 64);

struct ScanOptions {
  bool parallel = true;
  std::size_t chunk = 64;
};

/// Differentiable selective scan.
///   u, delta: [..., L, D]   a_log: [D, n] (A = -exp(a_log))
///   b, c:     [..., L, n]   d_skip: [D]
/// Returns y: [..., L, D]. Backward always runs the sequential adjoint.
Var selective_scan(Var u, Var delta, Var a_log, Var b, Var c, Var d_skip,
                   const ScanOptions& options = {});

}  // namespace ssmdiff::ssm
