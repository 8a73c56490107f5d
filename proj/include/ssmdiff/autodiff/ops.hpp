// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmdiff/autodiff/random.hpp"
#include "ssmdiff/autodiff/tape.hpp"

/// Differentiable primitives. Every op records its forward value on the
/// operand's tape together with a backward rule; gradients accumulate
/// additively into shared inputs.
namespace ssmdiff::ops {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

/// x[..., C] + bias[C].
Var add_bias(Var x, Var bias);
/// Numpy-style expansion of size-1 axes; ranks must match.
Var broadcast_to(Var x, const Shape& shape);

/// x[..., K] @ w[K, N] -> [..., N].
Var matmul(Var x, Var w);
/// Batched a[G, M, K] @ b[G, K, N]; with transpose_b, b is [G, N, K].
Var bmm(Var a, Var b, bool transpose_b = false);
/// Contracts `axis` of x (extent J) with m[I, J]; that axis becomes I.
Var mix_axis(Var x, Var m, std::size_t axis);

Var transpose(Var x);
Var permute(Var x, const std::vector<std::size_t>& perm);
Var reshape(Var x, Shape shape);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reverse(Var x, std::size_t axis);

Var sum(Var x);
Var mean(Var x);

Var sigmoid(Var x);
Var silu(Var x);
Var softplus(Var x);
Var tanh(Var x);
Var exp(Var x);
Var square(Var x);
/// Softmax over the last axis.
Var softmax(Var x);

/// Normalises the last axis, then applies gamma[C] and beta[C].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Causal depthwise convolution along axis -2 of x[..., L, C] with kernel
/// w[C, K] and bias[C]. Output step t sees inputs t-K+1..t, zero before 0.
Var depthwise_conv1d(Var x, Var w, Var bias);

/// Inverted dropout. Returns `x` unchanged when not training or p == 0.
Var dropout(Var x, double p, bool training, Rng& rng);

/// Rows of table[V, D] at `indices` -> [len, D].
Var embedding_lookup(Var table, std::span<const std::size_t> indices);

/// Entries of x where mask != 0, flattened in row-major order.
Var masked_select(Var x, const NdArray& mask);

// Raw kernels shared with modules that implement fused primitives.
namespace kernel {
/// c[m, n] += a[m, k] @ b[k, n], row-major, fixed i-k-j order.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n);
void transpose2d(const double* src, double* dst, std::size_t rows,
                 std::size_t cols);
}  // namespace kernel

}  // namespace ssmdiff::ops
