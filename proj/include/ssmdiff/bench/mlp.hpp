// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "ssmdiff/autodiff/ndarray.hpp"

namespace ssmdiff::bench {

struct MlpOptions {
  std::size_t hidden = 100;
  std::size_t epochs = 500;
  std::size_t batch_size = 200;  // capped at the sample count
  double learning_rate = 1e-3;
  double l2 = 1e-4;              // penalty 0.5 * l2 * |W|^2 / samples per batch
};

/// One-hidden-layer ReLU regressor with a scalar output, trained with Adam
/// on the squared error. Small enough to run without the tape.
class Mlp {
 public:
  Mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed);

  /// x [S, inputs], y [S]. Shuffles every epoch from `seed`.
  void fit(const NdArray& x, const NdArray& y, const MlpOptions& options, std::uint64_t seed);
  NdArray predict(const NdArray& x) const;

  /// 0.5 * mean squared error over the rows, plus the L2 term; fills
  /// gradients in the layout of params().
  double loss_and_gradient(const NdArray& x, const NdArray& y, double l2, NdArray& grad) const;

  /// Flat parameter vector: w1 [inputs, hidden], b1 [hidden], w2 [hidden], b2.
  NdArray& params() noexcept { return params_; }
  const NdArray& params() const noexcept { return params_; }

 private:
  std::size_t in_, hidden_;
  NdArray params_;
};

}  // namespace ssmdiff::bench
