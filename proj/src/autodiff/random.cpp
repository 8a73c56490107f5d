// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/autodiff/random.hpp"

namespace ssmdiff {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

NdArray randn(const Shape& shape, Rng& rng, double stddev) {
  NdArray out(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

NdArray rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  NdArray out(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : out.data()) v = dist(rng);
  return out;
}

}  // namespace ssmdiff
