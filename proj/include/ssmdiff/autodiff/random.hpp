// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "ssmdiff/autodiff/ndarray.hpp"

namespace ssmdiff {

using Rng = std::mt19937_64;

/// Seed for an independent stream `stream` under `root` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

NdArray randn(const Shape& shape, Rng& rng, double stddev = 1.0);
NdArray rand_uniform(const Shape& shape, Rng& rng, double lo, double hi);

}  // namespace ssmdiff
