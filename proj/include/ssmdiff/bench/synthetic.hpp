// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssmdiff/graph/spatial.hpp"
#include "ssmdiff/util/strict_json.hpp"

namespace ssmdiff::bench {

/// Sensor network of coupled sinusoids. Node i sits at a uniform random point
/// p_i of the unit square and carries
///   x_i(t) = sum_f a_f sin(2 pi f t + phi_f + coupling * theta_i) + offset_i + noise
/// with theta_i = 2 pi (p_i.x + p_i.y) / 2, so nearby nodes share phases.
struct SyntheticSpec {
  std::size_t nodes = 8;
  std::size_t length = 24;   // model window, only checked against `steps`
  std::size_t steps = 2880;
  std::vector<double> frequencies{1.0 / 24.0, 1.0 / 12.0, 1.0 / 6.0};  // cycles per step
  std::vector<double> amplitudes{1.0, 0.5, 0.3};
  double coupling = 1.0;
  double offset_scale = 1.0;  // offsets ~ N(0, offset_scale^2)
  double noise = 0.1;         // observation noise sigma
  double length_scale = 0.5;  // Gaussian kernel of the adjacency
  double threshold = 0.1;
  std::vector<graph::Point> coords;  // fixed layout; empty draws one per seed
  std::uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static SyntheticSpec from_json(const Json& j);
};

struct SyntheticData {
  NdArray values;  // [N, steps], complete
  graph::GraphSpec graph;
  std::vector<double> phases;   // theta_i
  std::vector<double> offsets;  // offset_i
};

/// Deterministic in `spec`, seed included.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace ssmdiff::bench
