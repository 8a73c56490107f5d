// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ssmdiff::check {

struct ScanCheckOptions {
  std::size_t instances = 100;
  std::vector<std::size_t> lengths = {8, 64, 256, 1024};
  std::size_t state = 16;
  std::size_t channels = 4;
  std::size_t rows = 2;
  std::size_t chunk = 64;
  std::uint64_t seed = 1;
};

struct ScanCheckResult {
  double max_abs_dev = 0.0;
  std::size_t instances = 0;
  double seconds = 0.0;
};

/// Random discretised instances (a_bar from bilinear steps of a < 0, delta > 0)
/// run through scan_parallel and scan_sequential; reports the largest output
/// or state deviation. Lengths are cycled across instances.
ScanCheckResult run_scan_check(const ScanCheckOptions& options = {});

}  // namespace ssmdiff::check
