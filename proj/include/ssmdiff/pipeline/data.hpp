// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssmdiff/autodiff/ndarray.hpp"
#include "ssmdiff/masking/masks.hpp"

namespace ssmdiff::pipeline {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Node x time series. Missing entries hold 0 and are cleared in `observed`.
struct Dataset {
  std::vector<std::string> node_ids;
  NdArray values;             // [N, T]
  masking::Mask observed;     // [N, T]

  std::size_t nodes() const { return values.dim(0); }
  std::size_t steps() const { return values.dim(1); }
  /// Time columns [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Header row of node ids, then one row per time step. Empty cells (and
/// "nan") are missing. Values are written with 17 significant digits so a
/// write/read round trip is exact.
Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);

/// N rows of N comma-separated weights, no header.
NdArray read_adjacency_csv(const std::filesystem::path& path);
void write_adjacency_csv(const std::filesystem::path& path, const NdArray& adjacency);

/// Contiguous chronological split of T steps.
struct Splits {
  std::size_t train_end = 0, val_end = 0, total = 0;
};
Splits split_horizon(std::size_t steps, double train_fraction, double val_fraction);

/// Per-node z-score fitted on observed entries.
class Scaler {
 public:
  Scaler() = default;
  Scaler(std::vector<double> mean, std::vector<double> stddev);
  static Scaler fit(const NdArray& values, const masking::Mask& observed);

  /// Works on [..., N, L] arrays.
  NdArray transform(const NdArray& x) const;
  NdArray inverse(const NdArray& x) const;

  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }

 private:
  std::vector<double> mean_, std_;
};

struct Interpolated {
  NdArray series;                        // same shape as the input
  std::vector<std::size_t> empty_rows;   // rows with no observation, zero filled
};

/// Per row of [..., N, L]: linear interpolation in time between observed
/// neighbours and constant extrapolation past the first and last ones.
/// Observed entries are returned unchanged.
Interpolated linear_interpolate(const NdArray& values, const NdArray& mask);
Interpolated linear_interpolate(const NdArray& values, const masking::Mask& mask);

/// Window starts covering [0, steps): 0, L, 2L, ... plus a final window
/// aligned to the end when L does not divide steps.
std::vector<std::size_t> window_starts(std::size_t steps, std::size_t length);

/// Copies [N, L] windows of `src` [N, T] into a [B, N, L] array.
NdArray gather_windows(const NdArray& src, const std::vector<std::size_t>& starts,
                       std::size_t length);

}  // namespace ssmdiff::pipeline
