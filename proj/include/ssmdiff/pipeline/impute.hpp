// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssmdiff/masking/masks.hpp"
#include "ssmdiff/model/noise_model.hpp"
#include "ssmdiff/pipeline/data.hpp"
#include "ssmdiff/util/strict_json.hpp"

namespace ssmdiff::pipeline {

struct ErrorMetrics {
  double mae = 0.0;
  double mse = 0.0;
  std::size_t count = 0;
};

/// Means of |estimate - truth| and its square over target entries only.
/// Throws std::invalid_argument for an empty target mask.
ErrorMetrics compute_metrics(const NdArray& estimate, const NdArray& truth,
                             const masking::Mask& target);

/// Middle value, or the mean of the two middle values for even counts.
double median(std::vector<double> values);

struct ImputeOptions {
  std::size_t samples = 25;  // K reverse chains per window
  std::uint64_t seed = 0;
};

struct ImputationResult {
  NdArray imputed;   // [N, T], per-entry median; given entries copied through
  NdArray samples;   // [K, N, T]
  std::uint64_t seed = 0;
  double seconds = 0.0;
  std::optional<ErrorMetrics> metrics;
};

/// Imputes every entry outside `given` in raw units. Windows of length L
/// cover the series (the last one aligned to the end). For each window the
/// conditioning prior is computed once and K chains run the full reverse
/// process from x_T ~ N(0, I); chain k of window w draws from stream
/// derive_seed(seed, w * K + k).
ImputationResult impute(const model::NoiseModel& model, const NdArray& a_hat,
                        const Scaler& scaler, const NdArray& values,
                        const masking::Mask& given, const ImputeOptions& options);

/// Per-node mean of `values` over `observed` entries.
std::vector<double> node_means(const NdArray& values, const masking::Mask& observed);

/// Fills entries outside `given` with the node's mean.
NdArray mean_baseline(const std::vector<double>& means, const NdArray& values,
                      const masking::Mask& given);

/// Fills entries outside `given` by linear interpolation along time.
NdArray linear_baseline(const NdArray& values, const masking::Mask& given);

/// One structured result line: {"scenario", "method", "seed", "mae", "mse",
/// "targets", "seconds"} plus any extra fields.
Json metrics_record(const std::string& scenario, const std::string& method, std::uint64_t seed,
                    const ErrorMetrics& metrics, double seconds, const Json& extra = Json::object());

/// Appends one compact JSON object per line.
void append_jsonl(const std::filesystem::path& path, const Json& record);

}  // namespace ssmdiff::pipeline
