// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "ssmdiff/model/noise_model.hpp"

namespace ssmdiff::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, little-endian:
///   "SSDICKPT" | u32 version | u64 config hash | u64 len | config JSON
///   | u64 tensor count | per tensor: u64 name len, name, u64 rank,
///     rank x u64 dims, raw f64 values
/// Values are written bit-for-bit, so save followed by load is exact.
void save_checkpoint(const NoiseModel& model, const std::filesystem::path& path);

/// Rebuilds the model from the embedded configuration.
NoiseModel load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into an existing model. Throws CheckpointError when the
/// configuration hash or any tensor name or shape differs.
void load_parameters(NoiseModel& model, const std::filesystem::path& path);

}  // namespace ssmdiff::model
