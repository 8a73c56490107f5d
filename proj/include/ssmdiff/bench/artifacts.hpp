// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssmdiff/pipeline/data.hpp"
#include "ssmdiff/pipeline/train.hpp"
#include "ssmdiff/util/strict_json.hpp"

namespace ssmdiff::bench {

/// What a harness run did: the full config snapshot, root seed, build
/// identity, wall times per phase and the files it wrote.
struct Manifest {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::map<std::string, double> wall_seconds;
  std::vector<std::string> outputs;
  Json summary = Json::object();

  Json to_json() const;
};

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

Json scaler_to_json(const pipeline::Scaler& s);
pipeline::Scaler scaler_from_json(const Json& j);

/// epoch,learning_rate,train_loss,val_loss,seconds
void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<pipeline::EpochStats>& curve);

}  // namespace ssmdiff::bench
