// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ssmdiff/bench/mlp.hpp"
#include "ssmdiff/bench/synthetic.hpp"
#include "ssmdiff/masking/masks.hpp"
#include "ssmdiff/model/noise_model.hpp"
#include "ssmdiff/pipeline/data.hpp"
#include "ssmdiff/pipeline/impute.hpp"
#include "ssmdiff/pipeline/train.hpp"

namespace ssmdiff::bench {

struct EvalConfig {
  std::string scenario = "point";  // point | block | simulated_failure
  double missing_rate = 0.25;      // point scenario
  double steps_per_hour = 1.0;     // block scenario
  double train_fraction = 0.7;
  double val_fraction = 0.1;
  std::size_t samples = 25;  // K
  std::size_t windows = 0;   // test windows imputed, 0 = all
};

struct AblationConfig {
  std::size_t seeds = 3;
  std::size_t epochs = 6;
  std::size_t windows_per_epoch = 500;
  std::size_t samples = 10;
  std::size_t windows = 8;
};

struct SensitivityConfig {
  std::vector<double> rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t samples = 10;
  std::size_t windows = 8;
};

struct DownstreamConfig {
  std::size_t seeds = 5;
  double train_fraction = 0.8;
  MlpOptions mlp;
};

/// Everything one harness run needs. Serialises to a strict JSON document
/// with sections data, model, train, eval, ablation, sensitivity, downstream
/// and the root seed.
struct ExperimentConfig {
  SyntheticSpec data;
  model::ModelConfig model;
  pipeline::TrainConfig train;
  EvalConfig eval;
  AblationConfig ablation;
  SensitivityConfig sensitivity;
  DownstreamConfig downstream;
  std::uint64_t seed = 1;

  /// Desk-scale defaults: N = 8, L = 24, T = 50, 20 epochs of 2000 windows.
  static ExperimentConfig desk();

  void validate() const;
  Json to_json() const;
  static ExperimentConfig from_json(const Json& j);
};

/// Series, graph, evaluation masks and scaled training data.
struct Benchmark {
  NdArray values;               // [N, T] raw
  masking::Mask available;      // ground truth present
  graph::GraphSpec graph;
  pipeline::Splits splits;
  masking::MaskPair eval;       // over the whole horizon
  pipeline::Scaler scaler;      // fitted on training-split conditioning entries
  pipeline::TrainData train_data;

  std::size_t test_begin() const noexcept { return splits.val_end; }
};

/// Synthetic benchmark from config.data.
Benchmark prepare_benchmark(const ExperimentConfig& config);
/// Benchmark over loaded data; targets are drawn among available entries.
Benchmark prepare_benchmark(const ExperimentConfig& config, NdArray values,
                            masking::Mask available, graph::GraphSpec graph);

/// Root-seed streams.
std::uint64_t init_seed(std::uint64_t root);
std::uint64_t train_seed(std::uint64_t root);
std::uint64_t impute_seed(std::uint64_t root);

model::NoiseModel train_model(const model::ModelConfig& mc, const pipeline::TrainConfig& tc,
                              const Benchmark& bench, std::uint64_t root,
                              pipeline::TrainResult* result = nullptr,
                              const std::function<void(const pipeline::EpochStats&)>& on_epoch = {});

/// Imputation of the test split (or its first `windows` windows) by the
/// model and both baselines.
struct TestEvaluation {
  std::size_t begin = 0, end = 0;  // columns of the full horizon
  NdArray truth;                   // [N, end - begin]
  masking::Mask given, target;
  std::map<std::string, NdArray> imputed;  // "model", "mean", "linear"
  std::map<std::string, pipeline::ErrorMetrics> metrics;
  std::map<std::string, double> seconds;
};

TestEvaluation evaluate_test(const model::NoiseModel& model, const Benchmark& bench,
                             std::size_t samples, std::size_t windows, std::uint64_t seed);

/// Same over columns [begin, end) of the full horizon. Throws
/// std::invalid_argument on an empty or out-of-range span.
TestEvaluation evaluate_range(const model::NoiseModel& model, const Benchmark& bench,
                              std::size_t begin, std::size_t end, std::size_t samples,
                              std::uint64_t seed);

struct AblationRow {
  std::uint64_t seed = 0;
  std::string direction;
  pipeline::ErrorMetrics metrics;
  double train_seconds = 0.0, impute_seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // uni then bi per seed
  std::size_t bi_wins = 0;        // seeds with bi MAE <= uni MAE
};

/// Trains uni and bi variants on the same data with the same seeds at the
/// ablation budget and compares their test MAE.
AblationResult run_ablation(const ExperimentConfig& config, const Benchmark& bench,
                            const std::function<void(const AblationRow&)>& on_row = {});

struct SensitivityRow {
  double rate = 0.0;
  pipeline::ErrorMetrics metrics;
  double seconds = 0.0;
};

struct SensitivityResult {
  std::vector<SensitivityRow> rows;
  std::size_t inversions = 0;   // adjacent rates where MAE drops
  double largest_drop = 0.0;    // largest such drop over the mean MAE
  double mean_mae = 0.0;
  /// Nondecreasing up to at most one inversion smaller than 2% of the mean.
  bool trend_holds() const noexcept { return inversions == 0 || (inversions == 1 && largest_drop < 0.02); }
};

/// Point-missing targets at each rate over the test split, nested across
/// rates (one uniform draw per entry). A rate that leaves no targets raises
/// std::invalid_argument.
SensitivityResult run_sensitivity(const model::NoiseModel& model, const Benchmark& bench,
                                  const SensitivityConfig& config, std::uint64_t seed,
                                  const std::function<void(const SensitivityRow&)>& on_row = {});

struct DownstreamRow {
  std::string imputer;
  std::size_t node = 0;
  std::uint64_t seed = 0;
  pipeline::ErrorMetrics metrics;
};

struct DownstreamResult {
  std::vector<std::size_t> nodes;  // highest then lowest degree
  std::vector<DownstreamRow> rows;
  /// True when "oracle" has the lowest MSE for every node and seed.
  bool oracle_best() const;
};

/// Highest- and lowest-degree nodes (ties to the lower index).
std::vector<std::size_t> degree_extremes(const NdArray& adjacency);

/// Regresses node v on the other nodes at the same step, per imputed series.
/// Rows are split in time order; features and target are min-max scaled on
/// the training rows; test errors are taken only where the target node's
/// value was actually given and are measured against `truth`.
DownstreamResult run_downstream(const std::map<std::string, NdArray>& series,
                                const NdArray& truth, const masking::Mask& given,
                                const std::vector<std::size_t>& nodes,
                                const DownstreamConfig& config);

/// git describe of the build, or "unknown".
std::string git_describe();

}  // namespace ssmdiff::bench
