// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssmdiff/diffusion/diffusion.hpp"
#include "ssmdiff/masking/masks.hpp"
#include "ssmdiff/model/noise_model.hpp"

namespace ssmdiff::pipeline {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::size_t windows_per_epoch = 2000;  // random-offset training windows
  double learning_rate = 1e-3;
  std::vector<double> milestones{0.75, 0.9};       // fractions of the epochs
  std::vector<double> milestone_rates{1e-4, 1e-5};
  std::string strategy = "point";
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  std::size_t validation_draws = 2;  // diffusion steps drawn per validation window

  void validate() const;
  /// Piecewise-constant rate: milestone k applies from epoch floor(m_k * epochs).
  double rate_for_epoch(std::size_t epoch) const;

  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8, weight_decay = 0.0;
};

/// Adaptive moment estimation with bias correction. Weight decay is added to
/// the gradient (L2 form).
class Adam {
 public:
  explicit Adam(const ParameterStore& store, AdamConfig config = {});
  void step(ParameterStore& store, const std::map<std::string, NdArray>& grads, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::map<std::string, NdArray> m_, v_;
  std::size_t t_ = 0;
};

/// One prepared denoising batch, all arrays [B, N, L] in model units.
struct Batch {
  NdArray x0, cond, target, interp, eps, noisy;
  std::vector<std::size_t> steps;
};

/// Builds the corrupted inputs for windows `x0` and their mask pairs, with
/// diffusion steps drawn uniformly from [1, T] and standard normal noise.
Batch make_batch(const NdArray& x0, const std::vector<masking::MaskPair>& masks,
                 const diffusion::DiffusionSchedule& schedule, Rng& rng);

/// Same, with fixed diffusion steps.
Batch make_batch(const NdArray& x0, const std::vector<masking::MaskPair>& masks,
                 const diffusion::DiffusionSchedule& schedule,
                 const std::vector<std::size_t>& steps, Rng& rng);

/// Gradient steps on one model. Keeps a single tape alive between steps.
class Trainer {
 public:
  Trainer(model::NoiseModel& model, const TrainConfig& config, NdArray a_hat);

  /// One Adam step; returns the batch loss before the update.
  double step(const Batch& batch, double lr, Rng& dropout_rng);
  /// Evaluation-mode masked loss sum and target count.
  std::pair<double, std::size_t> evaluate(const Batch& batch);

  const Adam& optimizer() const noexcept { return adam_; }

 private:
  model::NoiseModel& model_;
  NdArray a_hat_;
  Adam adam_;
  Tape tape_;
};

/// Training and validation series, already scaled, with the normalized
/// adjacency. `val` may have zero steps.
struct TrainData {
  NdArray train;                    // [N, T_train]
  masking::Mask train_observed;
  NdArray val;                      // [N, T_val]
  masking::Mask val_observed;
  NdArray a_hat;
  const std::vector<masking::Mask>* pool = nullptr;  // [N, L] missing patterns
};

struct EpochStats {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN without validation windows
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

/// Trains in place and leaves the best-validation parameters in the model.
/// Validation target masks are redrawn every epoch from a validation-only
/// stream of `seed`. Throws TrainingError on a non-finite loss.
TrainResult train(model::NoiseModel& model, const TrainData& data, const TrainConfig& config,
                  std::uint64_t seed,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace ssmdiff::pipeline
