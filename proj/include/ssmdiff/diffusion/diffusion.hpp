// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "ssmdiff/autodiff/tape.hpp"

namespace ssmdiff::diffusion {

/// DDPM noise tables with 1-based step indices: alpha_t = 1 - beta_t and
/// alpha_bar_t = prod_{s <= t} alpha_s. The reverse variance is beta_t.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(std::vector<double> betas);

  std::size_t steps() const noexcept { return beta_.size(); }
  double beta(std::size_t t) const { return beta_.at(index(t)); }
  double alpha(std::size_t t) const { return alpha_.at(index(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(index(t)); }
  const std::vector<double>& betas() const noexcept { return beta_; }

 private:
  std::size_t index(std::size_t t) const;

  std::vector<double> beta_, alpha_, alpha_bar_;
};

/// beta_t = (sqrt(beta_1) + (t-1)/(T-1) (sqrt(beta_T) - sqrt(beta_1)))^2 with
/// both endpoints set exactly.
DiffusionSchedule quadratic_schedule(std::size_t steps, double beta_1, double beta_T);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, elementwise.
NdArray forward_noise(const NdArray& x0, std::size_t t, const NdArray& eps,
                      const DiffusionSchedule& schedule);

/// x_{t-1} = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)
///           + sqrt(beta_t) z, with no noise added at t = 1 (z is ignored).
NdArray reverse_step(const NdArray& x_t, const NdArray& eps_hat, std::size_t t,
                     const DiffusionSchedule& schedule, const NdArray& z);

/// Mean squared error over entries where target != 0. Throws
/// std::invalid_argument when the target mask is empty.
Var masked_loss(Var eps, Var eps_hat, const NdArray& target);
double masked_loss(const NdArray& eps, const NdArray& eps_hat, const NdArray& target);

}  // namespace ssmdiff::diffusion
