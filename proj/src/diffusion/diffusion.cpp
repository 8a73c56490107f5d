// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/diffusion/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ssmdiff/autodiff/ops.hpp"

namespace ssmdiff::diffusion {

namespace {

std::size_t count_targets(const NdArray& target) {
  std::size_t n = 0;
  for (double m : target.data()) n += m != 0.0;
  if (n == 0) {
    throw std::invalid_argument("masked_loss: target mask is empty; resample the batch");
  }
  return n;
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw std::invalid_argument("DiffusionSchedule: no steps");
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    const double b = beta_[i];
    if (!(b > 0.0 && b < 1.0) || (i && b < beta_[i - 1])) {
      throw std::invalid_argument("DiffusionSchedule: betas must be nondecreasing in (0, 1)");
    }
    alpha_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
}

std::size_t DiffusionSchedule::index(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                            std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

DiffusionSchedule quadratic_schedule(std::size_t steps, double beta_1, double beta_T) {
  if (steps < 2) throw std::invalid_argument("quadratic_schedule: need T >= 2");
  if (!(0.0 < beta_1 && beta_1 < beta_T && beta_T < 1.0)) {
    throw std::invalid_argument("quadratic_schedule: need 0 < beta_1 < beta_T < 1");
  }
  const double s1 = std::sqrt(beta_1), sT = std::sqrt(beta_T);
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double f = double(i) / double(steps - 1);
    const double s = s1 + f * (sT - s1);
    betas[i] = s * s;
  }
  betas.front() = beta_1;
  betas.back() = beta_T;
  return DiffusionSchedule(std::move(betas));
}

NdArray forward_noise(const NdArray& x0, std::size_t t, const NdArray& eps,
                      const DiffusionSchedule& schedule) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_noise", shape_str(x0.shape()) + " vs " + shape_str(eps.shape()));
  }
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  NdArray out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

NdArray reverse_step(const NdArray& x_t, const NdArray& eps_hat, std::size_t t,
                     const DiffusionSchedule& schedule, const NdArray& z) {
  if (x_t.shape() != eps_hat.shape() || x_t.shape() != z.shape()) {
    throw ShapeError("reverse_step", shape_str(x_t.shape()) + ", " +
                                         shape_str(eps_hat.shape()) + ", " +
                                         shape_str(z.shape()));
  }
  const double beta = schedule.beta(t);
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double sigma = std::sqrt(beta);
  NdArray out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (x_t[i] - coef * eps_hat[i]) * inv_sqrt_alpha;
    if (t > 1) out[i] += sigma * z[i];
  }
  return out;
}

Var masked_loss(Var eps, Var eps_hat, const NdArray& target) {
  if (eps.shape() != target.shape() || eps_hat.shape() != target.shape()) {
    throw ShapeError("masked_loss", shape_str(eps.shape()) + ", " +
                                        shape_str(eps_hat.shape()) + ", mask " +
                                        shape_str(target.shape()));
  }
  const std::size_t n = count_targets(target);
  Var diff = ops::masked_select(ops::sub(eps, eps_hat), target);
  return ops::scale(ops::sum(ops::square(diff)), 1.0 / double(n));
}

double masked_loss(const NdArray& eps, const NdArray& eps_hat, const NdArray& target) {
  Tape t;
  return masked_loss(t.constant(eps), t.constant(eps_hat), target).value().item();
}

}  // namespace ssmdiff::diffusion
