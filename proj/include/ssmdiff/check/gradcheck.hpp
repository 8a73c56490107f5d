// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ssmdiff/autodiff/module.hpp"

/// Central finite-difference checks of tape gradients. Used by the test
/// suite and by the `gradcheck` subcommand.
namespace ssmdiff::check {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error |g - fd| / max(|g|, |fd|, floor).
  double floor = 1e-5;
  /// Entries probed per tensor; 0 probes all of them.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;  // picks entries when max_entries limits probing
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<flat index>]" of the worst entry
  double worst_analytic = 0.0, worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Scalar-valued function of tape leaves.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Checks d loss / d inputs[i] for every input tensor.
GradCheckResult check_gradients(const LossFn& loss, std::vector<NdArray> inputs,
                                const GradCheckOptions& options = {});

/// Scalar-valued function of bound parameters.
using ParamLossFn = std::function<Var(ParamBinding&)>;

/// Checks d loss / d parameter for every parameter in `store`. The loss must
/// be deterministic given the store (no dropout).
GradCheckResult check_parameter_gradients(ParameterStore& store,
                                          const ParamLossFn& loss,
                                          const GradCheckOptions& options = {});

/// sum(y * w) for fixed random w, turning any output into a scalar with a
/// generic gradient.
Var random_projection(Var y, std::uint64_t seed);

}  // namespace ssmdiff::check
