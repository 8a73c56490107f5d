// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "ssmdiff/autodiff/module.hpp"
#include "ssmdiff/ssm/selective_scan.hpp"

namespace ssmdiff::ssm {

struct SsmDims {
  std::size_t channels = 0;  // D, the expanded width fed to the scan
  std::size_t state = 16;    // n
  std::size_t dt_rank = 1;   // rank of the step-size projection
};

/// S6 layer: input-dependent step size, input and readout projections over a
/// diagonal negative state matrix, plus a per-channel skip gain.
///
/// Parameters under `name`:
///   a_log [D, n]   A = -exp(a_log), initialised so -A spans 1..n per channel
///   d [D]          skip gain, initialised to 1
///   x_proj         D -> dt_rank + 2n, no bias (realises s_delta, s_B, s_C)
///   dt_proj        dt_rank -> D with bias; softplus(bias) lies in
///                  [dt_min, dt_max], log-uniform
class SelectiveSsm {
 public:
  SelectiveSsm() = default;
  SelectiveSsm(ParameterStore& store, const std::string& name, SsmDims dims,
               Rng& rng, double dt_min = 1e-3, double dt_max = 0.1);

  struct Projections {
    Var delta;  // [..., L, D], strictly positive
    Var b;      // [..., L, n]
    Var c;      // [..., L, n]
  };

  Projections selective_projections(ParamBinding& p, Var x) const;

  /// x: [..., L, D] -> y: [..., L, D].
  Var operator()(ParamBinding& p, const ForwardContext& ctx, Var x) const;

  const SsmDims& dims() const noexcept { return dims_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
  SsmDims dims_;
  Linear x_proj_, dt_proj_;
};

}  // namespace ssmdiff::ssm
