// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/ssm/selective_ssm.hpp"

#include <cmath>

namespace ssmdiff::ssm {

SelectiveSsm::SelectiveSsm(ParameterStore& store, const std::string& name,
                           SsmDims dims, Rng& rng, double dt_min, double dt_max)
    : name_(name), dims_(dims) {
  if (dims.channels == 0 || dims.state == 0 || dims.dt_rank == 0) {
    throw std::invalid_argument("SelectiveSsm: dimensions must be positive");
  }
  if (!(0.0 < dt_min && dt_min <= dt_max)) {
    throw std::invalid_argument("SelectiveSsm: need 0 < dt_min <= dt_max");
  }
  const std::size_t D = dims.channels, n = dims.state;
  NdArray a_log({D, n});
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t j = 0; j < n; ++j) a_log.at({d, j}) = std::log(double(j + 1));
  store.add(name + ".a_log", std::move(a_log));
  store.add(name + ".d", NdArray({D}, 1.0));

  x_proj_ = Linear(store, name + ".x_proj", D, dims.dt_rank + 2 * n, rng,
                   Init::kUniform, /*bias=*/false);
  dt_proj_ = Linear(store, name + ".dt_proj", dims.dt_rank, D, rng);
  // Inverse softplus of a log-uniform draw in [dt_min, dt_max].
  NdArray& bias = store.get(name + ".dt_proj.bias");
  std::uniform_real_distribution<double> u(std::log(dt_min), std::log(dt_max));
  for (double& v : bias.data()) {
    const double dt = std::exp(u(rng));
    v = dt + std::log(-std::expm1(-dt));
  }
}

SelectiveSsm::Projections SelectiveSsm::selective_projections(ParamBinding& p,
                                                              Var x) const {
  const std::size_t r = dims_.dt_rank, n = dims_.state;
  const std::size_t last = x.shape().size() - 1;
  Var proj = x_proj_(p, x);
  Var dt_low = ops::slice(proj, last, 0, r);
  Var b = ops::slice(proj, last, r, r + n);
  Var c = ops::slice(proj, last, r + n, r + 2 * n);
  Var delta = ops::softplus(dt_proj_(p, dt_low));
  return {delta, b, c};
}

Var SelectiveSsm::operator()(ParamBinding& p, const ForwardContext& ctx,
                             Var x) const {
  Projections s = selective_projections(p, x);
  return selective_scan(x, s.delta, p(name_ + ".a_log"), s.b, s.c,
                        p(name_ + ".d"),
                        ScanOptions{ctx.parallel_scan, ctx.scan_chunk});
}

}  // namespace ssmdiff::ssm
