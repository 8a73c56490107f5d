// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/mamba/mamba_block.hpp"

#include <cmath>

namespace ssmdiff::mamba {

namespace {

void add_conv(ParameterStore& store, const std::string& name, std::size_t channels,
              std::size_t width, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  store.add(name + ".weight", rand_uniform({channels, width}, rng, -bound, bound));
  store.add(name + ".bias", NdArray({channels}));
}

}  // namespace

MambaBlock::MambaBlock(ParameterStore& store, const std::string& name,
                       const MambaConfig& config, Rng& rng)
    : name_(name), config_(config) {
  if (config.d_model == 0 || config.expand == 0 || config.conv_width == 0 ||
      config.state == 0) {
    throw std::invalid_argument("MambaBlock: dimensions must be positive");
  }
  const std::size_t inner = config.inner();
  norm_in_ = LayerNorm(store, name + ".norm_in", config.d_model);
  if (config.d_cond) norm_cond_ = LayerNorm(store, name + ".norm_cond", config.d_cond);
  in_proj_ = Linear(store, name + ".in_proj", config.d_model + config.d_cond,
                    2 * inner, rng);
  const ssm::SsmDims dims{inner, config.state, config.resolved_dt_rank()};
  add_conv(store, name + ".conv_fwd", inner, config.conv_width, rng);
  ssm_fwd_ = ssm::SelectiveSsm(store, name + ".ssm_fwd", dims, rng);
  if (config.direction == Direction::kBi) {
    add_conv(store, name + ".conv_bwd", inner, config.conv_width, rng);
    ssm_bwd_ = ssm::SelectiveSsm(store, name + ".ssm_bwd", dims, rng);
  }
  out_proj_ = Linear(store, name + ".out_proj", inner, config.d_model, rng);
  norm_out_ = LayerNorm(store, name + ".norm_out", config.d_model);
}

Var MambaBlock::path(ParamBinding& p, const ForwardContext& ctx, Var xs,
                     const std::string& conv,
                     const ssm::SelectiveSsm& ssm) const {
  Var c = ops::depthwise_conv1d(xs, p(conv + ".weight"), p(conv + ".bias"));
  return ssm(p, ctx, ops::silu(c));
}

Var MambaBlock::operator()(ParamBinding& p, const ForwardContext& ctx, Var x,
                           std::optional<Var> h_pri) const {
  const Shape xs_shape = x.shape();
  if (xs_shape.size() < 2 || xs_shape.back() != config_.d_model) {
    throw ShapeError("mamba_block", "input " + shape_str(xs_shape) +
                                        " vs d_model " +
                                        std::to_string(config_.d_model));
  }
  const std::size_t last = xs_shape.size() - 1, time = last - 1;
  const std::size_t inner = config_.inner();

  Var u = norm_in_(p, x);
  if (config_.d_cond) {
    if (!h_pri) throw ShapeError("mamba_block", "block expects prior features");
    Shape want = xs_shape;
    want.back() = config_.d_cond;
    if (h_pri->shape() != want) {
      throw ShapeError("mamba_block", "prior features " +
                                          shape_str(h_pri->shape()) +
                                          ", expected " + shape_str(want));
    }
    u = ops::concat({u, norm_cond_(p, *h_pri)}, last);
  } else if (h_pri) {
    throw ShapeError("mamba_block", "block was built without a prior input");
  }
  if (ctx.training && config_.dropout > 0.0 && !ctx.rng) {
    throw std::invalid_argument("mamba_block: training dropout needs an rng");
  }
  if (ctx.rng) u = ops::dropout(u, config_.dropout, ctx.training, *ctx.rng);

  Var proj = in_proj_(p, u);
  Var xs = ops::slice(proj, last, 0, inner);
  Var z = ops::slice(proj, last, inner, 2 * inner);

  Var y = path(p, ctx, xs, name_ + ".conv_fwd", ssm_fwd_);
  if (config_.direction == Direction::kBi) {
    Var back = path(p, ctx, ops::reverse(xs, time), name_ + ".conv_bwd", ssm_bwd_);
    y = ops::add(y, ops::reverse(back, time));
  }
  y = ops::mul(y, ops::silu(z));
  Var out = norm_out_(p, out_proj_(p, y));
  return ops::add(x, out);
}

}  // namespace ssmdiff::mamba
