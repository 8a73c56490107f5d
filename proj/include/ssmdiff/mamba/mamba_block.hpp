// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "ssmdiff/autodiff/module.hpp"
#include "ssmdiff/ssm/selective_ssm.hpp"

namespace ssmdiff::mamba {

enum class Direction { kUni, kBi };

struct MambaConfig {
  std::size_t d_model = 16;
  std::size_t d_cond = 0;  // width of the optional prior-feature input
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t state = 16;
  std::size_t dt_rank = 0;  // 0 selects ceil(d_model / 16)
  double dropout = 0.1;
  Direction direction = Direction::kBi;

  std::size_t inner() const noexcept { return expand * d_model; }
  std::size_t resolved_dt_rank() const noexcept {
    return dt_rank ? dt_rank : (d_model + 15) / 16;
  }
};

/// Gated Mamba block over the time axis (axis -2) of x[..., L, d].
///
///   u   = dropout(concat(norm(x), norm_cond(h_pri)))
///   xs, z = split(in_proj(u))
///   y   = ssm_fwd(silu(conv_fwd(xs)))
///         [+ rev(ssm_bwd(silu(conv_bwd(rev(xs)))))   bidirectional only]
///   out = x + norm_out(out_proj(y * silu(z)))
///
/// The prior features and x are normalised separately before concatenation,
/// so a zero h_pri with zero in_proj rows reproduces the unconditioned block.
/// Directional parameters live under `<name>.conv_fwd`, `<name>.ssm_fwd`,
/// `<name>.conv_bwd` and `<name>.ssm_bwd`.
class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(ParameterStore& store, const std::string& name,
             const MambaConfig& config, Rng& rng);

  Var operator()(ParamBinding& p, const ForwardContext& ctx, Var x,
                 std::optional<Var> h_pri = std::nullopt) const;

  const MambaConfig& config() const noexcept { return config_; }

 private:
  Var path(ParamBinding& p, const ForwardContext& ctx, Var xs,
           const std::string& conv, const ssm::SelectiveSsm& ssm) const;

  std::string name_;
  MambaConfig config_;
  LayerNorm norm_in_, norm_cond_, norm_out_;
  Linear in_proj_, out_proj_;
  ssm::SelectiveSsm ssm_fwd_, ssm_bwd_;
};

}  // namespace ssmdiff::mamba
