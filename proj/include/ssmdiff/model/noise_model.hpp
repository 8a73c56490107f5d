// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssmdiff/autodiff/module.hpp"
#include "ssmdiff/graph/spatial.hpp"
#include "ssmdiff/mamba/mamba_block.hpp"
#include "ssmdiff/util/strict_json.hpp"

namespace ssmdiff::model {

struct ModelConfig {
  std::size_t channels = 16;        // d
  std::size_t layers = 2;           // noise-estimation blocks
  std::size_t heads = 4;
  std::size_t virtual_nodes = 0;    // 0 selects min(nodes, 4)
  std::size_t nodes = 8;            // N
  std::size_t length = 24;          // L
  std::size_t diffusion_steps = 50; // T
  double beta_min = 1e-4;
  double beta_max = 0.2;
  std::size_t step_embedding_dim = 32;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t state = 16;
  double dropout = 0.1;
  mamba::Direction direction = mamba::Direction::kBi;

  std::size_t resolved_virtual_nodes() const noexcept {
    return virtual_nodes ? virtual_nodes : (nodes < 4 ? nodes : 4);
  }
  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  Json to_json() const;
  static ModelConfig from_json(const Json& j);
  /// FNV-1a of the canonical (sorted-key) JSON form.
  std::uint64_t hash() const;
};

/// Sinusoid over geometrically spaced frequencies f_k = 10000^(-k/half):
/// [sin(t f_0), ..., sin(t f_{half-1}), cos(t f_0), ..., cos(t f_{half-1})].
NdArray sinusoidal_embedding(std::size_t t, std::size_t dim);

/// Diffusion-step embedding: sinusoid followed by a two-layer SiLU MLP.
class StepEmbedding {
 public:
  StepEmbedding() = default;
  StepEmbedding(ParameterStore& store, const std::string& name, std::size_t dim,
                std::size_t width, Rng& rng);
  /// [steps.size(), width]
  Var operator()(ParamBinding& p, const std::vector<std::size_t>& steps) const;

 private:
  std::size_t dim_ = 0;
  Linear fc1_, fc2_;
};

/// Per-call inputs of the noise predictor. Arrays are [B, N, L].
struct NoiseInput {
  NdArray noisy;       // x_t; only entries outside cond_mask are read
  NdArray interp;      // interpolated series built from conditioning entries
  NdArray cond_mask;   // 1 where the value is given to the model
  std::vector<std::size_t> steps;  // diffusion step per batch element
};

/// Noise predictor eps_theta(x_t, interp, A_hat, t | M).
///
///   prior = Mlp(Mpnn(Attention(Mamba(Lin(interp)))))             [B, N, L, d]
///   h_0   = Lin([(1 - M) x_t, interp, M])
///   per block l:
///     u      = Mpnn(Attention(Mamba(h_l + Lin_l(emb(t)), prior)))
///     g      = sigmoid(u W_g) * tanh(u W_f)
///     res, s = split(Lin_out(g))
///     h_{l+1} = h_l + res,   skip_l = s
///   eps_hat = Lin(silu(Lin(sum_l skip_l / sqrt(layers))))          [B, N, L]
class NoiseModel {
 public:
  NoiseModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }

  /// Conditioning features from the interpolated series [B, N, L].
  Var prior(ParamBinding& p, const ForwardContext& ctx, Var interp, Var a_hat) const;

  /// One noise-estimation block; returns (h_next, skip).
  std::pair<Var, Var> block(ParamBinding& p, const ForwardContext& ctx, std::size_t layer,
                            Var h_in, Var prior, Var step_emb, Var a_hat) const;

  /// eps_hat [B, N, L]. A precomputed prior with batch 1 is broadcast.
  Var forward(ParamBinding& p, const ForwardContext& ctx, const NoiseInput& in,
              const NdArray& a_hat, std::optional<Var> prior = std::nullopt) const;

  /// Evaluation-mode forward on a scratch tape.
  NdArray predict(const NoiseInput& in, const NdArray& a_hat) const;

 private:
  void check_input(const NoiseInput& in) const;

  ModelConfig config_;
  ParameterStore store_;
  Linear cfem_in_, cfem_mlp1_, cfem_mlp2_;
  mamba::MambaBlock cfem_mamba_;
  graph::VirtualNodeAttention cfem_attn_;
  graph::Mpnn cfem_mpnn_;
  StepEmbedding step_emb_;
  Linear input_;
  struct Block {
    Linear step_proj, mid, out;
    mamba::MambaBlock mamba;
    graph::VirtualNodeAttention attn;
    graph::Mpnn mpnn;
  };
  std::vector<Block> blocks_;
  Linear head1_, head2_;
};

}  // namespace ssmdiff::model
