// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ssmdiff/autodiff/module.hpp"

namespace ssmdiff::graph {

using Point = std::array<double, 2>;

/// Static sensor graph. `adjacency` is symmetric, nonnegative and has a zero
/// diagonal; `normalized` is D^{-1/2} (A + I) D^{-1/2}.
struct GraphSpec {
  std::size_t nodes = 0;
  std::vector<Point> coords;  // empty when the graph was loaded from a file
  NdArray adjacency;          // [N, N]
  NdArray normalized;         // [N, N]
};

/// A_ij = exp(-|p_i - p_j|^2 / length_scale^2) when that weight is at least
/// `threshold`, else 0. Throws std::invalid_argument for N < 2, a nonpositive
/// length scale, or a threshold that leaves no edges.
GraphSpec build_adjacency(const std::vector<Point>& coords, double length_scale,
                          double threshold);

/// Validates an adjacency matrix and attaches its normalisation. N = 1 is
/// allowed here (a single-node graph has no edges).
GraphSpec graph_from_adjacency(NdArray adjacency);

NdArray normalize_adjacency(const NdArray& adjacency);

/// Weighted degree sum_j A_ij per node.
std::vector<double> degrees(const NdArray& adjacency);

/// One-hop message passing applied per time step of H[..., N, L, d]:
///   H' = silu(A_hat H W_msg + H W_self) + H
class Mpnn {
 public:
  Mpnn() = default;
  Mpnn(ParameterStore& store, const std::string& name, std::size_t width, Rng& rng);

  /// a_hat: [N, N]; the node axis is axis -3 of h.
  Var operator()(ParamBinding& p, Var h, Var a_hat) const;

 private:
  Linear msg_, self_;
};

struct AttentionConfig {
  std::size_t width = 16;         // d
  std::size_t nodes = 1;          // N
  std::size_t virtual_nodes = 1;  // k, 1 <= k <= N
  std::size_t heads = 4;
  /// Initial logit on the diagonal of the compression and expansion maps
  /// (entries i == j for i < k). Large values start close to the identity.
  double diagonal_init = 0.0;
};

/// Per-call capture of the attention probabilities, shaped [B*L*heads, k, k].
struct AttentionTrace {
  NdArray weights;
};

/// Node-axis attention through k virtual nodes, per time step of
/// H[B, N, L, d]:
///   Z   = softmax_n(compress)^T H          (N -> k pooling, per virtual node)
///   Z'  = MultiHeadAttention(Z)            (scaled dot product among k tokens)
///   out = H + softmax_k(expand) Z'         (k -> N)
/// `compress` and `expand` are learned [N, k] logit tables.
class VirtualNodeAttention {
 public:
  VirtualNodeAttention() = default;
  VirtualNodeAttention(ParameterStore& store, const std::string& name,
                       const AttentionConfig& config, Rng& rng);

  Var operator()(ParamBinding& p, Var h, AttentionTrace* trace = nullptr) const;

  const AttentionConfig& config() const noexcept { return config_; }

 private:
  std::string name_;
  AttentionConfig config_;
  Linear query_, key_, value_, out_;
};

}  // namespace ssmdiff::graph
