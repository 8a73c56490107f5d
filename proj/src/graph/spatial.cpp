// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/graph/spatial.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ssmdiff::graph {

GraphSpec build_adjacency(const std::vector<Point>& coords, double length_scale,
                          double threshold) {
  const std::size_t n = coords.size();
  if (n < 2) throw std::invalid_argument("build_adjacency: need at least 2 nodes");
  if (!(length_scale > 0.0)) {
    throw std::invalid_argument("build_adjacency: length_scale must be > 0");
  }
  NdArray a({n, n});
  bool any = false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = coords[i][0] - coords[j][0];
      const double dy = coords[i][1] - coords[j][1];
      const double w = std::exp(-(dx * dx + dy * dy) / (length_scale * length_scale));
      if (w >= threshold) {
        a.at({i, j}) = w;
        any = true;
      }
    }
  if (!any) {
    std::ostringstream msg;
    msg << "build_adjacency: threshold " << threshold
        << " removes every edge; lower the threshold or raise length_scale";
    throw std::invalid_argument(msg.str());
  }
  GraphSpec g = graph_from_adjacency(std::move(a));
  g.coords = coords;
  return g;
}

GraphSpec graph_from_adjacency(NdArray adjacency) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1) ||
      adjacency.dim(0) == 0) {
    throw ShapeError("graph_from_adjacency",
                     "expected a square matrix, got " + shape_str(adjacency.shape()));
  }
  const std::size_t n = adjacency.dim(0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = adjacency.at({i, j});
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("adjacency entries must be finite and >= 0");
      }
      if (i == j && v != 0.0) {
        throw std::invalid_argument("adjacency diagonal must be zero");
      }
      if (v != adjacency.at({j, i})) {
        throw std::invalid_argument("adjacency must be symmetric");
      }
    }
  GraphSpec g;
  g.nodes = n;
  g.normalized = normalize_adjacency(adjacency);
  g.adjacency = std::move(adjacency);
  return g;
}

NdArray normalize_adjacency(const NdArray& adjacency) {
  const std::size_t n = adjacency.dim(0);
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;  // self loop
    for (std::size_t j = 0; j < n; ++j) deg += adjacency.at({i, j});
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  NdArray out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adjacency.at({i, j}) + (i == j ? 1.0 : 0.0);
      out.at({i, j}) = a * (inv_sqrt[i] * inv_sqrt[j]);
    }
  return out;
}

std::vector<double> degrees(const NdArray& adjacency) {
  const std::size_t n = adjacency.dim(0);
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += adjacency.at({i, j});
  return d;
}

Mpnn::Mpnn(ParameterStore& store, const std::string& name, std::size_t width,
           Rng& rng)
    : msg_(store, name + ".msg", width, width, rng, Init::kUniform, false),
      self_(store, name + ".self", width, width, rng, Init::kUniform, false) {}

Var Mpnn::operator()(ParamBinding& p, Var h, Var a_hat) const {
  const std::size_t rank = h.shape().size();
  if (rank < 3) throw ShapeError("mpnn", "need [..., N, L, d], got " + shape_str(h.shape()));
  Var mixed = ops::mix_axis(h, a_hat, rank - 3);
  Var pre = ops::add(msg_(p, mixed), self_(p, h));
  return ops::add(ops::silu(pre), h);
}

VirtualNodeAttention::VirtualNodeAttention(ParameterStore& store,
                                           const std::string& name,
                                           const AttentionConfig& config, Rng& rng)
    : name_(name), config_(config) {
  const std::size_t d = config.width, n = config.nodes, k = config.virtual_nodes;
  if (k == 0 || k > n) {
    throw std::invalid_argument("VirtualNodeAttention: need 1 <= k <= N (k=" +
                                std::to_string(k) + ", N=" + std::to_string(n) + ")");
  }
  if (config.heads == 0 || d % config.heads != 0) {
    throw std::invalid_argument("VirtualNodeAttention: width must divide into heads");
  }
  for (const char* table : {".compress", ".expand"}) {
    NdArray logits = randn({n, k}, rng, 0.1);
    for (std::size_t i = 0; i < k; ++i) logits.at({i, i}) += config.diagonal_init;
    store.add(name + table, std::move(logits));
  }
  query_ = Linear(store, name + ".query", d, d, rng);
  key_ = Linear(store, name + ".key", d, d, rng);
  value_ = Linear(store, name + ".value", d, d, rng);
  out_ = Linear(store, name + ".out", d, d, rng);
}

Var VirtualNodeAttention::operator()(ParamBinding& p, Var h,
                                     AttentionTrace* trace) const {
  const Shape hs = h.shape();
  const std::size_t d = config_.width, n = config_.nodes, k = config_.virtual_nodes;
  if (hs.size() != 4 || hs[1] != n || hs[3] != d) {
    throw ShapeError("virtual_node_attention",
                     "expected [B, " + std::to_string(n) + ", L, " +
                         std::to_string(d) + "], got " + shape_str(hs));
  }
  const std::size_t B = hs[0], L = hs[2], H = config_.heads, dh = d / H;

  // Pool nodes into virtual tokens: weights sum to one over nodes.
  Var pool = ops::softmax(ops::transpose(p(name_ + ".compress")));  // [k, N]
  Var z = ops::mix_axis(h, pool, 1);                                 // [B, k, L, d]
  z = ops::permute(z, {0, 2, 1, 3});                                 // [B, L, k, d]

  auto split_heads = [&](Var x) {
    x = ops::reshape(x, {B, L, k, H, dh});
    x = ops::permute(x, {0, 1, 3, 2, 4});  // [B, L, H, k, dh]
    return ops::reshape(x, {B * L * H, k, dh});
  };
  Var q = split_heads(query_(p, z));
  Var kk = split_heads(key_(p, z));
  Var v = split_heads(value_(p, z));
  Var scores = ops::scale(ops::bmm(q, kk, /*transpose_b=*/true),
                          1.0 / std::sqrt(static_cast<double>(dh)));
  Var attn = ops::softmax(scores);  // [B*L*H, k, k]
  if (trace) trace->weights = attn.value();
  Var ctx = ops::bmm(attn, v);      // [B*L*H, k, dh]
  ctx = ops::reshape(ctx, {B, L, H, k, dh});
  ctx = ops::permute(ctx, {0, 1, 3, 2, 4});
  ctx = ops::reshape(ctx, {B, L, k, d});
  ctx = out_(p, ctx);
  ctx = ops::permute(ctx, {0, 2, 1, 3});  // [B, k, L, d]

  Var spread = ops::softmax(p(name_ + ".expand"));  // [N, k], rows sum to one
  return ops::add(h, ops::mix_axis(ctx, spread, 1));
}

}  // namespace ssmdiff::graph
