// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssmdiff/autodiff/ops.hpp"

namespace ssmdiff {

/// Named learnable tensors in registration order.
class ParameterStore {
 public:
  NdArray& add(const std::string& name, NdArray init);
  const NdArray& get(const std::string& name) const;
  NdArray& get(const std::string& name);
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, NdArray> values_;
};

/// Binds parameters to one tape. Each parameter becomes a leaf on first use.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParameterStore& store, bool trainable = true);

  Var operator()(const std::string& name);
  Tape& tape() noexcept { return *tape_; }

  /// Per-parameter gradients after tape().backward(loss). Parameters the
  /// forward pass never touched get zeros.
  std::map<std::string, NdArray> gradients() const;

 private:
  Tape* tape_;
  const ParameterStore* store_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

/// Per-call switches shared by every module in a forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;          // dropout draws; required when training
  bool parallel_scan = false;  // chunked scan instead of the fused sequential one
  std::size_t scan_chunk = 64;
};

enum class Init { kUniform, kZero };

/// Affine map over the last axis.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng, Init init = Init::kUniform,
         bool bias = true);

  Var operator()(ParamBinding& p, Var x) const;

  const std::string& weight_name() const noexcept { return weight_; }
  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

 private:
  std::string weight_, bias_;
  std::size_t in_ = 0, out_ = 0;
};

/// Layer norm over the last axis with learned scale and shift.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Var operator()(ParamBinding& p, Var x) const;

 private:
  std::string scale_, shift_;
};

}  // namespace ssmdiff
