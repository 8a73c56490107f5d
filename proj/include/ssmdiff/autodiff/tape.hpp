// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <vector>

#include "ssmdiff/autodiff/ndarray.hpp"

namespace ssmdiff {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const NdArray& value() const;
  const Shape& shape() const;
  bool requires_grad() const;
  explicit operator bool() const noexcept { return tape != nullptr; }
};

/// Gradients keyed by leaf node id.
using GradientMap = std::map<std::size_t, NdArray>;

/// Single-writer record of primitive ops for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every op's inputs precede it.
/// backward() walks the nodes once in reverse record order. Ops whose
/// inputs carry no gradient are stored as plain values with no backward
/// rule, which makes a tape holding only constants an inference-mode
/// evaluator.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(NdArray value);
  Var leaf(NdArray value);

  /// Appends an op result. `fn` is dropped when no input needs a gradient.
  Var record(NdArray value, std::initializer_list<Var> inputs, BackwardFn fn,
             const char* op);
  Var record(NdArray value, const std::vector<Var>& inputs, BackwardFn fn,
             const char* op);

  const NdArray& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool is_leaf(std::size_t id) const { return nodes_[id].is_leaf; }
  std::size_t size() const noexcept { return live_; }

  /// Upstream gradient of node `id` during backward.
  const NdArray& out_grad(std::size_t id) const { return nodes_[id].grad; }

  /// Gradient buffer of node `id`, zero-initialised on first touch.
  NdArray& grad_accumulator(std::size_t id);

  /// Runs the reverse sweep from a scalar `loss`.
  void backward(Var loss);

  /// Gradient of `v` after backward(); zeros when `v` was unreachable.
  NdArray grad(Var v) const;

  /// Drops all nodes but keeps allocated node storage for the next step.
  void clear();

  void set_check_finite(bool on) noexcept { check_finite_ = on; }
  bool check_finite() const noexcept { return check_finite_; }

 private:
  struct Node {
    NdArray value;
    NdArray grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  Node& push();

  std::deque<Node> nodes_;  // stable references while recording
  std::size_t live_ = 0;
  bool check_finite_;
};

/// Reverse sweep returning a gradient for every leaf on the tape. Leaves the
/// loss does not depend on map to zeros.
GradientMap backward(Tape& tape, Var loss);

}  // namespace ssmdiff
