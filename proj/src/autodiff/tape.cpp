// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/autodiff/tape.hpp"

#include <string>

namespace ssmdiff {

const NdArray& Var::value() const { return tape->value(id); }
const Shape& Var::shape() const { return tape->value(id).shape(); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Tape::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

Tape::Node& Tape::push() {
  if (live_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[live_++];
  n.grad = NdArray();
  n.inputs.clear();
  n.backward = nullptr;
  n.requires_grad = false;
  n.is_leaf = false;
  return n;
}

Var Tape::constant(NdArray value) {
  Node& n = push();
  n.value = std::move(value);
  return Var{this, live_ - 1};
}

Var Tape::leaf(NdArray value) {
  Node& n = push();
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  return Var{this, live_ - 1};
}

Var Tape::record(NdArray value, std::initializer_list<Var> inputs,
                 BackwardFn fn, const char* op) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(fn), op);
}

Var Tape::record(NdArray value, const std::vector<Var>& inputs, BackwardFn fn,
                 const char* op) {
  if (check_finite_ && !value.all_finite()) {
    throw InvariantError(std::string(op) + ": non-finite output, shape " +
                         shape_str(value.shape()));
  }
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) {
      throw std::invalid_argument(std::string(op) +
                                  ": operand recorded on a different tape");
    }
    needs = needs || nodes_[v.id].requires_grad;
  }
  Node& n = push();
  n.value = std::move(value);
  if (needs) {
    n.requires_grad = true;
    n.backward = std::move(fn);
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) n.inputs.push_back(v.id);
  }
  return Var{this, live_ - 1};
}

NdArray& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = NdArray(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) {
    throw std::invalid_argument("backward: loss belongs to another tape");
  }
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got shape " +
                                     shape_str(value(loss.id).shape()));
  }
  for (std::size_t i = 0; i < live_; ++i) nodes_[i].grad = NdArray();
  if (!nodes_[loss.id].requires_grad) return;
  grad_accumulator(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

NdArray Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return NdArray(n.value.shape());
  return n.grad;
}

void Tape::clear() { live_ = 0; }

GradientMap backward(Tape& tape, Var loss) {
  tape.backward(loss);
  GradientMap out;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    if (tape.is_leaf(i)) out.emplace(i, tape.grad(Var{&tape, i}));
  }
  return out;
}

}  // namespace ssmdiff
