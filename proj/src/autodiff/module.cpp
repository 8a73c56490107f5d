// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/autodiff/module.hpp"

#include <cmath>
#include <stdexcept>

namespace ssmdiff {

NdArray& ParameterStore::add(const std::string& name, NdArray init) {
  if (values_.count(name)) {
    throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
  order_.push_back(name);
  return values_.emplace(name, std::move(init)).first->second;
}

const NdArray& ParameterStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::out_of_range("unknown parameter '" + name + "'");
  }
  return it->second;
}

NdArray& ParameterStore::get(const std::string& name) {
  return const_cast<NdArray&>(std::as_const(*this).get(name));
}

bool ParameterStore::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : values_) n += v.size();
  return n;
}

ParamBinding::ParamBinding(Tape& tape, const ParameterStore& store,
                           bool trainable)
    : tape_(&tape), store_(&store), trainable_(trainable) {}

Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const NdArray& v = store_->get(name);
  Var var = trainable_ ? tape_->leaf(v) : tape_->constant(v);
  bound_.emplace(name, var);
  return var;
}

std::map<std::string, NdArray> ParamBinding::gradients() const {
  std::map<std::string, NdArray> out;
  for (const std::string& name : store_->names()) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end()
                          ? NdArray(store_->get(name).shape())
                          : tape_->grad(it->second));
  }
  return out;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in,
               std::size_t out, Rng& rng, Init init, bool bias)
    : weight_(name + ".weight"), in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(weight_, init == Init::kZero
                         ? NdArray({in, out})
                         : rand_uniform({in, out}, rng, -bound, bound));
  if (bias) {
    bias_ = name + ".bias";
    store.add(bias_, NdArray({out}));
  }
}

Var Linear::operator()(ParamBinding& p, Var x) const {
  Var y = ops::matmul(x, p(weight_));
  return bias_.empty() ? y : ops::add_bias(y, p(bias_));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name,
                     std::size_t width)
    : scale_(name + ".scale"), shift_(name + ".shift") {
  store.add(scale_, NdArray({width}, 1.0));
  store.add(shift_, NdArray({width}));
}

Var LayerNorm::operator()(ParamBinding& p, Var x) const {
  return ops::layer_norm(x, p(scale_), p(shift_));
}

}  // namespace ssmdiff
