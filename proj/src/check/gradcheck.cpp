// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/check/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmdiff::check {

namespace {

std::vector<std::size_t> probe_indices(std::size_t size,
                                       const GradCheckOptions& options,
                                       std::size_t salt) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (options.max_entries && options.max_entries < size) {
    Rng rng(derive_seed(options.seed, salt));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_entries);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

void update(GradCheckResult& r, double g, double fd, const GradCheckOptions& o,
            const std::string& where) {
  const double denom = std::max({std::abs(g), std::abs(fd), o.floor});
  const double err = std::abs(g - fd) / denom;
  ++r.checked;
  if (!(err <= r.max_rel_error)) {
    r.max_rel_error = err;
    r.worst = where;
    r.worst_analytic = g;
    r.worst_numeric = fd;
  }
}

}  // namespace

GradCheckResult check_gradients(const LossFn& loss, std::vector<NdArray> inputs,
                                const GradCheckOptions& options) {
  Tape tape;
  std::vector<Var> leaves;
  for (const NdArray& x : inputs) leaves.push_back(tape.leaf(x));
  Var out = loss(tape, leaves);
  tape.backward(out);
  std::vector<NdArray> analytic;
  for (Var v : leaves) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<NdArray>& xs) {
    Tape t;
    std::vector<Var> vs;
    for (const NdArray& x : xs) vs.push_back(t.constant(x));
    return loss(t, vs).value().item();
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k : probe_indices(inputs[i].size(), options, i)) {
      const double x0 = inputs[i][k];
      inputs[i][k] = x0 + options.step;
      const double fp = eval(inputs);
      inputs[i][k] = x0 - options.step;
      const double fm = eval(inputs);
      inputs[i][k] = x0;
      update(result, analytic[i][k], (fp - fm) / (2.0 * options.step), options,
             "input" + std::to_string(i) + "[" + std::to_string(k) + "]");
    }
  }
  return result;
}

GradCheckResult check_parameter_gradients(ParameterStore& store,
                                          const ParamLossFn& loss,
                                          const GradCheckOptions& options) {
  std::map<std::string, NdArray> analytic;
  {
    Tape tape;
    ParamBinding p(tape, store);
    Var out = loss(p);
    tape.backward(out);
    analytic = p.gradients();
  }
  auto eval = [&] {
    Tape t;
    ParamBinding p(t, store, /*trainable=*/false);
    return loss(p).value().item();
  };

  GradCheckResult result;
  std::size_t salt = 0;
  for (const std::string& name : store.names()) {
    NdArray& w = store.get(name);
    for (std::size_t k : probe_indices(w.size(), options, salt++)) {
      const double x0 = w[k];
      w[k] = x0 + options.step;
      const double fp = eval();
      w[k] = x0 - options.step;
      const double fm = eval();
      w[k] = x0;
      update(result, analytic.at(name)[k], (fp - fm) / (2.0 * options.step),
             options, name + "[" + std::to_string(k) + "]");
    }
  }
  return result;
}

Var random_projection(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Var w = y.tape->constant(randn(y.shape(), rng));
  return ops::sum(ops::mul(y, w));
}

}  // namespace ssmdiff::check
