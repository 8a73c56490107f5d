// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/bench/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssmdiff/autodiff/random.hpp"

namespace ssmdiff::bench {

Mlp::Mlp(std::size_t inputs, std::size_t hidden, std::uint64_t seed)
    : in_(inputs), hidden_(hidden), params_({inputs * hidden + 2 * hidden + 1}) {
  if (inputs == 0 || hidden == 0) throw std::invalid_argument("Mlp needs inputs and hidden units");
  // Glorot uniform weights, zero biases.
  Rng rng(seed);
  const double l1 = std::sqrt(6.0 / double(inputs + hidden));
  const double l2 = std::sqrt(6.0 / double(hidden + 1));
  std::uniform_real_distribution<double> u1(-l1, l1), u2(-l2, l2);
  double* p = params_.ptr();
  for (std::size_t k = 0; k < inputs * hidden; ++k) p[k] = u1(rng);
  double* w2 = p + inputs * hidden + hidden;
  for (std::size_t k = 0; k < hidden; ++k) w2[k] = u2(rng);
}

double Mlp::loss_and_gradient(const NdArray& x, const NdArray& y, double l2,
                              NdArray& grad) const {
  const std::size_t s = x.dim(0);
  const double* w1 = params_.ptr();
  const double* b1 = w1 + in_ * hidden_;
  const double* w2 = b1 + hidden_;
  const double b2 = w2[hidden_];
  grad = NdArray(params_.shape());
  double* g1 = grad.ptr();
  double* gb1 = g1 + in_ * hidden_;
  double* gw2 = gb1 + hidden_;
  double& gb2 = gw2[hidden_];
  std::vector<double> h(hidden_);
  double loss = 0.0;
  const double inv = 1.0 / double(s);
  for (std::size_t r = 0; r < s; ++r) {
    const double* xr = x.ptr() + r * in_;
    for (std::size_t j = 0; j < hidden_; ++j) h[j] = b1[j];
    for (std::size_t i = 0; i < in_; ++i)
      for (std::size_t j = 0; j < hidden_; ++j) h[j] += xr[i] * w1[i * hidden_ + j];
    double out = b2;
    for (std::size_t j = 0; j < hidden_; ++j) {
      h[j] = h[j] > 0.0 ? h[j] : 0.0;
      out += h[j] * w2[j];
    }
    const double d = out - y[r];
    loss += 0.5 * d * d * inv;
    const double go = d * inv;
    gb2 += go;
    for (std::size_t j = 0; j < hidden_; ++j) {
      gw2[j] += go * h[j];
      if (h[j] <= 0.0) continue;
      const double gh = go * w2[j];
      gb1[j] += gh;
      for (std::size_t i = 0; i < in_; ++i) g1[i * hidden_ + j] += gh * xr[i];
    }
  }
  if (l2 > 0.0) {
    double sq = 0.0;
    for (std::size_t k = 0; k < in_ * hidden_; ++k) {
      sq += w1[k] * w1[k];
      g1[k] += l2 * inv * w1[k];
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      sq += w2[j] * w2[j];
      gw2[j] += l2 * inv * w2[j];
    }
    loss += 0.5 * l2 * inv * sq;
  }
  return loss;
}

void Mlp::fit(const NdArray& x, const NdArray& y, const MlpOptions& o, std::uint64_t seed) {
  if (x.rank() != 2 || x.dim(1) != in_ || y.size() != x.dim(0) || x.dim(0) == 0) {
    throw ShapeError("Mlp::fit", shape_str(x.shape()) + " with " + std::to_string(y.size()) +
                                     " targets");
  }
  const std::size_t s = x.dim(0), batch = std::min(o.batch_size, s);
  Rng rng(seed);
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  NdArray m(params_.shape()), v(params_.shape()), grad;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < s; start += batch) {
      const std::size_t n = std::min(batch, s - start);
      NdArray xb({n, in_}), yb({n});
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t src = order[start + r];
        std::copy(x.ptr() + src * in_, x.ptr() + (src + 1) * in_, xb.ptr() + r * in_);
        yb[r] = y[src];
      }
      loss_and_gradient(xb, yb, o.l2, grad);
      ++t;
      const double c1 = 1.0 - std::pow(b1, double(t)), c2 = 1.0 - std::pow(b2, double(t));
      for (std::size_t k = 0; k < params_.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
        v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
        params_[k] -= o.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }
}

NdArray Mlp::predict(const NdArray& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) throw ShapeError("Mlp::predict", shape_str(x.shape()));
  const std::size_t s = x.dim(0);
  const double* w1 = params_.ptr();
  const double* b1 = w1 + in_ * hidden_;
  const double* w2 = b1 + hidden_;
  NdArray out({s});
  std::vector<double> h(hidden_);
  for (std::size_t r = 0; r < s; ++r) {
    const double* xr = x.ptr() + r * in_;
    for (std::size_t j = 0; j < hidden_; ++j) h[j] = b1[j];
    for (std::size_t i = 0; i < in_; ++i)
      for (std::size_t j = 0; j < hidden_; ++j) h[j] += xr[i] * w1[i * hidden_ + j];
    double o = w2[hidden_];
    for (std::size_t j = 0; j < hidden_; ++j) o += (h[j] > 0.0 ? h[j] : 0.0) * w2[j];
    out[r] = o;
  }
  return out;
}

}  // namespace ssmdiff::bench
