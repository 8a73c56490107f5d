// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/pipeline/impute.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "ssmdiff/diffusion/diffusion.hpp"

namespace ssmdiff::pipeline {

ErrorMetrics compute_metrics(const NdArray& estimate, const NdArray& truth,
                             const masking::Mask& target) {
  if (estimate.shape() != truth.shape() || estimate.rank() != 2 ||
      estimate.dim(0) != target.rows() || estimate.dim(1) != target.cols()) {
    throw ShapeError("compute_metrics", shape_str(estimate.shape()) + " vs " +
                                            shape_str(truth.shape()) + " with a " +
                                            shape_str({target.rows(), target.cols()}) + " mask");
  }
  ErrorMetrics m;
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    if (!target[k]) continue;
    const double d = estimate[k] - truth[k];
    m.mae += std::abs(d);
    m.mse += d * d;
    ++m.count;
  }
  if (m.count == 0) throw std::invalid_argument("compute_metrics: no target entries");
  m.mae /= double(m.count);
  m.mse /= double(m.count);
  return m;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const std::size_t n = values.size(), mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (n % 2) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

ImputationResult impute(const model::NoiseModel& model, const NdArray& a_hat,
                        const Scaler& scaler, const NdArray& values,
                        const masking::Mask& given, const ImputeOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  if (options.samples < 1) throw std::invalid_argument("impute: need at least one sample");
  const model::ModelConfig& mc = model.config();
  const std::size_t N = mc.nodes, L = mc.length, K = options.samples;
  if (values.rank() != 2 || values.dim(0) != N || given.rows() != N ||
      given.cols() != values.dim(1)) {
    throw ShapeError("impute", "values " + shape_str(values.shape()) + ", mask " +
                                   shape_str({given.rows(), given.cols()}) + ", model nodes " +
                                   std::to_string(N));
  }
  const std::size_t T = values.dim(1);
  const auto schedule = diffusion::quadratic_schedule(mc.diffusion_steps, mc.beta_min, mc.beta_max);
  const NdArray scaled = scaler.transform(values);
  const NdArray cond_full = given.to_array();

  ImputationResult out;
  out.seed = options.seed;
  out.samples = NdArray({K, N, T});
  std::vector<bool> written(T, false);
  const std::vector<std::size_t> starts = window_starts(T, L);

  Tape tape;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const std::size_t s0 = starts[w];
    const NdArray x = gather_windows(scaled, {s0}, L);     // [1, N, L]
    const NdArray m = gather_windows(cond_full, {s0}, L);  // [1, N, L]
    NdArray given_x(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) given_x[k] = x[k] * m[k];
    const NdArray interp = linear_interpolate(given_x, m).series;

    NdArray prior;
    {
      tape.clear();
      ParamBinding p(tape, model.params(), /*trainable=*/false);
      prior = model.prior(p, ForwardContext{}, tape.constant(interp), tape.constant(a_hat)).value();
    }

    model::NoiseInput in;
    in.interp = NdArray({K, N, L});
    in.cond_mask = NdArray({K, N, L});
    for (std::size_t k = 0; k < K; ++k) {
      std::copy(interp.ptr(), interp.ptr() + N * L, in.interp.ptr() + k * N * L);
      std::copy(m.ptr(), m.ptr() + N * L, in.cond_mask.ptr() + k * N * L);
    }
    std::vector<Rng> chains;
    chains.reserve(K);
    for (std::size_t k = 0; k < K; ++k) chains.emplace_back(derive_seed(options.seed, w * K + k));
    auto draw = [&](NdArray& dst) {
      for (std::size_t k = 0; k < K; ++k) {
        const NdArray z = randn({N, L}, chains[k]);
        std::copy(z.ptr(), z.ptr() + N * L, dst.ptr() + k * N * L);
      }
    };
    NdArray xt({K, N, L}), z({K, N, L});
    draw(xt);
    for (std::size_t t = mc.diffusion_steps; t >= 1; --t) {
      in.noisy = xt;
      in.steps.assign(K, t);
      tape.clear();
      ParamBinding p(tape, model.params(), /*trainable=*/false);
      const NdArray eps_hat =
          model.forward(p, ForwardContext{}, in, a_hat, tape.constant(prior)).value();
      if (t > 1) draw(z);
      xt = diffusion::reverse_step(xt, eps_hat, t, schedule, z);
    }
    const NdArray raw = scaler.inverse(xt);
    for (std::size_t tt = 0; tt < L; ++tt) {
      const std::size_t col = s0 + tt;
      if (written[col]) continue;
      written[col] = true;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < N; ++i)
          out.samples.at({k, i, col}) = raw.at({k, i, tt});
    }
  }

  out.imputed = NdArray({N, T});
  std::vector<double> draws(K);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t t = 0; t < T; ++t) {
      if (given(i, t)) {
        out.imputed.at({i, t}) = values.at({i, t});
        continue;
      }
      for (std::size_t k = 0; k < K; ++k) draws[k] = out.samples.at({k, i, t});
      out.imputed.at({i, t}) = median(draws);
    }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<double> node_means(const NdArray& values, const masking::Mask& observed) {
  const std::size_t n = values.dim(0), len = values.dim(1);
  std::vector<double> means(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < len; ++t)
      if (observed(i, t)) {
        sum += values.at({i, t});
        ++count;
      }
    means[i] = count ? sum / double(count) : 0.0;
  }
  return means;
}

NdArray mean_baseline(const std::vector<double>& means, const NdArray& values,
                      const masking::Mask& given) {
  if (means.size() != values.dim(0)) throw ShapeError("mean_baseline", "one mean per node");
  NdArray out = values;
  for (std::size_t i = 0; i < values.dim(0); ++i)
    for (std::size_t t = 0; t < values.dim(1); ++t)
      if (!given(i, t)) out.at({i, t}) = means[i];
  return out;
}

NdArray linear_baseline(const NdArray& values, const masking::Mask& given) {
  NdArray masked = values;
  for (std::size_t k = 0; k < masked.size(); ++k)
    if (!given[k]) masked[k] = 0.0;
  return linear_interpolate(masked, given).series;
}

Json metrics_record(const std::string& scenario, const std::string& method, std::uint64_t seed,
                    const ErrorMetrics& metrics, double seconds, const Json& extra) {
  Json j{{"scenario", scenario}, {"method", method},       {"seed", seed},
         {"mae", metrics.mae},   {"mse", metrics.mse},     {"targets", metrics.count},
         {"seconds", seconds}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

void append_jsonl(const std::filesystem::path& path, const Json& record) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to " + path.string());
  os << record.dump() << '\n';
}

}  // namespace ssmdiff::pipeline
