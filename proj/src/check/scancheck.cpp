// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/check/scancheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "ssmdiff/autodiff/random.hpp"
#include "ssmdiff/ssm/selective_scan.hpp"

namespace ssmdiff::check {

ScanCheckResult run_scan_check(const ScanCheckOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  ScanCheckResult result;
  std::uniform_real_distribution<double> log_a(0.0, std::log(double(o.state)));
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1.0));
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < o.instances; ++i) {
    Rng rng(derive_seed(o.seed, i));
    const std::size_t L = o.lengths[i % o.lengths.size()];
    const std::size_t D = o.channels, n = o.state, R = o.rows;
    std::vector<double> a_bar(R * L * D * n), bx(R * L * D * n),
        c(R * L * n), x(R * L * D), d_skip(D);
    for (std::size_t k = 0; k < a_bar.size(); ++k) {
      const double a = -std::exp(log_a(rng));
      const double dt = std::exp(log_dt(rng));
      const auto s = ssm::discretize_bilinear(a, normal(rng), dt);
      a_bar[k] = s.a_bar;
      bx[k] = s.b_bar * normal(rng);
    }
    for (double& v : c) v = normal(rng);
    for (double& v : x) v = normal(rng);
    for (double& v : d_skip) v = normal(rng);
    const ssm::DiscretizedSequence seq{R, L, D, n, a_bar, bx, c, x, d_skip};
    const auto ref = ssm::scan_sequential(seq);
    const auto par = ssm::scan_parallel(seq, o.chunk);
    for (std::size_t k = 0; k < ref.y.size(); ++k)
      result.max_abs_dev = std::max(result.max_abs_dev, std::abs(ref.y[k] - par.y[k]));
    for (std::size_t k = 0; k < ref.h.size(); ++k)
      result.max_abs_dev = std::max(result.max_abs_dev, std::abs(ref.h[k] - par.h[k]));
    ++result.instances;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ssmdiff::check
