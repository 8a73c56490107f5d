// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/bench/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "ssmdiff/autodiff/random.hpp"

namespace ssmdiff::bench {

namespace {
constexpr std::uint64_t kLayoutStream = 1, kPhaseStream = 2, kOffsetStream = 3, kNoiseStream = 4;
}

void SyntheticSpec::validate() const {
  if (nodes < 2) throw ConfigError("data.nodes must be at least 2");
  if (steps < length || length == 0) throw ConfigError("data.steps must hold one window");
  if (frequencies.empty() || frequencies.size() != amplitudes.size()) {
    throw ConfigError("data.frequencies and data.amplitudes must be non-empty and equally long");
  }
  if (!(coupling >= 0.0 && coupling <= 1.0)) throw ConfigError("data.coupling must be in [0, 1]");
  if (!(noise >= 0.0)) throw ConfigError("data.noise must be >= 0");
  if (!(offset_scale >= 0.0)) throw ConfigError("data.offset_scale must be >= 0");
  if (!(length_scale > 0.0)) throw ConfigError("data.length_scale must be positive");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("data.threshold must be in (0, 1]");
  if (!coords.empty() && coords.size() != nodes) {
    throw ConfigError("data.coords needs one point per node");
  }
}

Json SyntheticSpec::to_json() const {
  return Json{{"nodes", nodes},
              {"length", length},
              {"steps", steps},
              {"frequencies", frequencies},
              {"amplitudes", amplitudes},
              {"coupling", coupling},
              {"offset_scale", offset_scale},
              {"noise", noise},
              {"length_scale", length_scale},
              {"threshold", threshold},
              {"coords", coords},
              {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const Json& j) {
  SyntheticSpec s;
  FieldReader r(j, "data");
  r.read("nodes", s.nodes)
      .read("length", s.length)
      .read("steps", s.steps)
      .read("frequencies", s.frequencies)
      .read("amplitudes", s.amplitudes)
      .read("coupling", s.coupling)
      .read("offset_scale", s.offset_scale)
      .read("noise", s.noise)
      .read("length_scale", s.length_scale)
      .read("threshold", s.threshold)
      .read("coords", s.coords)
      .read("seed", s.seed);
  r.finish();
  s.validate();
  return s;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const double two_pi = 2.0 * std::numbers::pi;
  const std::size_t n = spec.nodes;
  SyntheticData out;

  Rng layout(derive_seed(spec.seed, kLayoutStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<graph::Point> coords = spec.coords;
  if (coords.empty()) {
    coords.resize(n);
    for (auto& p : coords) {
      p[0] = unit(layout);
      p[1] = unit(layout);
    }
  }
  out.graph = graph::build_adjacency(coords, spec.length_scale, spec.threshold);

  Rng phase_rng(derive_seed(spec.seed, kPhaseStream));
  std::vector<double> phi(spec.frequencies.size());
  for (double& p : phi) p = two_pi * unit(phase_rng);

  Rng offset_rng(derive_seed(spec.seed, kOffsetStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  out.offsets.resize(n);
  out.phases.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.offsets[i] = spec.offset_scale * normal(offset_rng);
    out.phases[i] = two_pi * 0.5 * (coords[i][0] + coords[i][1]);
  }

  Rng noise_rng(derive_seed(spec.seed, kNoiseStream));
  out.values = NdArray({n, spec.steps});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < spec.steps; ++t) {
      double v = out.offsets[i];
      for (std::size_t f = 0; f < spec.frequencies.size(); ++f) {
        v += spec.amplitudes[f] * std::sin(two_pi * spec.frequencies[f] * double(t) + phi[f] +
                                           spec.coupling * out.phases[i]);
      }
      out.values.at({i, t}) = v;
    }
  if (spec.noise > 0.0) {
    for (double& v : out.values.data()) v += spec.noise * normal(noise_rng);
  }
  return out;
}

}  // namespace ssmdiff::bench
