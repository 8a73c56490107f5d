// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/bench/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#ifndef SSMDIFF_GIT_DESCRIBE
#define SSMDIFF_GIT_DESCRIBE "unknown"
#endif

namespace ssmdiff::bench {

namespace {

using Clock = std::chrono::steady_clock;
using masking::Mask;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::uint64_t kInitStream = 10, kTrainStream = 11, kEvalStream = 12,
                        kImputeStream = 13, kAblationStream = 100, kSensitivityStream = 200;

NdArray columns(const NdArray& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.dim(0), t = x.dim(1), len = end - begin;
  NdArray out({n, len});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.ptr() + i * t + begin, x.ptr() + i * t + end, out.ptr() + i * len);
  return out;
}

Mask columns(const Mask& m, std::size_t begin, std::size_t end) {
  Mask out(m.rows(), end - begin);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t t = begin; t < end; ++t) out.set(i, t - begin, m(i, t));
  return out;
}

NdArray zero_outside(NdArray x, const Mask& keep) {
  for (std::size_t k = 0; k < x.size(); ++k)
    if (!keep[k]) x[k] = 0.0;
  return x;
}

void check_rate(double r, const std::string& key) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError(key + " must be in [0, 1)");
}

}  // namespace

ExperimentConfig ExperimentConfig::desk() { return ExperimentConfig{}; }

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  train.validate();
  if (data.nodes != model.nodes) throw ConfigError("data.nodes and model.nodes differ");
  if (data.length != model.length) throw ConfigError("data.length and model.length differ");
  masking::parse_scenario(eval.scenario);
  check_rate(eval.missing_rate, "eval.missing_rate");
  if (!(eval.steps_per_hour > 0.0)) throw ConfigError("eval.steps_per_hour must be positive");
  if (!(eval.train_fraction > 0.0 && eval.val_fraction >= 0.0 &&
        eval.train_fraction + eval.val_fraction < 1.0)) {
    throw ConfigError("eval.train_fraction and eval.val_fraction must leave a test split");
  }
  if (eval.samples == 0 || ablation.samples == 0 || sensitivity.samples == 0) {
    throw ConfigError("sample counts must be positive");
  }
  if (ablation.seeds == 0 || ablation.windows_per_epoch == 0) {
    throw ConfigError("ablation.seeds and ablation.windows_per_epoch must be positive");
  }
  for (double r : sensitivity.rates) check_rate(r, "sensitivity.rates");
  if (downstream.seeds == 0) throw ConfigError("downstream.seeds must be positive");
  if (!(downstream.train_fraction > 0.0 && downstream.train_fraction < 1.0)) {
    throw ConfigError("downstream.train_fraction must be in (0, 1)");
  }
  if (downstream.mlp.hidden == 0 || downstream.mlp.batch_size == 0 ||
      !(downstream.mlp.learning_rate > 0.0) || !(downstream.mlp.l2 >= 0.0)) {
    throw ConfigError("downstream MLP settings out of range");
  }
}

Json ExperimentConfig::to_json() const {
  return Json{
      {"seed", seed},
      {"data", data.to_json()},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"eval",
       {{"scenario", eval.scenario},
        {"missing_rate", eval.missing_rate},
        {"steps_per_hour", eval.steps_per_hour},
        {"train_fraction", eval.train_fraction},
        {"val_fraction", eval.val_fraction},
        {"samples", eval.samples},
        {"windows", eval.windows}}},
      {"ablation",
       {{"seeds", ablation.seeds},
        {"epochs", ablation.epochs},
        {"windows_per_epoch", ablation.windows_per_epoch},
        {"samples", ablation.samples},
        {"windows", ablation.windows}}},
      {"sensitivity",
       {{"rates", sensitivity.rates},
        {"samples", sensitivity.samples},
        {"windows", sensitivity.windows}}},
      {"downstream",
       {{"seeds", downstream.seeds},
        {"train_fraction", downstream.train_fraction},
        {"hidden", downstream.mlp.hidden},
        {"epochs", downstream.mlp.epochs},
        {"batch_size", downstream.mlp.batch_size},
        {"learning_rate", downstream.mlp.learning_rate},
        {"l2", downstream.mlp.l2}}}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  ExperimentConfig c;
  FieldReader root(j, "root");
  root.read("seed", c.seed);
  const Json& data = root.child("data");
  const Json& model = root.child("model");
  const Json& train = root.child("train");
  const Json& eval = root.child("eval");
  const Json& ablation = root.child("ablation");
  const Json& sensitivity = root.child("sensitivity");
  const Json& downstream = root.child("downstream");
  root.finish();

  c.data = SyntheticSpec::from_json(data);
  c.model = model::ModelConfig::from_json(model);
  c.train = pipeline::TrainConfig::from_json(train);

  FieldReader e(eval, "eval");
  e.read("scenario", c.eval.scenario)
      .read("missing_rate", c.eval.missing_rate)
      .read("steps_per_hour", c.eval.steps_per_hour)
      .read("train_fraction", c.eval.train_fraction)
      .read("val_fraction", c.eval.val_fraction)
      .read("samples", c.eval.samples)
      .read("windows", c.eval.windows);
  e.finish();

  FieldReader a(ablation, "ablation");
  a.read("seeds", c.ablation.seeds)
      .read("epochs", c.ablation.epochs)
      .read("windows_per_epoch", c.ablation.windows_per_epoch)
      .read("samples", c.ablation.samples)
      .read("windows", c.ablation.windows);
  a.finish();

  FieldReader s(sensitivity, "sensitivity");
  s.read("rates", c.sensitivity.rates)
      .read("samples", c.sensitivity.samples)
      .read("windows", c.sensitivity.windows);
  s.finish();

  FieldReader d(downstream, "downstream");
  d.read("seeds", c.downstream.seeds)
      .read("train_fraction", c.downstream.train_fraction)
      .read("hidden", c.downstream.mlp.hidden)
      .read("epochs", c.downstream.mlp.epochs)
      .read("batch_size", c.downstream.mlp.batch_size)
      .read("learning_rate", c.downstream.mlp.learning_rate)
      .read("l2", c.downstream.mlp.l2);
  d.finish();

  try {
    c.validate();
  } catch (const masking::MaskError& err) {
    throw ConfigError(std::string("eval.scenario: ") + err.what());
  }
  return c;
}

std::uint64_t init_seed(std::uint64_t root) { return derive_seed(root, kInitStream); }
std::uint64_t train_seed(std::uint64_t root) { return derive_seed(root, kTrainStream); }
std::uint64_t impute_seed(std::uint64_t root) { return derive_seed(root, kImputeStream); }

Benchmark prepare_benchmark(const ExperimentConfig& config) {
  SyntheticData syn = generate_synthetic(config.data);
  const std::size_t n = syn.values.dim(0), t = syn.values.dim(1);
  return prepare_benchmark(config, std::move(syn.values), Mask(n, t, true), std::move(syn.graph));
}

Benchmark prepare_benchmark(const ExperimentConfig& config, NdArray values, Mask available,
                            graph::GraphSpec graph) {
  const std::size_t n = values.dim(0), total = values.dim(1), len = config.model.length;
  if (n != config.model.nodes || graph.nodes != n) {
    throw pipeline::DataError("series has " + std::to_string(n) + " nodes, graph " +
                              std::to_string(graph.nodes) + ", model " +
                              std::to_string(config.model.nodes));
  }
  if (available.rows() != n || available.cols() != total) {
    throw pipeline::DataError("availability mask does not match the series");
  }
  Benchmark b;
  b.splits = pipeline::split_horizon(total, config.eval.train_fraction, config.eval.val_fraction);
  if (b.splits.train_end < len || total - b.splits.val_end < len) {
    throw pipeline::DataError("training and test splits need at least one window of " +
                              std::to_string(len) + " steps; horizon is " +
                              std::to_string(total));
  }
  masking::ScenarioParams params;
  params.point_rate = config.eval.missing_rate;
  params.steps_per_hour = config.eval.steps_per_hour;
  Rng rng(derive_seed(config.seed, kEvalStream));
  b.eval = masking::scenario_masks(masking::parse_scenario(config.eval.scenario), n, total, params,
                                   rng, &available);
  const Mask cond = b.eval.conditioning();

  const std::size_t te = b.splits.train_end, ve = b.splits.val_end;
  const Mask train_cond = columns(cond, 0, te);
  b.scaler = pipeline::Scaler::fit(columns(values, 0, te), train_cond);
  b.train_data.train = zero_outside(b.scaler.transform(columns(values, 0, te)), train_cond);
  b.train_data.train_observed = train_cond;
  if (ve > te) {
    const Mask val_cond = columns(cond, te, ve);
    b.train_data.val = zero_outside(b.scaler.transform(columns(values, te, ve)), val_cond);
    b.train_data.val_observed = val_cond;
  }
  b.train_data.a_hat = graph.normalized;
  b.values = std::move(values);
  b.available = std::move(available);
  b.graph = std::move(graph);
  return b;
}

model::NoiseModel train_model(const model::ModelConfig& mc, const pipeline::TrainConfig& tc,
                              const Benchmark& bench, std::uint64_t root,
                              pipeline::TrainResult* result,
                              const std::function<void(const pipeline::EpochStats&)>& on_epoch) {
  model::NoiseModel m(mc, init_seed(root));
  pipeline::TrainResult r = pipeline::train(m, bench.train_data, tc, train_seed(root), on_epoch);
  if (result) *result = std::move(r);
  return m;
}

namespace {

std::pair<std::size_t, std::size_t> test_range(const Benchmark& bench, std::size_t length,
                                               std::size_t windows) {
  const std::size_t begin = bench.test_begin(), total = bench.values.dim(1);
  std::size_t end = total;
  if (windows > 0) end = std::min(total, begin + windows * length);
  return {begin, end};
}

}  // namespace

TestEvaluation evaluate_test(const model::NoiseModel& model, const Benchmark& bench,
                             std::size_t samples, std::size_t windows, std::uint64_t seed) {
  const auto [begin, end] = test_range(bench, model.config().length, windows);
  return evaluate_range(model, bench, begin, end, samples, seed);
}

TestEvaluation evaluate_range(const model::NoiseModel& model, const Benchmark& bench,
                              std::size_t begin, std::size_t end, std::size_t samples,
                              std::uint64_t seed) {
  if (begin >= end || end > bench.values.dim(1)) {
    throw std::invalid_argument("evaluate_range: bad column range");
  }
  TestEvaluation ev;
  ev.begin = begin;
  ev.end = end;
  ev.truth = columns(bench.values, ev.begin, ev.end);
  ev.given = columns(bench.eval.conditioning(), ev.begin, ev.end);
  ev.target = columns(bench.eval.target, ev.begin, ev.end);
  const NdArray visible = zero_outside(ev.truth, ev.given);

  auto t0 = Clock::now();
  const pipeline::ImputationResult r = pipeline::impute(model, bench.graph.normalized, bench.scaler,
                                                        visible, ev.given, {samples, seed});
  ev.imputed["model"] = r.imputed;
  ev.seconds["model"] = since(t0);

  t0 = Clock::now();
  const std::size_t te = bench.splits.train_end;
  const auto means = pipeline::node_means(columns(bench.values, 0, te),
                                          columns(bench.eval.conditioning(), 0, te));
  ev.imputed["mean"] = pipeline::mean_baseline(means, visible, ev.given);
  ev.seconds["mean"] = since(t0);

  t0 = Clock::now();
  ev.imputed["linear"] = pipeline::linear_baseline(visible, ev.given);
  ev.seconds["linear"] = since(t0);

  for (const auto& [name, x] : ev.imputed)
    ev.metrics[name] = pipeline::compute_metrics(x, ev.truth, ev.target);
  return ev;
}

AblationResult run_ablation(const ExperimentConfig& config, const Benchmark& bench,
                            const std::function<void(const AblationRow&)>& on_row) {
  AblationResult out;
  pipeline::TrainConfig tc = config.train;
  tc.epochs = config.ablation.epochs;
  tc.windows_per_epoch = config.ablation.windows_per_epoch;
  for (std::size_t s = 0; s < config.ablation.seeds; ++s) {
    const std::uint64_t root = derive_seed(config.seed, kAblationStream + s);
    double mae[2] = {0.0, 0.0};
    int k = 0;
    for (auto dir : {mamba::Direction::kUni, mamba::Direction::kBi}) {
      model::ModelConfig mc = config.model;
      mc.direction = dir;
      AblationRow row;
      row.seed = root;
      row.direction = dir == mamba::Direction::kBi ? "bi" : "uni";
      auto t0 = Clock::now();
      const model::NoiseModel m = train_model(mc, tc, bench, root);
      row.train_seconds = since(t0);
      t0 = Clock::now();
      const TestEvaluation ev = evaluate_test(m, bench, config.ablation.samples,
                                              config.ablation.windows, impute_seed(root));
      row.impute_seconds = since(t0);
      row.metrics = ev.metrics.at("model");
      mae[k++] = row.metrics.mae;
      out.rows.push_back(row);
      if (on_row) on_row(row);
    }
    if (mae[1] <= mae[0]) ++out.bi_wins;
  }
  return out;
}

SensitivityResult run_sensitivity(const model::NoiseModel& model, const Benchmark& bench,
                                  const SensitivityConfig& config, std::uint64_t seed,
                                  const std::function<void(const SensitivityRow&)>& on_row) {
  const std::size_t len = model.config().length;
  const auto [begin, end] = test_range(bench, len, config.windows);
  const NdArray truth = columns(bench.values, begin, end);
  const Mask available = columns(bench.available, begin, end);
  Rng rng(derive_seed(seed, kSensitivityStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(truth.size());
  for (double& x : u) x = unit(rng);

  SensitivityResult out;
  for (double rate : config.rates) {
    Mask target(truth.dim(0), truth.dim(1));
    for (std::size_t k = 0; k < u.size(); ++k) target.set_flat(k, available[k] && u[k] < rate);
    if (target.none()) {
      throw std::invalid_argument("missing rate " + std::to_string(rate) +
                                  " leaves no target entries");
    }
    const Mask given = available.minus(target);
    const auto t0 = Clock::now();
    const auto r = pipeline::impute(model, bench.graph.normalized, bench.scaler,
                                    zero_outside(truth, given), given, {config.samples, seed});
    SensitivityRow row{rate, pipeline::compute_metrics(r.imputed, truth, target), since(t0)};
    out.rows.push_back(row);
    if (on_row) on_row(row);
  }
  double sum = 0.0;
  for (const auto& r : out.rows) sum += r.metrics.mae;
  out.mean_mae = out.rows.empty() ? 0.0 : sum / double(out.rows.size());
  for (std::size_t k = 1; k < out.rows.size(); ++k) {
    const double drop = out.rows[k - 1].metrics.mae - out.rows[k].metrics.mae;
    if (drop > 0.0) {
      ++out.inversions;
      out.largest_drop = std::max(out.largest_drop, drop / out.mean_mae);
    }
  }
  return out;
}

bool DownstreamResult::oracle_best() const {
  bool any = false;
  for (const auto& o : rows) {
    if (o.imputer != "oracle") continue;
    any = true;
    for (const auto& r : rows) {
      if (r.node == o.node && r.seed == o.seed && r.imputer != "oracle" &&
          r.metrics.mse < o.metrics.mse) {
        return false;
      }
    }
  }
  return any;
}

std::vector<std::size_t> degree_extremes(const NdArray& adjacency) {
  const std::vector<double> deg = graph::degrees(adjacency);
  const auto hi = std::max_element(deg.begin(), deg.end()) - deg.begin();
  const auto lo = std::min_element(deg.begin(), deg.end()) - deg.begin();
  return {std::size_t(hi), std::size_t(lo)};
}

DownstreamResult run_downstream(const std::map<std::string, NdArray>& series,
                                const NdArray& truth, const Mask& given,
                                const std::vector<std::size_t>& nodes,
                                const DownstreamConfig& config) {
  const std::size_t n = truth.dim(0), steps = truth.dim(1);
  if (n < 2) throw std::invalid_argument("downstream regression needs at least two nodes");
  const std::size_t n_train = static_cast<std::size_t>(std::floor(config.train_fraction * steps));
  if (n_train < 2 || n_train >= steps) {
    throw std::invalid_argument("downstream split leaves an empty side");
  }
  DownstreamResult out;
  out.nodes = nodes;
  for (std::size_t v : nodes) {
    if (v >= n) throw std::out_of_range("downstream node " + std::to_string(v));
    std::vector<std::size_t> test_rows;
    for (std::size_t t = n_train; t < steps; ++t)
      if (given(v, t)) test_rows.push_back(t);
    if (test_rows.empty()) {
      throw std::invalid_argument("node " + std::to_string(v) + " has no given test values");
    }
    for (const auto& [name, x] : series) {
      if (x.shape() != truth.shape()) throw ShapeError("run_downstream", name);
      // Features are the other nodes; min-max bounds from the training rows.
      const std::size_t f = n - 1;
      std::vector<double> lo(n, std::numeric_limits<double>::infinity()),
          hi(n, -std::numeric_limits<double>::infinity());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < n_train; ++t) {
          lo[i] = std::min(lo[i], x.at({i, t}));
          hi[i] = std::max(hi[i], x.at({i, t}));
        }
      auto scaled = [&](std::size_t i, double val) {
        const double range = hi[i] - lo[i];
        return range > 0.0 ? (val - lo[i]) / range : val - lo[i];
      };
      NdArray xtr({n_train, f}), ytr({n_train}), xte({test_rows.size(), f});
      for (std::size_t t = 0; t < n_train; ++t) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (i != v) xtr.at({t, c++}) = scaled(i, x.at({i, t}));
        ytr[t] = scaled(v, x.at({v, t}));
      }
      for (std::size_t r = 0; r < test_rows.size(); ++r) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (i != v) xte.at({r, c++}) = scaled(i, x.at({i, test_rows[r]}));
      }
      const double range = hi[v] - lo[v] > 0.0 ? hi[v] - lo[v] : 1.0;
      for (std::size_t s = 0; s < config.seeds; ++s) {
        Mlp mlp(f, config.mlp.hidden, derive_seed(s, 1));
        mlp.fit(xtr, ytr, config.mlp, derive_seed(s, 2));
        const NdArray pred = mlp.predict(xte);
        DownstreamRow row{name, v, s, {}};
        for (std::size_t r = 0; r < test_rows.size(); ++r) {
          const double d = pred[r] * range + lo[v] - truth.at({v, test_rows[r]});
          row.metrics.mae += std::abs(d);
          row.metrics.mse += d * d;
        }
        row.metrics.count = test_rows.size();
        row.metrics.mae /= double(test_rows.size());
        row.metrics.mse /= double(test_rows.size());
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

std::string git_describe() { return SSMDIFF_GIT_DESCRIBE; }

}  // namespace ssmdiff::bench
