// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "ssmdiff/bench/experiment.hpp"
#include "ssmdiff/check/grad_suite.hpp"
#include "ssmdiff/check/scancheck.hpp"
#include "ssmdiff/diffusion/diffusion.hpp"
#include "ssmdiff/mamba/mamba_block.hpp"
#include "ssmdiff/masking/masks.hpp"
#include "ssmdiff/model/checkpoint.hpp"
#include "ssmdiff/pipeline/impute.hpp"

namespace {

using namespace ssmdiff;
using masking::Mask;
using masking::MaskPair;
using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared between the desk-scale criteria so the model is trained once.
struct DeskState {
  bench::ExperimentConfig cfg = bench::ExperimentConfig::desk();
  std::optional<bench::Benchmark> bench;
  std::optional<model::NoiseModel> model;
  std::optional<bench::TestEvaluation> eval;
  double prepare_seconds = 0.0, train_seconds = 0.0;

  const bench::Benchmark& benchmark() {
    if (!bench) {
      const auto t0 = Clock::now();
      bench = bench::prepare_benchmark(cfg);
      prepare_seconds = since(t0);
    }
    return *bench;
  }

  const model::NoiseModel& trained() {
    if (!model) {
      const bench::Benchmark& b = benchmark();
      const auto t0 = Clock::now();
      model = bench::train_model(cfg.model, cfg.train, b, cfg.seed, nullptr,
                                 [](const pipeline::EpochStats& s) {
                                   std::printf("  epoch %2zu  loss %.4f  val %.4f  %.0fs\n",
                                               s.epoch, s.train_loss, s.val_loss, s.seconds);
                                   std::fflush(stdout);
                                 });
      train_seconds = since(t0);
    }
    return *model;
  }

  const bench::TestEvaluation& evaluation() {
    if (!eval) {
      eval = bench::evaluate_test(trained(), benchmark(), cfg.eval.samples, cfg.eval.windows,
                                  bench::impute_seed(cfg.seed));
    }
    return *eval;
  }
};

// 1 --------------------------------------------------------------------------

Outcome scan_equivalence() {
  const check::ScanCheckResult r = check::run_scan_check({});
  return {r.instances == 100 && r.max_abs_dev < 1e-9 && r.seconds < 10.0,
          fmt("%zu instances, max |dev| %.3e (< 1e-9), %.2fs (< 10s)", r.instances,
              r.max_abs_dev, r.seconds)};
}

// 2 --------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto entries = check::run_gradient_suite();
  const double secs = since(t0);
  const double worst = check::max_error(entries);
  std::string worst_name;
  for (const auto& e : entries)
    if (e.result.max_rel_error == worst) worst_name = e.name;
  return {worst < 1e-4 && secs < 300.0,
          fmt("%zu checks, worst rel err %.3e at %s (< 1e-4), %.1fs (< 300s)", entries.size(),
              worst, worst_name.c_str(), secs)};
}

// 3 --------------------------------------------------------------------------

Outcome schedule_identities() {
  const model::ModelConfig mc;
  const auto s = diffusion::quadratic_schedule(mc.diffusion_steps, mc.beta_min, mc.beta_max);
  const std::size_t T = s.steps();
  std::vector<std::string> broken;
  if (s.beta(1) != 0.0001) broken.push_back("beta_1");
  if (s.beta(T) != 0.2) broken.push_back("beta_T");
  double prod = 1.0, max_dev = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    if (t > 1 && !(s.beta(t) >= s.beta(t - 1))) broken.push_back(fmt("beta monotone at %zu", t));
    if (t > 1 && !(s.alpha_bar(t) < s.alpha_bar(t - 1))) {
      broken.push_back(fmt("alpha_bar decreasing at %zu", t));
    }
    prod *= 1.0 - s.beta(t);
    max_dev = std::max(max_dev, std::abs(prod - s.alpha_bar(t)));
  }
  if (max_dev > 1e-15) broken.push_back("alpha_bar cumulative product");
  if (!(prod < 0.01)) broken.push_back(fmt("alpha_bar_%zu = %.5f is not < 0.01", T, prod));
  std::string detail = fmt("T=%zu beta_1=%g beta_T=%g alpha_bar_T=%.5f", T, s.beta(1), s.beta(T),
                           prod);
  for (const auto& b : broken) detail += "; violated: " + b;
  return {broken.empty(), detail};
}

// 4 --------------------------------------------------------------------------

NdArray reverse_time(const NdArray& x) {
  Tape t;
  return ops::reverse(t.constant(x), x.rank() - 2).value();
}

void swap_directions(ParameterStore& store) {
  const ParameterStore copy = store;
  for (const std::string& name : store.names()) {
    std::string other = name;
    if (auto p = name.find("_fwd"); p != std::string::npos) {
      other.replace(p, 4, "_bwd");
    } else if (auto q = name.find("_bwd"); q != std::string::npos) {
      other.replace(q, 4, "_fwd");
    } else {
      continue;
    }
    store.get(name) = copy.get(other);
  }
}

Outcome bidirectional_equivariance() {
  std::size_t exact = 0;
  const std::size_t instances = 50;
  for (std::uint64_t seed = 0; seed < instances; ++seed) {
    Rng rng(1000 + seed);
    mamba::MambaConfig c;
    c.d_model = 2 + seed % 4;
    c.state = 2 + seed % 5;
    c.conv_width = 2 + seed % 3;
    c.direction = mamba::Direction::kBi;
    ParameterStore store;
    const mamba::MambaBlock block(store, "m", c, rng);
    // Directional weights must differ for the check to mean anything.
    for (const auto& n : store.names()) {
      NdArray& v = store.get(n);
      v = randn(v.shape(), rng, 0.5);
    }
    const std::size_t len = 1 + seed % 17;
    const NdArray x = randn({1 + seed % 3, len, c.d_model}, rng);
    auto run = [&](const ParameterStore& st, const NdArray& in) {
      Tape t;
      ParamBinding p(t, st, false);
      return block(p, ForwardContext{}, t.constant(in)).value();
    };
    ParameterStore swapped = store;
    swap_directions(swapped);
    if (run(swapped, reverse_time(x)) == reverse_time(run(store, x))) ++exact;
  }
  return {exact == instances, fmt("%zu/%zu instances bit-exact", exact, instances)};
}

// 5 --------------------------------------------------------------------------

double u01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

Mask random_observed(std::size_t rows, std::size_t cols, double density, Rng& rng) {
  Mask m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.set_flat(i, u01(rng) < density);
  if (m.none()) m.set_flat(0);
  return m;
}

bool valid_pair(const MaskPair& mp, const Mask& observed) {
  try {
    mp.validate();
  } catch (const masking::MaskError&) {
    return false;
  }
  const Mask cond = mp.conditioning();
  return mp.observed == observed && mp.target.subset_of(observed) && !mp.target.none() &&
         (cond & mp.target).none() && (cond | mp.target) == observed;
}

Outcome mask_statistics() {
  std::vector<std::string> broken;
  // Point fraction on 10^4-entry grids: the first draw per rate against its
  // own 3 sigma band, and 20 pooled draws against the pooled band.
  const Mask grid(100, 100, true);
  const double n = double(grid.size());
  const std::size_t draws = 20;
  std::size_t point_draws = 0, outside = 0;
  for (double r : {0.01, 0.1, 0.25, 0.5, 0.75, 0.9}) {
    double pooled = 0.0;
    for (std::uint64_t seed = 0; seed < draws; ++seed, ++point_draws) {
      Rng rng(seed);
      const double count = double(masking::mask_point(grid, rng, {r}).target.count());
      pooled += count;
      const bool in_band = std::abs(count - n * r) <= 3.0 * std::sqrt(n * r * (1 - r));
      outside += !in_band;
      if (seed == 0 && !in_band) broken.push_back(fmt("point r=%.2f count %.0f", r, count));
    }
    const double pn = n * draws;
    if (std::abs(pooled - pn * r) > 3.0 * std::sqrt(pn * r * (1 - r))) {
      broken.push_back(fmt("pooled point r=%.2f count %.0f", r, pooled));
    }
  }
  // Block lengths.
  std::size_t blocks = 0;
  for (std::size_t len : {2u, 3u, 8u, 24u, 25u}) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      masking::DrawInfo info;
      masking::BlockOptions opt;
      opt.node_probability = 0.5;
      masking::mask_block(Mask(8, len, true), rng, opt, &info);
      for (const auto& b : info.blocks) {
        ++blocks;
        if (b.length < (len + 1) / 2 || b.length > len || b.start + b.length > len) {
          broken.push_back(fmt("block length %zu for L=%zu", b.length, len));
        }
      }
    }
  }
  // Hybrid coin.
  Rng hybrid_rng(42);
  std::size_t points = 0;
  for (int i = 0; i < 1000; ++i) {
    masking::DrawInfo info;
    masking::mask_hybrid(Mask(8, 24, true), hybrid_rng, {}, nullptr, &info);
    points += info.used_point;
  }
  const double frac = points / 1000.0;
  if (std::abs(frac - 0.5) > 0.05) broken.push_back(fmt("hybrid point fraction %.3f", frac));
  // MaskPair invariants for every strategy on random observation grids.
  Rng pool_rng(9);
  std::vector<Mask> pool;
  for (int i = 0; i < 6; ++i) {
    pool.push_back(masking::simulate_failures(6, 16, {0.2, 0.3}, pool_rng));
  }
  pool.push_back(Mask(6, 16, true));
  std::size_t pairs = 0, invalid = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const Mask m = random_observed(6, 16, 0.2 + 0.75 * u01(rng), rng);
    for (auto s : {masking::Strategy::kPoint, masking::Strategy::kBlock,
                   masking::Strategy::kHistorical, masking::Strategy::kHybridBlock,
                   masking::Strategy::kHybridHistorical}) {
      ++pairs;
      try {
        if (!valid_pair(masking::sample_strategy(m, s, &pool, rng), m)) ++invalid;
      } catch (const masking::MaskError&) {
        // Retries exhausted on a very sparse grid is a clean error, not a
        // broken invariant.
      }
    }
  }
  if (invalid) broken.push_back(fmt("%zu invalid mask pairs", invalid));
  std::string detail = fmt("%zu point draws (%zu single draws outside 3 sigma, %.1f expected), "
                           "%zu blocks in range, hybrid point %.3f, %zu pairs checked",
                           point_draws, outside, 0.0027 * point_draws, blocks, frac, pairs);
  for (std::size_t k = 0; k < broken.size() && k < 5; ++k) detail += "; violated: " + broken[k];
  return {broken.empty(), detail};
}

// 6 --------------------------------------------------------------------------

Outcome imputation_contract() {
  bench::ExperimentConfig c;
  c.data.nodes = 4;
  c.data.length = 12;
  c.data.steps = 200;
  c.model.nodes = 4;
  c.model.length = 12;
  c.model.channels = 8;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.state = 4;
  c.model.step_embedding_dim = 16;
  c.model.diffusion_steps = 20;
  const bench::Benchmark b = bench::prepare_benchmark(c);
  const model::NoiseModel m(c.model, 3);
  const Mask given = b.eval.conditioning();
  pipeline::ImputeOptions opt;
  opt.samples = 5;
  opt.seed = 77;
  const auto r1 = pipeline::impute(m, b.graph.normalized, b.scaler, b.values, given, opt);
  const auto r2 = pipeline::impute(m, b.graph.normalized, b.scaler, b.values, given, opt);

  std::size_t passthrough_bad = 0;
  for (std::size_t k = 0; k < given.size(); ++k)
    if (given[k] && r1.imputed[k] != b.values[k]) ++passthrough_bad;

  const auto m1 = pipeline::compute_metrics(r1.imputed, b.values, b.eval.target);
  const auto m2 = pipeline::compute_metrics(r2.imputed, b.values, b.eval.target);
  const bool replay = r1.imputed == r2.imputed && r1.samples == r2.samples && m1.mae == m2.mae &&
                      m1.mse == m2.mse;

  // Perturb estimate and truth away from the targets.
  Rng rng(5);
  NdArray est = r1.imputed, truth = b.values;
  for (std::size_t k = 0; k < est.size(); ++k) {
    if (b.eval.target[k]) continue;
    est[k] += 10.0 * (u01(rng) - 0.5);
    truth[k] -= 10.0 * (u01(rng) - 0.5);
  }
  const auto mp = pipeline::compute_metrics(est, truth, b.eval.target);
  const bool invariant = mp.mae == m1.mae && mp.mse == m1.mse && mp.count == m1.count;

  // Hidden entries must not leak into the imputation.
  NdArray hidden = b.values;
  for (std::size_t k = 0; k < hidden.size(); ++k)
    if (!given[k]) hidden[k] = 1e6;
  const auto r3 = pipeline::impute(m, b.graph.normalized, b.scaler, hidden, given, opt);
  const bool blind = r3.imputed == r1.imputed;

  return {passthrough_bad == 0 && replay && invariant && blind,
          fmt("%zu given entries, %zu altered; seeded replay %s; non-target invariance %s; "
              "hidden-value independence %s",
              given.count(), passthrough_bad, replay ? "identical" : "DIFFERS",
              invariant ? "holds" : "BROKEN", blind ? "holds" : "BROKEN")};
}

// 7 --------------------------------------------------------------------------

Outcome desk_end_to_end(DeskState& desk) {
  desk.trained();
  const auto t0 = Clock::now();
  const bench::TestEvaluation& ev = desk.evaluation();
  const double total = desk.prepare_seconds + desk.train_seconds + since(t0);
  const double model = ev.metrics.at("model").mae, linear = ev.metrics.at("linear").mae,
               mean = ev.metrics.at("mean").mae;
  return {model < linear && model < mean && total < 3600.0,
          fmt("MAE model %.5f, linear %.5f, mean %.5f over %zu targets; train %.0fs, impute "
              "%.0fs, total %.0fs (< 3600s)",
              model, linear, mean, ev.target.count(), desk.train_seconds,
              ev.seconds.at("model"), total)};
}

// 8 --------------------------------------------------------------------------

Outcome ablation_direction(DeskState& desk) {
  const auto r = bench::run_ablation(desk.cfg, desk.benchmark(), [](const bench::AblationRow& row) {
    std::printf("  seed %llu  %-3s MAE %.5f  train %.0fs\n", (unsigned long long)row.seed,
                row.direction.c_str(), row.metrics.mae, row.train_seconds);
    std::fflush(stdout);
  });
  std::ostringstream os;
  os << "bi <= uni in " << r.bi_wins << "/" << desk.cfg.ablation.seeds << " seeds (need >= 2)";
  return {r.bi_wins >= 2, os.str()};
}

// 9 --------------------------------------------------------------------------

Outcome sensitivity_trend(DeskState& desk) {
  const auto r = bench::run_sensitivity(desk.trained(), desk.benchmark(), desk.cfg.sensitivity,
                                        bench::impute_seed(desk.cfg.seed));
  std::string curve;
  for (const auto& row : r.rows) curve += fmt(" %.0f%%:%.4f", 100 * row.rate, row.metrics.mae);
  return {r.trend_holds(),
          fmt("%zu inversions, largest drop %.2f%% of mean MAE;", r.inversions,
              100 * r.largest_drop) +
              curve};
}

// 10 -------------------------------------------------------------------------

Outcome downstream_oracle(DeskState& desk) {
  const bench::Benchmark& b = desk.benchmark();
  const bench::TestEvaluation ev =
      bench::evaluate_range(desk.trained(), b, b.splits.train_end, b.values.dim(1),
                            desk.cfg.eval.samples, bench::impute_seed(desk.cfg.seed));
  std::map<std::string, NdArray> series = ev.imputed;
  series["oracle"] = ev.truth;
  const auto nodes = bench::degree_extremes(b.graph.adjacency);
  const auto r = bench::run_downstream(series, ev.truth, ev.given, nodes, desk.cfg.downstream);
  const double cells = double(r.rows.size() / series.size());
  std::map<std::string, double> avg;
  std::map<std::pair<std::size_t, std::uint64_t>, double> oracle;
  for (const auto& row : r.rows) {
    avg[row.imputer] += row.metrics.mse / cells;
    if (row.imputer == "oracle") oracle[{row.node, row.seed}] = row.metrics.mse;
  }
  std::string detail = fmt("columns %zu..%zu, nodes %zu/%zu, %zu seeds, hidden %zu, epochs %zu; "
                           "mean MSE",
                           ev.begin, ev.end, nodes[0], nodes[1], desk.cfg.downstream.seeds,
                           desk.cfg.downstream.mlp.hidden, desk.cfg.downstream.mlp.epochs);
  for (const auto& [k, v] : avg) detail += fmt(" %s %.5f", k.c_str(), v);
  for (const auto& row : r.rows) {
    const double o = oracle.at({row.node, row.seed});
    if (row.imputer != "oracle" && row.metrics.mse < o) {
      detail += fmt("; node %zu seed %llu: %s %.5f < oracle %.5f", row.node,
                    (unsigned long long)row.seed, row.imputer.c_str(), row.metrics.mse, o);
    }
  }
  return {r.oracle_best(), detail};
}

// 11 -------------------------------------------------------------------------

Outcome checkpoint_round_trip(DeskState& desk, bool use_trained) {
  const model::NoiseModel fresh(desk.cfg.model, 5);
  const model::NoiseModel& m = use_trained ? desk.trained() : fresh;
  const auto path = std::filesystem::temp_directory_path() /
                    ("ssmdiff_accept_" + std::to_string(::getpid()) + ".ckpt");
  model::save_checkpoint(m, path);
  const model::NoiseModel loaded = model::load_checkpoint(path);
  std::filesystem::remove(path);

  const model::ModelConfig& c = m.config();
  Rng rng(11);
  model::NoiseInput in;
  const Shape s{2, c.nodes, c.length};
  in.noisy = randn(s, rng);
  in.interp = randn(s, rng);
  in.cond_mask = NdArray(s);
  for (double& v : in.cond_mask.data()) v = u01(rng) < 0.7;
  in.steps = {1, c.diffusion_steps};
  const NdArray& a_hat = desk.benchmark().graph.normalized;
  const NdArray e1 = m.predict(in, a_hat), e2 = loaded.predict(in, a_hat);
  bool params_equal = true;
  for (const auto& n : m.params().names()) params_equal &= loaded.params().get(n) == m.params().get(n);
  return {params_equal && e1 == e2,
          fmt("%s model, %zu tensors %s, eps_hat %s", use_trained ? "trained" : "initial",
              m.params().names().size(), params_equal ? "identical" : "DIFFER",
              e1 == e2 ? "bit-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssmdiff acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected =
      only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}
                   : std::set<int>(only.begin(), only.end());

  DeskState desk;
  const bool desk_selected = selected.count(7) || selected.count(9) || selected.count(10);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"scan equivalence", scan_equivalence},
      {"gradient suite", gradient_suite},
      {"schedule identities", schedule_identities},
      {"bidirectional equivariance", bidirectional_equivariance},
      {"mask statistics", mask_statistics},
      {"imputation contract", imputation_contract},
      {"desk-scale end-to-end", [&] { return desk_end_to_end(desk); }},
      {"ablation direction", [&] { return ablation_direction(desk); }},
      {"sensitivity trend", [&] { return sensitivity_trend(desk); }},
      {"downstream oracle", [&] { return downstream_oracle(desk); }},
      {"checkpoint round trip", [&] { return checkpoint_round_trip(desk, desk_selected); }},
  };

  std::vector<std::string> lines;
  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!selected.count(id)) continue;
    std::printf("-- criterion %d: %s\n", id, criteria[k].first.c_str());
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all &= o.pass;
    lines.push_back(fmt("%s criterion %2d %-27s %s [%.1fs]", o.pass ? "PASS" : "FAIL", id,
                        criteria[k].first.c_str(), o.detail.c_str(), since(t0)));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\n== summary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  return all ? 0 : 1;
}
