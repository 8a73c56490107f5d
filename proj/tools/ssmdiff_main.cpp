// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: data generation, training, imputation and the
// study harnesses. Exit codes: 0 success, 1 usage or configuration error,
// 2 runtime failure (including a failed check).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssmdiff/bench/artifacts.hpp"
#include "ssmdiff/bench/experiment.hpp"
#include "ssmdiff/check/grad_suite.hpp"
#include "ssmdiff/check/scancheck.hpp"
#include "ssmdiff/model/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace ssmdiff;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "ssmdiff_out";
  std::string data, adjacency, checkpoint, scaler;
  std::size_t samples = 0;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bench::ExperimentConfig load_config(const Options& o) {
  bench::ExperimentConfig cfg = bench::ExperimentConfig::desk();
  if (!o.config.empty()) cfg = bench::ExperimentConfig::from_json(bench::read_json(o.config));
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

// Fills `run` with the config snapshot and creates the output directory.
bench::Manifest start(const std::string& command, const bench::ExperimentConfig& cfg,
                      const Options& o) {
  fs::create_directories(o.out);
  bench::Manifest m;
  m.command = command;
  m.seed = cfg.seed;
  m.config = cfg.to_json();
  if (!o.config.empty()) m.inputs["config"] = o.config;
  if (!o.data.empty()) m.inputs["data"] = o.data;
  if (!o.adjacency.empty()) m.inputs["adjacency"] = o.adjacency;
  if (!o.checkpoint.empty()) m.inputs["checkpoint"] = o.checkpoint;
  if (!o.scaler.empty()) m.inputs["scaler"] = o.scaler;
  return m;
}

void finish(bench::Manifest& m, const bench::ExperimentConfig& cfg, const Options& o) {
  bench::write_json(fs::path(o.out) / "config.json", cfg.to_json());
  m.outputs.push_back("config.json");
  m.outputs.push_back("manifest.json");
  bench::write_json(fs::path(o.out) / "manifest.json", m.to_json());
  std::cerr << "wrote " << (fs::path(o.out) / "manifest.json").string() << "\n";
}

// The benchmark from --data/--adjacency, or the synthetic one.
bench::Benchmark load_benchmark(bench::ExperimentConfig& cfg, const Options& o) {
  if (o.data.empty()) {
    if (!o.adjacency.empty()) throw UsageError("--adjacency needs --data");
    return bench::prepare_benchmark(cfg);
  }
  if (o.adjacency.empty()) throw UsageError("--data needs --adjacency");
  pipeline::Dataset d = pipeline::read_dataset_csv(o.data);
  graph::GraphSpec g = graph::graph_from_adjacency(pipeline::read_adjacency_csv(o.adjacency));
  cfg.data.nodes = cfg.model.nodes = d.nodes();
  cfg.data.steps = d.steps();
  cfg.validate();
  return bench::prepare_benchmark(cfg, std::move(d.values), std::move(d.observed), std::move(g));
}

// Loads --checkpoint (adopting its model config) or trains a fresh model.
model::NoiseModel obtain_model(bench::ExperimentConfig& cfg, const Options& o,
                               bench::Benchmark& bench, bench::Manifest& m) {
  if (!o.checkpoint.empty()) {
    model::NoiseModel loaded = model::load_checkpoint(o.checkpoint);
    if (loaded.config().nodes != cfg.model.nodes) {
      throw UsageError("checkpoint has " + std::to_string(loaded.config().nodes) +
                       " nodes, data has " + std::to_string(cfg.model.nodes));
    }
    cfg.model = loaded.config();
    m.config = cfg.to_json();
    return loaded;
  }
  const auto t0 = Clock::now();
  pipeline::TrainResult tr;
  model::NoiseModel model = bench::train_model(
      cfg.model, cfg.train, bench, cfg.seed, &tr, [&](const pipeline::EpochStats& s) {
        std::fprintf(stderr, "epoch %zu/%zu  lr %.0e  train %.5f  val %.5f  %.1fs\n",
                     s.epoch + 1, cfg.train.epochs, s.learning_rate, s.train_loss, s.val_loss,
                     s.seconds);
      });
  m.wall_seconds["train"] = since(t0);
  model::save_checkpoint(model, fs::path(o.out) / "checkpoint.bin");
  bench::write_json(fs::path(o.out) / "scaler.json", bench::scaler_to_json(bench.scaler));
  bench::write_curve_csv(fs::path(o.out) / "curve.csv", tr.curve);
  m.outputs.insert(m.outputs.end(), {"checkpoint.bin", "scaler.json", "curve.csv"});
  m.summary["best_epoch"] = tr.best_epoch;
  m.summary["best_val_loss"] = tr.best_val_loss;
  return model;
}

void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  fs::remove(path);
  for (const auto& r : rows) pipeline::append_jsonl(path, r);
}

int cmd_generate(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("generate", cfg, o);
  const auto t0 = Clock::now();
  const bench::SyntheticData syn = bench::generate_synthetic(cfg.data);
  pipeline::Dataset d;
  for (std::size_t i = 0; i < cfg.data.nodes; ++i) d.node_ids.push_back("n" + std::to_string(i));
  d.values = syn.values;
  d.observed = masking::Mask(syn.values.dim(0), syn.values.dim(1), true);
  pipeline::write_dataset_csv(fs::path(o.out) / "data.csv", d);
  pipeline::write_adjacency_csv(fs::path(o.out) / "adjacency.csv", syn.graph.adjacency);
  m.wall_seconds["generate"] = since(t0);
  m.outputs = {"data.csv", "adjacency.csv"};
  finish(m, cfg, o);
  return 0;
}

int cmd_train(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("train", cfg, o);
  bench::Benchmark b = load_benchmark(cfg, o);
  m.config = cfg.to_json();
  masking::save_masks(fs::path(o.out) / "eval_masks.bin", cfg.seed,
                      {{"observed", b.eval.observed}, {"target", b.eval.target}});
  m.outputs.push_back("eval_masks.bin");
  Options fresh = o;
  fresh.checkpoint.clear();
  obtain_model(cfg, fresh, b, m);
  finish(m, cfg, o);
  return 0;
}

int cmd_impute(const Options& o) {
  if (o.checkpoint.empty() || o.scaler.empty() || o.data.empty() || o.adjacency.empty()) {
    throw UsageError("impute needs --checkpoint, --scaler, --data and --adjacency");
  }
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("impute", cfg, o);
  const model::NoiseModel model = model::load_checkpoint(o.checkpoint);
  const pipeline::Scaler scaler = bench::scaler_from_json(bench::read_json(o.scaler));
  pipeline::Dataset d = pipeline::read_dataset_csv(o.data);
  const graph::GraphSpec g =
      graph::graph_from_adjacency(pipeline::read_adjacency_csv(o.adjacency));
  if (d.nodes() != model.config().nodes || g.nodes != d.nodes() ||
      scaler.mean().size() != d.nodes()) {
    throw UsageError("data, adjacency, scaler and checkpoint disagree on the node count");
  }
  cfg.model = model.config();
  m.config = cfg.to_json();
  const std::size_t k = o.samples ? o.samples : cfg.eval.samples;
  const auto t0 = Clock::now();
  const pipeline::ImputationResult r =
      pipeline::impute(model, g.normalized, scaler, d.values, d.observed,
                       {k, bench::impute_seed(cfg.seed)});
  m.wall_seconds["impute"] = since(t0);
  pipeline::Dataset out = d;
  out.values = r.imputed;
  out.observed = masking::Mask(d.nodes(), d.steps(), true);
  pipeline::write_dataset_csv(fs::path(o.out) / "imputed.csv", out);
  m.outputs.push_back("imputed.csv");
  m.summary["samples"] = k;
  m.summary["imputed_entries"] = d.observed.size() - d.observed.count();
  finish(m, cfg, o);
  return 0;
}

int cmd_evaluate(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("evaluate", cfg, o);
  bench::Benchmark b = load_benchmark(cfg, o);
  const model::NoiseModel model = obtain_model(cfg, o, b, m);
  const std::size_t k = o.samples ? o.samples : cfg.eval.samples;
  const auto t0 = Clock::now();
  const bench::TestEvaluation ev =
      bench::evaluate_test(model, b, k, cfg.eval.windows, bench::impute_seed(cfg.seed));
  m.wall_seconds["evaluate"] = since(t0);
  std::vector<Json> rows;
  for (const auto& [name, met] : ev.metrics) {
    rows.push_back(pipeline::metrics_record(cfg.eval.scenario, name, cfg.seed, met,
                                            ev.seconds.at(name), Json{{"samples", k}}));
    m.summary[name] = {{"mae", met.mae}, {"mse", met.mse}};
    std::printf("%-8s MAE %.5f  MSE %.5f  (%zu targets, %.1fs)\n", name.c_str(), met.mae,
                met.mse, met.count, ev.seconds.at(name));
  }
  write_jsonl(fs::path(o.out) / "metrics.jsonl", rows);
  m.outputs.push_back("metrics.jsonl");
  finish(m, cfg, o);
  return 0;
}

int cmd_ablate(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("ablate", cfg, o);
  bench::Benchmark b = load_benchmark(cfg, o);
  m.config = cfg.to_json();
  const auto t0 = Clock::now();
  std::vector<Json> rows;
  const bench::AblationResult r = bench::run_ablation(cfg, b, [&](const bench::AblationRow& row) {
    std::printf("seed %llu  %-3s  MAE %.5f  MSE %.5f  train %.0fs  impute %.0fs\n",
                static_cast<unsigned long long>(row.seed), row.direction.c_str(), row.metrics.mae,
                row.metrics.mse, row.train_seconds, row.impute_seconds);
    std::fflush(stdout);
    rows.push_back(pipeline::metrics_record(cfg.eval.scenario, "model_" + row.direction, row.seed,
                                            row.metrics, row.train_seconds + row.impute_seconds,
                                            Json{{"direction", row.direction}}));
  });
  m.wall_seconds["ablate"] = since(t0);
  write_jsonl(fs::path(o.out) / "ablation.jsonl", rows);
  m.outputs.push_back("ablation.jsonl");
  m.summary["bi_wins"] = r.bi_wins;
  m.summary["seeds"] = cfg.ablation.seeds;
  std::printf("bi <= uni in %zu of %zu seeds\n", r.bi_wins, cfg.ablation.seeds);
  finish(m, cfg, o);
  return 0;
}

int cmd_sensitivity(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("sensitivity", cfg, o);
  bench::Benchmark b = load_benchmark(cfg, o);
  const model::NoiseModel model = obtain_model(cfg, o, b, m);
  const auto t0 = Clock::now();
  std::vector<Json> rows;
  const bench::SensitivityResult r = bench::run_sensitivity(
      model, b, cfg.sensitivity, bench::impute_seed(cfg.seed), [&](const bench::SensitivityRow& row) {
        std::printf("rate %.2f  MAE %.5f  MSE %.5f  (%zu targets, %.0fs)\n", row.rate,
                    row.metrics.mae, row.metrics.mse, row.metrics.count, row.seconds);
        std::fflush(stdout);
        rows.push_back(pipeline::metrics_record("point", "model", cfg.seed, row.metrics,
                                                row.seconds, Json{{"rate", row.rate}}));
      });
  m.wall_seconds["sensitivity"] = since(t0);
  write_jsonl(fs::path(o.out) / "sensitivity.jsonl", rows);
  {
    std::ofstream csv(fs::path(o.out) / "sensitivity.csv");
    csv << "rate,mae,mse\n";
    for (const auto& row : r.rows) csv << row.rate << ',' << row.metrics.mae << ',' << row.metrics.mse << '\n';
  }
  m.outputs.insert(m.outputs.end(), {"sensitivity.jsonl", "sensitivity.csv"});
  m.summary["inversions"] = r.inversions;
  m.summary["largest_drop"] = r.largest_drop;
  m.summary["trend_holds"] = r.trend_holds();
  std::printf("inversions %zu, largest drop %.2f%% of mean MAE\n", r.inversions,
              100.0 * r.largest_drop);
  finish(m, cfg, o);
  return 0;
}

int cmd_downstream(const Options& o) {
  bench::ExperimentConfig cfg = load_config(o);
  bench::Manifest m = start("downstream", cfg, o);
  bench::Benchmark b = load_benchmark(cfg, o);
  const model::NoiseModel model = obtain_model(cfg, o, b, m);
  auto t0 = Clock::now();
  const std::size_t k = o.samples ? o.samples : cfg.eval.samples;
  // Validation and test spans, neither seen in training.
  const bench::TestEvaluation ev = bench::evaluate_range(
      model, b, b.splits.train_end, b.values.dim(1), k, bench::impute_seed(cfg.seed));
  m.wall_seconds["impute"] = since(t0);
  std::map<std::string, NdArray> series = ev.imputed;
  series["oracle"] = ev.truth;
  t0 = Clock::now();
  const bench::DownstreamResult r = bench::run_downstream(
      series, ev.truth, ev.given, bench::degree_extremes(b.graph.adjacency), cfg.downstream);
  m.wall_seconds["downstream"] = since(t0);
  std::vector<Json> rows;
  for (const auto& row : r.rows) {
    std::printf("node %zu  seed %llu  %-7s MAE %.5f  MSE %.5f\n", row.node,
                static_cast<unsigned long long>(row.seed), row.imputer.c_str(), row.metrics.mae,
                row.metrics.mse);
    rows.push_back(pipeline::metrics_record(cfg.eval.scenario, row.imputer, row.seed, row.metrics,
                                            0.0, Json{{"node", row.node}, {"task", "downstream"}}));
  }
  write_jsonl(fs::path(o.out) / "downstream.jsonl", rows);
  m.outputs.push_back("downstream.jsonl");
  m.summary["nodes"] = r.nodes;
  m.summary["oracle_best"] = r.oracle_best();
  finish(m, cfg, o);
  return 0;
}

int cmd_gradcheck() {
  const auto entries = check::run_gradient_suite();
  for (const auto& e : entries) {
    std::printf("%-28s max rel error %.3e over %zu entries\n", e.name.c_str(),
                e.result.max_rel_error, e.result.checked);
  }
  const double worst = check::max_error(entries);
  std::printf("max relative error %.3e (threshold 1e-4)\n", worst);
  return worst < 1e-4 ? 0 : 2;
}

int cmd_scancheck() {
  const check::ScanCheckResult r = check::run_scan_check();
  std::printf("max abs deviation %.3e over %zu instances in %.2fs (threshold 1e-9)\n",
              r.max_abs_dev, r.instances, r.seconds);
  return r.max_abs_dev < 1e-9 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal diffusion imputation with state-space blocks"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "root seed (overrides the config)");
  app.add_option("--out", o.out, "output directory")->capture_default_str();

  auto data_opts = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "dataset CSV (header of node ids, one row per step)")
        ->check(CLI::ExistingFile);
    sub->add_option("--adjacency", o.adjacency, "N x N adjacency CSV")->check(CLI::ExistingFile);
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "trained checkpoint; trains one if absent")
        ->check(CLI::ExistingFile);
    sub->add_option("--samples", o.samples, "reverse chains per window (K)");
  };

  auto* generate = app.add_subcommand("generate", "write the synthetic dataset and adjacency");
  auto* train = app.add_subcommand("train", "train a model and save checkpoint and scaler");
  data_opts(train);
  auto* impute = app.add_subcommand("impute", "fill the missing cells of a dataset");
  data_opts(impute);
  model_opts(impute);
  impute->add_option("--scaler", o.scaler, "scaler.json written by train")
      ->check(CLI::ExistingFile);
  auto* evaluate = app.add_subcommand("evaluate", "test-split MAE/MSE of the model and baselines");
  data_opts(evaluate);
  model_opts(evaluate);
  auto* ablate = app.add_subcommand("ablate", "uni vs bi Mamba blocks over several seeds");
  data_opts(ablate);
  auto* sensitivity = app.add_subcommand("sensitivity", "MAE/MSE against the missing rate");
  data_opts(sensitivity);
  model_opts(sensitivity);
  auto* downstream = app.add_subcommand("downstream", "node regression on imputed data");
  data_opts(downstream);
  model_opts(downstream);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* scancheck = app.add_subcommand("scancheck", "parallel vs sequential scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(o);
    if (train->parsed()) return cmd_train(o);
    if (impute->parsed()) return cmd_impute(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (sensitivity->parsed()) return cmd_sensitivity(o);
    if (downstream->parsed()) return cmd_downstream(o);
    if (gradcheck->parsed()) return cmd_gradcheck();
    if (scancheck->parsed()) return cmd_scancheck();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
