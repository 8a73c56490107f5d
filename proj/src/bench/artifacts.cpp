// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/bench/artifacts.hpp"

#include <fstream>

#include "ssmdiff/bench/experiment.hpp"

namespace ssmdiff::bench {

Json Manifest::to_json() const {
  return Json{{"command", command},   {"config", config},
              {"seed", seed},         {"git_describe", git_describe()},
              {"inputs", inputs},     {"wall_seconds", wall_seconds},
              {"outputs", outputs},   {"summary", summary}};
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json scaler_to_json(const pipeline::Scaler& s) {
  return Json{{"mean", s.mean()}, {"stddev", s.stddev()}};
}

pipeline::Scaler scaler_from_json(const Json& j) {
  std::vector<double> mean, sd;
  FieldReader r(j, "scaler");
  r.read("mean", mean).read("stddev", sd);
  r.finish();
  try {
    return pipeline::Scaler(std::move(mean), std::move(sd));
  } catch (const pipeline::DataError& e) {
    throw ConfigError(e.what());
  }
}

void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<pipeline::EpochStats>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,learning_rate,train_loss,val_loss,seconds\n";
  os.precision(10);
  for (const auto& e : curve) {
    os << e.epoch << ',' << e.learning_rate << ',' << e.train_loss << ',';
    if (e.val_loss == e.val_loss) os << e.val_loss;
    os << ',' << e.seconds << '\n';
  }
}

}  // namespace ssmdiff::bench
