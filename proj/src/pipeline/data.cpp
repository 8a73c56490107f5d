// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/pipeline/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ssmdiff::pipeline {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  const char* begin = text.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0';
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps()) throw DataError("dataset slice out of range");
  const std::size_t n = nodes(), len = end - begin;
  Dataset out;
  out.node_ids = node_ids;
  out.values = NdArray({n, len});
  out.observed = masking::Mask(n, len);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < len; ++t) {
      out.values.at({i, t}) = values.at({i, begin + t});
      out.observed.set(i, t, observed(i, begin + t));
    }
  return out;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty file");
  Dataset d;
  for (const auto& c : split_csv_line(line)) d.node_ids.push_back(trim(c));
  const std::size_t n = d.node_ids.size();
  if (n == 0 || (n == 1 && d.node_ids[0].empty())) throw DataError(path.string() + ": no nodes");
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> seen;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != n) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(n) + " cells, got " + std::to_string(cells.size()));
    }
    std::vector<double> row(n, 0.0);
    std::vector<bool> ok(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string c = trim(cells[i]);
      if (c.empty() || c == "nan" || c == "NaN" || c == "NA") continue;
      double v;
      if (!parse_number(c, v) || !std::isfinite(v)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad value '" + c +
                        "' for node " + d.node_ids[i]);
      }
      row[i] = v;
      ok[i] = true;
    }
    rows.push_back(std::move(row));
    seen.push_back(std::move(ok));
  }
  const std::size_t steps = rows.size();
  if (steps == 0) throw DataError(path.string() + ": no time steps");
  d.values = NdArray({n, steps});
  d.observed = masking::Mask(n, steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      d.values.at({i, t}) = rows[t][i];
      d.observed.set(i, t, seen[t][i]);
    }
  return d;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < data.node_ids.size(); ++i) {
    os << (i ? "," : "") << data.node_ids[i];
  }
  os << '\n';
  for (std::size_t t = 0; t < data.steps(); ++t) {
    for (std::size_t i = 0; i < data.nodes(); ++i) {
      if (i) os << ',';
      if (data.observed(i, t)) os << format_double(data.values.at({i, t}));
    }
    os << '\n';
  }
  if (!os) throw DataError("write failed for " + path.string());
}

NdArray read_adjacency_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open adjacency " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& c : split_csv_line(line)) {
      double v;
      if (!parse_number(trim(c), v)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad weight '" +
                        trim(c) + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const std::size_t n = rows.size();
  NdArray a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) {
      throw DataError(path.string() + ": adjacency must be square, row " + std::to_string(i) +
                      " has " + std::to_string(rows[i].size()) + " entries for " +
                      std::to_string(n) + " rows");
    }
    for (std::size_t j = 0; j < n; ++j) a.at({i, j}) = rows[i][j];
  }
  return a;
}

void write_adjacency_csv(const std::filesystem::path& path, const NdArray& adjacency) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  const std::size_t n = adjacency.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) os << (j ? "," : "") << format_double(adjacency.at({i, j}));
    os << '\n';
  }
}

Splits split_horizon(std::size_t steps, double train_fraction, double val_fraction) {
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction < 1.0)) {
    throw DataError("split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }
  Splits s;
  s.total = steps;
  s.train_end = static_cast<std::size_t>(std::floor(steps * train_fraction + 1e-9));
  s.val_end = static_cast<std::size_t>(std::floor(steps * (train_fraction + val_fraction) + 1e-9));
  return s;
}

Scaler::Scaler(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
  if (mean_.size() != std_.size()) throw DataError("scaler: mean and stddev sizes differ");
  for (double s : std_)
    if (!(s > 0.0)) throw DataError("scaler: stddev must be positive");
}

Scaler Scaler::fit(const NdArray& values, const masking::Mask& observed) {
  const std::size_t n = values.dim(0), len = values.dim(1);
  std::vector<double> mean(n, 0.0), sd(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < len; ++t)
      if (observed(i, t)) {
        sum += values.at({i, t});
        ++count;
      }
    if (count == 0) continue;
    mean[i] = sum / count;
    double ss = 0.0;
    for (std::size_t t = 0; t < len; ++t)
      if (observed(i, t)) ss += std::pow(values.at({i, t}) - mean[i], 2);
    const double s = std::sqrt(ss / count);
    sd[i] = s > 1e-12 ? s : 1.0;
  }
  return Scaler(std::move(mean), std::move(sd));
}

NdArray Scaler::transform(const NdArray& x) const {
  const std::size_t r = x.rank();
  if (r < 2 || x.dim(r - 2) != mean_.size()) {
    throw ShapeError("scaler", "expected [..., " + std::to_string(mean_.size()) + ", L], got " +
                                   shape_str(x.shape()));
  }
  const std::size_t n = mean_.size(), len = x.dim(r - 1);
  NdArray out = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t i = (k / len) % n;
    out[k] = (x[k] - mean_[i]) / std_[i];
  }
  return out;
}

NdArray Scaler::inverse(const NdArray& x) const {
  const std::size_t r = x.rank();
  if (r < 2 || x.dim(r - 2) != mean_.size()) {
    throw ShapeError("scaler", "expected [..., " + std::to_string(mean_.size()) + ", L], got " +
                                   shape_str(x.shape()));
  }
  const std::size_t n = mean_.size(), len = x.dim(r - 1);
  NdArray out = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t i = (k / len) % n;
    out[k] = x[k] * std_[i] + mean_[i];
  }
  return out;
}

Interpolated linear_interpolate(const NdArray& values, const NdArray& mask) {
  if (values.shape() != mask.shape() || values.rank() < 1) {
    throw ShapeError("linear_interpolate",
                     shape_str(values.shape()) + " vs mask " + shape_str(mask.shape()));
  }
  const std::size_t len = values.shape().back();
  Interpolated out{NdArray(values.shape()), {}};
  if (len == 0) return out;
  const std::size_t rows = values.size() / len;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = values.ptr() + r * len;
    const double* m = mask.ptr() + r * len;
    double* o = out.series.ptr() + r * len;
    std::size_t prev = len;  // last observed index, len = none yet
    for (std::size_t t = 0; t < len; ++t) {
      if (m[t] == 0.0) continue;
      o[t] = v[t];
      if (prev == len) {
        for (std::size_t u = 0; u < t; ++u) o[u] = v[t];
      } else {
        const double span = double(t - prev);
        for (std::size_t u = prev + 1; u < t; ++u) {
          const double w = double(u - prev) / span;
          o[u] = (1.0 - w) * v[prev] + w * v[t];
        }
      }
      prev = t;
    }
    if (prev == len) {
      out.empty_rows.push_back(r);
    } else {
      for (std::size_t u = prev + 1; u < len; ++u) o[u] = v[prev];
    }
  }
  return out;
}

Interpolated linear_interpolate(const NdArray& values, const masking::Mask& mask) {
  return linear_interpolate(values, mask.to_array());
}

std::vector<std::size_t> window_starts(std::size_t steps, std::size_t length) {
  if (length == 0 || steps < length) {
    throw DataError("need at least one window of length " + std::to_string(length) + " in " +
                    std::to_string(steps) + " steps");
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + length <= steps; s += length) starts.push_back(s);
  if (steps % length) starts.push_back(steps - length);
  return starts;
}

NdArray gather_windows(const NdArray& src, const std::vector<std::size_t>& starts,
                       std::size_t length) {
  const std::size_t n = src.dim(0), total = src.dim(1);
  NdArray out({starts.size(), n, length});
  for (std::size_t b = 0; b < starts.size(); ++b) {
    if (starts[b] + length > total) throw DataError("window past the end of the series");
    for (std::size_t i = 0; i < n; ++i)
      std::copy(src.ptr() + i * total + starts[b], src.ptr() + i * total + starts[b] + length,
                out.ptr() + (b * n + i) * length);
  }
  return out;
}

}  // namespace ssmdiff::pipeline
