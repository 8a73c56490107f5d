// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/masking/masks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ssmdiff::masking {

Mask::Mask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

Mask Mask::from_array(const NdArray& a) {
  if (a.rank() != 2) throw ShapeError("mask", "expected [rows, cols], got " + shape_str(a.shape()));
  Mask m(a.dim(0), a.dim(1));
  for (std::size_t i = 0; i < a.size(); ++i) m.bits_[i] = a[i] != 0.0;
  return m;
}

NdArray Mask::to_array() const {
  NdArray a({rows_, cols_});
  for (std::size_t i = 0; i < bits_.size(); ++i) a[i] = bits_[i];
  return a;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

void Mask::check_same(const Mask& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) {
    throw ShapeError("mask", shape_str({rows_, cols_}) + " vs " + shape_str({o.rows_, o.cols_}));
  }
}

Mask Mask::operator&(const Mask& o) const {
  check_same(o);
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = bits_[i] & o.bits_[i];
  return m;
}

Mask Mask::operator|(const Mask& o) const {
  check_same(o);
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = bits_[i] | o.bits_[i];
  return m;
}

Mask Mask::operator~() const {
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = !bits_[i];
  return m;
}

Mask Mask::minus(const Mask& o) const {
  check_same(o);
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = bits_[i] & !o.bits_[i];
  return m;
}

bool Mask::subset_of(const Mask& o) const {
  check_same(o);
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i] && !o.bits_[i]) return false;
  return true;
}

void MaskPair::validate() const {
  if (observed.rows() != target.rows() || observed.cols() != target.cols()) {
    throw MaskError("mask pair: observed and target shapes differ");
  }
  if (!target.subset_of(observed)) throw MaskError("mask pair: target outside observed entries");
}

namespace {

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void require_nonempty(const Mask& observed, const char* op) {
  if (observed.none()) throw MaskError(std::string(op) + ": observed mask has no entries");
}

template <typename Draw>
MaskPair with_retries(const Mask& observed, const char* op, DrawInfo* info, Draw draw) {
  for (std::size_t attempt = 1; attempt <= kMaxRetries; ++attempt) {
    if (info) *info = DrawInfo{};
    Mask target = draw(attempt);
    if (info) info->attempts = attempt;
    if (!target.none()) return MaskPair{observed, std::move(target)};
  }
  throw MaskError(std::string(op) + ": no targets after " + std::to_string(kMaxRetries) +
                  " attempts");
}

Mask bernoulli(const Mask& within, double rate, Rng& rng) {
  Mask m(within.rows(), within.cols());
  for (std::size_t i = 0; i < within.size(); ++i)
    if (within[i] && uniform01(rng) < rate) m.set_flat(i);
  return m;
}

}  // namespace

MaskPair mask_point(const Mask& observed, Rng& rng, const PointOptions& opts, DrawInfo* info) {
  require_nonempty(observed, "mask_point");
  return with_retries(observed, "mask_point", info, [&](std::size_t attempt) {
    const bool forced = opts.rate && (attempt == 1 || opts.keep_rate_on_retry);
    const double r = forced ? *opts.rate : uniform01(rng);
    if (info) info->rate = r;
    return bernoulli(observed, r, rng);
  });
}

MaskPair mask_block(const Mask& observed, Rng& rng, const BlockOptions& opts, DrawInfo* info) {
  require_nonempty(observed, "mask_block");
  const std::size_t n = observed.rows(), len = observed.cols();
  if (len < 2) throw MaskError("mask_block: need L >= 2");
  const std::size_t min_len = (len + 1) / 2;
  if (opts.block_length && (*opts.block_length < min_len || *opts.block_length > len)) {
    throw MaskError("mask_block: forced block length outside [ceil(L/2), L]");
  }
  return with_retries(observed, "mask_block", info, [&](std::size_t) {
    Mask target(n, len);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = opts.node_probability
                           ? *opts.node_probability
                           : opts.max_node_probability * uniform01(rng);
      if (uniform01(rng) >= p) continue;
      const std::size_t l = opts.block_length ? *opts.block_length : uniform_int(rng, min_len, len);
      const std::size_t start = uniform_int(rng, 0, len - l);
      for (std::size_t t = start; t < start + l; ++t) target.set(i, t);
      if (info) info->blocks.push_back({i, start, l});
    }
    if (info) info->rate = opts.point_rate;
    return (target | bernoulli(observed, opts.point_rate, rng)) & observed;
  });
}

MaskPair mask_historical(const Mask& observed, const std::vector<Mask>& pool, Rng& rng,
                         DrawInfo* info) {
  require_nonempty(observed, "mask_historical");
  if (pool.empty()) throw MaskError("mask_historical: empty pattern pool");
  return with_retries(observed, "mask_historical", info, [&](std::size_t) {
    const std::size_t k = uniform_int(rng, 0, pool.size() - 1);
    if (info) info->pool_index = k;
    return pool[k] & observed;
  });
}

MaskPair mask_hybrid(const Mask& observed, Rng& rng, const HybridOptions& opts,
                     const std::vector<Mask>* pool, DrawInfo* info) {
  if (opts.secondary == Secondary::kHistorical && !pool) {
    throw MaskError("mask_hybrid: historical secondary needs a pattern pool");
  }
  const bool point = opts.coin ? *opts.coin : uniform01(rng) < 0.5;
  MaskPair out = point ? mask_point(observed, rng, opts.point, info)
                 : opts.secondary == Secondary::kBlock
                     ? mask_block(observed, rng, opts.block, info)
                     : mask_historical(observed, *pool, rng, info);
  if (info) info->used_point = point;
  return out;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "point") return Strategy::kPoint;
  if (name == "block") return Strategy::kBlock;
  if (name == "historical") return Strategy::kHistorical;
  if (name == "hybrid_block") return Strategy::kHybridBlock;
  if (name == "hybrid_historical") return Strategy::kHybridHistorical;
  throw MaskError("unknown mask strategy \"" + name +
                  "\"; valid: point, block, historical, hybrid_block, hybrid_historical");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kPoint: return "point";
    case Strategy::kBlock: return "block";
    case Strategy::kHistorical: return "historical";
    case Strategy::kHybridBlock: return "hybrid_block";
    case Strategy::kHybridHistorical: return "hybrid_historical";
  }
  return "?";
}

MaskPair sample_strategy(const Mask& observed, Strategy strategy, const std::vector<Mask>* pool,
                         Rng& rng, const PointOptions& point) {
  if ((strategy == Strategy::kHistorical || strategy == Strategy::kHybridHistorical) && !pool) {
    throw MaskError("strategy " + strategy_name(strategy) + " needs a pattern pool");
  }
  switch (strategy) {
    case Strategy::kPoint: return mask_point(observed, rng, point);
    case Strategy::kBlock: return mask_block(observed, rng);
    case Strategy::kHistorical: return mask_historical(observed, *pool, rng);
    case Strategy::kHybridBlock:
    case Strategy::kHybridHistorical: {
      HybridOptions h;
      h.secondary = strategy == Strategy::kHybridBlock ? Secondary::kBlock : Secondary::kHistorical;
      h.point = point;
      return mask_hybrid(observed, rng, h, pool);
    }
  }
  throw MaskError("unknown strategy");
}

std::vector<MaskPair> sample_batch(const std::vector<Mask>& observed, Strategy strategy,
                                   const std::vector<Mask>* pool, Rng& rng) {
  if ((strategy == Strategy::kHistorical || strategy == Strategy::kHybridHistorical) && !pool) {
    throw MaskError("strategy " + strategy_name(strategy) + " needs a pattern pool");
  }
  const PointOptions point{uniform01(rng), /*keep_rate_on_retry=*/false};
  std::vector<MaskPair> out;
  out.reserve(observed.size());
  for (const Mask& m : observed) out.push_back(sample_strategy(m, strategy, pool, rng, point));
  return out;
}

Scenario parse_scenario(const std::string& name) {
  if (name == "point") return Scenario::kPoint;
  if (name == "block") return Scenario::kBlock;
  if (name == "simulated_failure") return Scenario::kSimulatedFailure;
  throw MaskError("unknown scenario \"" + name + "\"; valid: point, block, simulated_failure");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kPoint: return "point";
    case Scenario::kBlock: return "block";
    case Scenario::kSimulatedFailure: return "simulated_failure";
  }
  return "?";
}

Mask simulate_failures(std::size_t rows, std::size_t cols, const FailureSpec& spec, Rng& rng) {
  if (!(spec.fail >= 0.0 && spec.fail <= 1.0 && spec.recover > 0.0 && spec.recover <= 1.0)) {
    throw MaskError("failure simulator: need fail in [0, 1] and recover in (0, 1]");
  }
  Mask missing(rows, cols);
  const double stationary = spec.fail / (spec.fail + spec.recover);
  for (std::size_t i = 0; i < rows; ++i) {
    bool down = uniform01(rng) < stationary;
    for (std::size_t t = 0; t < cols; ++t) {
      missing.set(i, t, down);
      down = down ? uniform01(rng) >= spec.recover : uniform01(rng) < spec.fail;
    }
  }
  return missing;
}

MaskPair scenario_masks(Scenario kind, std::size_t rows, std::size_t cols,
                        const ScenarioParams& params, Rng& rng, const Mask* available,
                        DrawInfo* info) {
  Mask all = available ? *available : Mask(rows, cols, true);
  if (all.rows() != rows || all.cols() != cols) {
    throw ShapeError("scenario_masks", "availability mask has the wrong shape");
  }
  Mask removed(rows, cols);
  switch (kind) {
    case Scenario::kPoint:
      removed = bernoulli(all, params.point_rate, rng);
      if (info) info->rate = params.point_rate;
      break;
    case Scenario::kBlock: {
      const auto lo = static_cast<std::size_t>(
          std::max(1.0, std::round(params.block_min_hours * params.steps_per_hour)));
      const auto hi = std::max(lo, static_cast<std::size_t>(std::round(
                                       params.block_max_hours * params.steps_per_hour)));
      removed = bernoulli(all, params.block_point_rate, rng);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t t = 0; t < cols; ++t) {
          if (uniform01(rng) >= params.block_probability) continue;
          const std::size_t l = uniform_int(rng, lo, hi);
          for (std::size_t u = t; u < std::min(cols, t + l); ++u) removed.set(i, u);
          if (info) info->blocks.push_back({i, t, l});
        }
      break;
    }
    case Scenario::kSimulatedFailure:
      if (params.failure_pool && !params.failure_pool->empty()) {
        const auto& pool = *params.failure_pool;
        const std::size_t k = uniform_int(rng, 0, pool.size() - 1);
        if (pool[k].rows() != rows || pool[k].cols() != cols) {
          throw ShapeError("scenario_masks", "failure pattern has the wrong shape");
        }
        removed = pool[k];
        if (info) info->pool_index = k;
      } else {
        removed = simulate_failures(rows, cols, params.failure, rng);
      }
      break;
  }
  return MaskPair{all, removed & all};
}

// Mask files -----------------------------------------------------------------

namespace {

constexpr char kMaskMagic[8] = {'S', 'S', 'D', 'I', 'M', 'A', 'S', 'K'};
constexpr std::uint32_t kMaskVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw MaskError("mask file truncated");
  return v;
}

}  // namespace

void save_masks(const std::filesystem::path& path, std::uint64_t seed,
                const std::vector<std::pair<std::string, Mask>>& grids) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MaskError("cannot write " + path.string());
  os.write(kMaskMagic, 8);
  put<std::uint32_t>(os, kMaskVersion);
  put<std::uint64_t>(os, seed);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(grids.size()));
  for (const auto& [name, m] : grids) {
    put<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(os, m.rows());
    put<std::uint64_t>(os, m.cols());
    std::vector<char> packed((m.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
    os.write(packed.data(), static_cast<std::streamsize>(packed.size()));
  }
  if (!os) throw MaskError("write failed for " + path.string());
}

MaskFile load_masks(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MaskError("cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMaskMagic, 8) != 0) {
    throw MaskError(path.string() + " is not a mask file");
  }
  if (const auto v = get<std::uint32_t>(is); v != kMaskVersion) {
    throw MaskError("unsupported mask file version " + std::to_string(v));
  }
  MaskFile out;
  out.seed = get<std::uint64_t>(is);
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t g = 0; g < count; ++g) {
    const auto len = get<std::uint64_t>(is);
    if (len > 4096) throw MaskError("mask name too long");
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) {
      throw MaskError("mask file truncated");
    }
    const auto rows = get<std::uint64_t>(is), cols = get<std::uint64_t>(is);
    if (rows > (1u << 24) || cols > (1u << 28) || rows * cols > (1ull << 32)) {
      throw MaskError("mask dimensions out of range");
    }
    Mask m(rows, cols);
    std::vector<char> packed((m.size() + 7) / 8);
    if (!is.read(packed.data(), static_cast<std::streamsize>(packed.size()))) {
      throw MaskError("mask file truncated");
    }
    for (std::size_t i = 0; i < m.size(); ++i) m.set_flat(i, (packed[i / 8] >> (i % 8)) & 1);
    out.grids.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace ssmdiff::masking
