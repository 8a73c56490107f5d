// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssmdiff/autodiff/ndarray.hpp"
#include "ssmdiff/autodiff/random.hpp"

namespace ssmdiff::masking {

class MaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary node x time grid.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false);

  /// Nonzero entries become 1.
  static Mask from_array(const NdArray& a);
  /// [rows, cols] array of 0.0 / 1.0.
  NdArray to_array() const;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }

  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set_flat(std::size_t i, bool v = true) { bits_[i] = v; }

  Mask operator&(const Mask& o) const;
  Mask operator|(const Mask& o) const;
  Mask operator~() const;
  /// this & ~o
  Mask minus(const Mask& o) const;
  bool subset_of(const Mask& o) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  void check_same(const Mask& o) const;

  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Observed entries M and training targets M^ta, a subset of M. The model
/// is conditioned on M \ M^ta.
struct MaskPair {
  Mask observed;
  Mask target;

  Mask conditioning() const { return observed.minus(target); }
  /// Throws MaskError if targets fall outside the observed entries.
  void validate() const;
};

/// Optional record of the random choices behind one draw.
struct DrawInfo {
  struct Block {
    std::size_t node = 0, start = 0, length = 0;
  };
  std::size_t attempts = 0;
  double rate = 0.0;              // point rate of the accepted attempt
  std::vector<Block> blocks;      // block strategy, accepted attempt
  std::size_t pool_index = 0;     // historical strategy
  bool used_point = false;        // hybrid strategy
};

inline constexpr std::size_t kMaxRetries = 16;

struct PointOptions {
  std::optional<double> rate;     // forced r instead of r ~ U[0, 1]
  bool keep_rate_on_retry = true; // false: a forced r applies to the first attempt only
};

struct BlockOptions {
  std::optional<double> node_probability;  // forced p instead of p ~ U[0, max]
  double max_node_probability = 0.15;
  std::optional<std::size_t> block_length;  // forced length
  double point_rate = 0.05;
};

/// Every observed entry becomes a target with probability r.
MaskPair mask_point(const Mask& observed, Rng& rng, const PointOptions& opts = {},
                    DrawInfo* info = nullptr);

/// Per node, with probability p ~ U[0, 0.15] a contiguous block of length
/// U{ceil(L/2), ..., L}, then independent point targets at rate 0.05.
MaskPair mask_block(const Mask& observed, Rng& rng, const BlockOptions& opts = {},
                    DrawInfo* info = nullptr);

/// Pool entries are missing-value patterns (1 = missing). One is drawn and
/// its missing entries that are currently observed become targets.
MaskPair mask_historical(const Mask& observed, const std::vector<Mask>& pool, Rng& rng,
                         DrawInfo* info = nullptr);

enum class Secondary { kBlock, kHistorical };

struct HybridOptions {
  Secondary secondary = Secondary::kBlock;
  std::optional<bool> coin;  // forced: true selects the point strategy
  PointOptions point;
  BlockOptions block;
};

MaskPair mask_hybrid(const Mask& observed, Rng& rng, const HybridOptions& opts,
                     const std::vector<Mask>* pool = nullptr, DrawInfo* info = nullptr);

enum class Strategy { kPoint, kBlock, kHistorical, kHybridBlock, kHybridHistorical };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

/// One training draw with the named strategy. `point` applies to the point
/// strategy and to the point side of the hybrids.
MaskPair sample_strategy(const Mask& observed, Strategy strategy, const std::vector<Mask>* pool,
                         Rng& rng, const PointOptions& point = {});

/// Training masks for a batch. The point rate r is drawn once per batch;
/// an empty draw for one sample redraws r for that sample only.
std::vector<MaskPair> sample_batch(const std::vector<Mask>& observed, Strategy strategy,
                                   const std::vector<Mask>* pool, Rng& rng);

// Evaluation scenarios -------------------------------------------------------

enum class Scenario { kPoint, kBlock, kSimulatedFailure };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

/// Bursty per-node outages: a two-state chain per node that fails with
/// probability `fail` per step and recovers with probability `recover`.
struct FailureSpec {
  double fail = 0.02;
  double recover = 1.0 / 6.0;
};

/// Missing-pattern mask (1 = missing).
Mask simulate_failures(std::size_t rows, std::size_t cols, const FailureSpec& spec, Rng& rng);

struct ScenarioParams {
  double point_rate = 0.25;
  double block_point_rate = 0.05;
  double block_probability = 0.0015;  // per sensor and step
  double block_min_hours = 1.0;
  double block_max_hours = 4.0;
  double steps_per_hour = 1.0;
  FailureSpec failure;
  const std::vector<Mask>* failure_pool = nullptr;  // injected patterns
};

/// Evaluation masks for a complete series. `observed` is what ground truth
/// is available (all ones when omitted), targets are the removed entries.
/// The block scenario appends its block lengths to `info->blocks`.
MaskPair scenario_masks(Scenario kind, std::size_t rows, std::size_t cols,
                        const ScenarioParams& params, Rng& rng,
                        const Mask* available = nullptr, DrawInfo* info = nullptr);

// Mask files -----------------------------------------------------------------

/// "SSDIMASK" | u32 version | u64 seed | u32 count | per grid: u64 name len,
/// name, u64 rows, u64 cols, ceil(rows*cols/8) bytes packed LSB first.
void save_masks(const std::filesystem::path& path, std::uint64_t seed,
                const std::vector<std::pair<std::string, Mask>>& grids);

struct MaskFile {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Mask>> grids;
};

MaskFile load_masks(const std::filesystem::path& path);

}  // namespace ssmdiff::masking
