// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include <string>

#include <gtest/gtest.h>

#include "ssmdiff/check/gradcheck.hpp"
#include "ssmdiff/mamba/mamba_block.hpp"
#include "support/test_util.hpp"

namespace ssmdiff::mamba {
namespace {

using testing::kGradTol;
using testing::random_array;

MambaConfig small_config(Direction dir, std::size_t d_cond = 0) {
  MambaConfig c;
  c.d_model = 4;
  c.d_cond = d_cond;
  c.state = 3;
  c.direction = dir;
  return c;
}

NdArray run(const MambaBlock& block, const ParameterStore& store, const NdArray& x,
            const NdArray* h_pri = nullptr, bool parallel = false) {
  Tape t;
  ParamBinding p(t, store, false);
  ForwardContext ctx;
  ctx.parallel_scan = parallel;
  std::optional<Var> h;
  if (h_pri) h = t.constant(*h_pri);
  return block(p, ctx, t.constant(x), h).value();
}

NdArray reverse_time(const NdArray& x) {
  Tape t;
  return ops::reverse(t.constant(x), x.rank() - 2).value();
}

void copy_direction(ParameterStore& store, const std::string& from, const std::string& to) {
  for (const std::string& name : store.names()) {
    const auto pos = name.find(from);
    if (pos == std::string::npos) continue;
    std::string target = name;
    target.replace(pos, from.size(), to);
    store.get(target) = store.get(name);
  }
}

void swap_directions(ParameterStore& store) {
  const ParameterStore copy = store;
  for (const std::string& name : store.names()) {
    std::string other = name;
    if (auto p = name.find("_fwd"); p != std::string::npos) other.replace(p, 4, "_bwd");
    else if (auto q = name.find("_bwd"); q != std::string::npos) other.replace(q, 4, "_fwd");
    else continue;
    store.get(name) = copy.get(other);
  }
}

TEST(MambaBlock, ZeroOutputProjectionIsResidualIdentity) {
  for (Direction dir : {Direction::kUni, Direction::kBi}) {
    ParameterStore store;
    Rng rng(1);
    MambaBlock block(store, "m", small_config(dir), rng);
    store.get("m.out_proj.weight") = NdArray({8, 4});
    const NdArray x = random_array({2, 3, 5, 4}, 2);
    EXPECT_EQ(run(block, store, x), x);
  }
}

TEST(MambaBlock, OutputShapeMatchesInputForAnyLength) {
  ParameterStore store;
  Rng rng(3);
  MambaBlock block(store, "m", small_config(Direction::kBi), rng);
  for (std::size_t L : {1u, 2u, 7u, 70u}) {
    const NdArray x = random_array({1, 2, L, 4}, L);
    EXPECT_EQ(run(block, store, x).shape(), x.shape());
    EXPECT_EQ(run(block, store, x, nullptr, true).shape(), x.shape());
  }
}

TEST(MambaBlock, LengthOneTiedBidirectionalEqualsUniWithDoubledPaths) {
  // With one step, reversal is the identity and the two tied paths coincide,
  // so the summed bidirectional path is exactly twice the unidirectional one.
  ParameterStore bi_store, uni_store;
  Rng r1(4), r2(4);
  MambaBlock bi(bi_store, "m", small_config(Direction::kBi), r1);
  MambaBlock uni(uni_store, "m", small_config(Direction::kUni), r2);
  for (const std::string& name : uni_store.names()) uni_store.get(name) = bi_store.get(name);
  copy_direction(bi_store, "_fwd", "_bwd");
  NdArray& w = uni_store.get("m.out_proj.weight");
  for (double& v : w.data()) v *= 2.0;
  const NdArray x = random_array({2, 3, 1, 4}, 5);
  EXPECT_EQ(run(bi, bi_store, x), run(uni, uni_store, x));
}

TEST(MambaBlock, TiedPathsOnPalindromeGiveTimeSymmetricOutput) {
  // Tied parameters and a palindromic input make the backward path the
  // time-reversal of the forward path, so their sum is itself a palindrome.
  ParameterStore store;
  Rng rng(6);
  MambaBlock block(store, "m", small_config(Direction::kBi), rng);
  copy_direction(store, "_fwd", "_bwd");
  NdArray x = random_array({1, 2, 7, 4}, 7);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 4; t < 7; ++t)
      for (std::size_t c = 0; c < 4; ++c) x.at({0, n, t, c}) = x.at({0, n, 6 - t, c});
  ASSERT_EQ(reverse_time(x), x);
  const NdArray y = run(block, store, x);
  EXPECT_EQ(reverse_time(y), y);
}

TEST(MambaBlock, ReversalWithSwappedDirectionsIsExactlyEquivariant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterStore store;
    Rng rng(seed);
    MambaBlock block(store, "m", small_config(Direction::kBi), rng);
    const NdArray x = random_array({2, 2, 9, 4}, 100 + seed);
    const NdArray y = run(block, store, x);
    ParameterStore swapped = store;
    swap_directions(swapped);
    EXPECT_EQ(run(block, swapped, reverse_time(x)), reverse_time(y));
    EXPECT_NE(run(block, store, reverse_time(x)), reverse_time(y));
  }
}

TEST(MambaBlock, ZeroPriorWithZeroWeightsMatchesUnconditionedBlock) {
  ParameterStore cond_store, plain_store;
  Rng r1(8), r2(8);
  MambaBlock cond(cond_store, "m", small_config(Direction::kBi, 3), r1);
  MambaBlock plain(plain_store, "m", small_config(Direction::kBi), r2);
  for (const std::string& name : plain_store.names()) {
    if (name == "m.in_proj.weight") continue;
    plain_store.get(name) = cond_store.get(name);
  }
  NdArray& w = cond_store.get("m.in_proj.weight");  // [4 + 3, 16]
  NdArray& pw = plain_store.get("m.in_proj.weight");
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      if (r < 4) pw.at({r, c}) = w.at({r, c});
      else w.at({r, c}) = 0.0;
    }
  const NdArray x = random_array({1, 3, 6, 4}, 9);
  const NdArray zero({1, 3, 6, 3});
  EXPECT_EQ(run(cond, cond_store, x, &zero), run(plain, plain_store, x));
}

TEST(MambaBlock, PriorShapeMismatchThrows) {
  ParameterStore store;
  Rng rng(9);
  MambaBlock block(store, "m", small_config(Direction::kBi, 3), rng);
  const NdArray x = random_array({1, 2, 5, 4}, 1);
  const NdArray bad({1, 2, 5, 2});
  EXPECT_THROW(run(block, store, x, &bad), ShapeError);
  EXPECT_THROW(run(block, store, x), ShapeError);
}

TEST(MambaBlock, DirectionalParametersAreIndependent) {
  ParameterStore uni_store, bi_store;
  Rng r1(10), r2(10);
  MambaBlock(uni_store, "m", small_config(Direction::kUni), r1);
  MambaBlock(bi_store, "m", small_config(Direction::kBi), r2);
  EXPECT_TRUE(bi_store.contains("m.ssm_bwd.a_log"));
  EXPECT_FALSE(uni_store.contains("m.ssm_bwd.a_log"));
  EXPECT_GT(bi_store.scalar_count(), uni_store.scalar_count());
}

TEST(MambaBlock, ParallelScanMatchesSequential) {
  ParameterStore store;
  Rng rng(11);
  MambaBlock block(store, "m", small_config(Direction::kBi), rng);
  const NdArray x = random_array({1, 2, 150, 4}, 12);
  EXPECT_TRUE(testing::arrays_near(run(block, store, x, nullptr, true),
                                   run(block, store, x, nullptr, false), 1e-12));
}

class MambaGradient : public ::testing::TestWithParam<Direction> {};

TEST_P(MambaGradient, ParametersAndInputsMatchFiniteDifferences) {
  ParameterStore store;
  Rng rng(12);
  MambaBlock block(store, "m", small_config(GetParam(), 2), rng);
  const NdArray x = random_array({1, 2, 5, 4}, 13);
  const NdArray h = random_array({1, 2, 5, 2}, 14);
  const auto r = check::check_parameter_gradients(store, [&](ParamBinding& p) {
    Tape& t = p.tape();
    return check::random_projection(
        block(p, ForwardContext{}, t.constant(x), t.constant(h)), 15);
  });
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst << " " << r.worst_analytic << " " << r.worst_numeric;

  auto loss = [&](Tape& t, const std::vector<Var>& v) {
    ParamBinding p(t, store, false);
    return check::random_projection(block(p, ForwardContext{}, v[0], v[1]), 16);
  };
  const auto ri = check::check_gradients(loss, {x, h});
  EXPECT_LT(ri.max_rel_error, kGradTol) << ri.worst << " " << ri.worst_analytic << " " << ri.worst_numeric;
}

INSTANTIATE_TEST_SUITE_P(Directions, MambaGradient,
                         ::testing::Values(Direction::kUni, Direction::kBi));

TEST(MambaBlock, TrainingDropoutNeedsRng) {
  ParameterStore store;
  Rng rng(13);
  MambaBlock block(store, "m", small_config(Direction::kBi), rng);
  Tape t;
  ParamBinding p(t, store);
  ForwardContext ctx;
  ctx.training = true;
  EXPECT_THROW(block(p, ctx, t.constant(NdArray({1, 1, 3, 4}))), std::invalid_argument);
}

}  // namespace
}  // namespace ssmdiff::mamba
