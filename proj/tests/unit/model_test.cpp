// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "ssmdiff/check/gradcheck.hpp"
#include "ssmdiff/diffusion/diffusion.hpp"
#include "ssmdiff/graph/spatial.hpp"
#include "ssmdiff/model/checkpoint.hpp"
#include "ssmdiff/model/noise_model.hpp"
#include "support/test_util.hpp"

namespace ssmdiff::model {
namespace {

using testing::kGradTol;
using testing::random_array;

ModelConfig tiny_config(std::size_t nodes = 2, std::size_t length = 8) {
  ModelConfig c;
  c.channels = 4;
  c.layers = 1;
  c.heads = 2;
  c.nodes = nodes;
  c.length = length;
  c.state = 4;
  c.step_embedding_dim = 8;
  c.diffusion_steps = 10;
  return c;
}

NdArray line_graph(std::size_t n) {
  NdArray a({n, n});
  for (std::size_t i = 0; i + 1 < n; ++i) a.at({i, i + 1}) = a.at({i + 1, i}) = 0.5;
  return graph::normalize_adjacency(a);
}

NoiseInput random_input(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  NoiseInput in;
  const Shape s{batch, c.nodes, c.length};
  in.noisy = random_array(s, seed);
  in.interp = random_array(s, seed + 1);
  in.cond_mask = NdArray(s);
  Rng rng(seed + 2);
  std::bernoulli_distribution coin(0.5);
  for (double& m : in.cond_mask.data()) m = coin(rng);
  for (std::size_t b = 0; b < batch; ++b) in.steps.push_back(1 + (seed + b) % c.diffusion_steps);
  return in;
}

TEST(StepEmbedding, SinusoidPairAtBaseFrequency) {
  for (std::size_t t : {1u, 7u, 50u}) {
    const NdArray e = sinusoidal_embedding(t, 2);
    EXPECT_EQ(e[0], std::sin(double(t)));
    EXPECT_EQ(e[1], std::cos(double(t)));
  }
  EXPECT_THROW(sinusoidal_embedding(1, 3), std::invalid_argument);
}

TEST(StepEmbedding, DeterministicAndDistinctOverAllSteps) {
  ParameterStore store;
  Rng rng(1);
  StepEmbedding emb(store, "step", 32, 16, rng);
  std::vector<std::size_t> steps(50);
  for (std::size_t t = 0; t < 50; ++t) steps[t] = t + 1;
  auto eval = [&] {
    Tape tape;
    ParamBinding p(tape, store, false);
    return emb(p, steps).value();
  };
  const NdArray a = eval();
  EXPECT_EQ(a, eval());
  double min_gap = INFINITY, min_raw_gap = INFINITY;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = i + 1; j < 50; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < 16; ++k) g += std::pow(a.at({i, k}) - a.at({j, k}), 2);
      min_gap = std::min(min_gap, std::sqrt(g));
      const NdArray ei = sinusoidal_embedding(i + 1, 32), ej = sinusoidal_embedding(j + 1, 32);
      double r = 0.0;
      for (std::size_t k = 0; k < 32; ++k) r += std::pow(ei[k] - ej[k], 2);
      min_raw_gap = std::min(min_raw_gap, std::sqrt(r));
    }
  EXPECT_GT(min_raw_gap, 0.0);
  EXPECT_GT(min_gap, 0.0);
}

TEST(ModelConfig, JsonRoundTripAndStrictKeys) {
  ModelConfig c = tiny_config();
  c.direction = mamba::Direction::kUni;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  Json bad = c.to_json();
  bad["chanels"] = 4;
  try {
    ModelConfig::from_json(bad);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("chanels"), std::string::npos);
    EXPECT_NE(msg.find("channels"), std::string::npos);
  }
  Json bad_dir = c.to_json();
  bad_dir["direction"] = "sideways";
  EXPECT_THROW(ModelConfig::from_json(bad_dir), ConfigError);
  ModelConfig heads = c;
  heads.heads = 3;
  EXPECT_THROW(heads.validate(), ConfigError);
}

TEST(NoiseModel, OutputShapeMatchesSeriesShape) {
  for (auto [n, l] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {2, 8}, {5, 3}}) {
    const ModelConfig c = tiny_config(n, l);
    NoiseModel m(c, 1);
    const NoiseInput in = random_input(c, 2, 3);
    EXPECT_EQ(m.predict(in, line_graph(n)).shape(), (Shape{2, n, l}));
  }
}

TEST(NoiseModel, RejectsMismatchedInputs) {
  const ModelConfig c = tiny_config();
  NoiseModel m(c, 1);
  NoiseInput in = random_input(c, 1, 3);
  in.steps[0] = 11;
  EXPECT_THROW(m.predict(in, line_graph(2)), std::out_of_range);
  NoiseInput wrong = random_input(tiny_config(3), 1, 3);
  EXPECT_THROW(m.predict(wrong, line_graph(2)), ShapeError);
}

TEST(NoiseModel, DeterministicInEvalMode) {
  const ModelConfig c = tiny_config(3, 6);
  const NoiseInput in = random_input(c, 2, 5);
  NoiseModel a(c, 9), b(c, 9);
  EXPECT_EQ(a.predict(in, line_graph(3)), a.predict(in, line_graph(3)));
  EXPECT_EQ(a.predict(in, line_graph(3)), b.predict(in, line_graph(3)));
}

TEST(NoiseModel, NoisyValuesAtConditioningEntriesAreIgnored) {
  const ModelConfig c = tiny_config(3, 6);
  NoiseModel m(c, 2);
  NoiseInput in = random_input(c, 1, 6);
  const NdArray base = m.predict(in, line_graph(3));
  for (std::size_t i = 0; i < in.noisy.size(); ++i)
    if (in.cond_mask[i] != 0.0) in.noisy[i] += 5.0;
  EXPECT_EQ(m.predict(in, line_graph(3)), base);
}

TEST(NoiseModel, PriorIsZeroForZeroSeries) {
  const ModelConfig c = tiny_config(3, 5);
  NoiseModel m(c, 3);
  Tape t;
  ParamBinding p(t, m.params(), false);
  const NdArray pri =
      m.prior(p, ForwardContext{}, t.constant(NdArray({2, 3, 5})), t.constant(line_graph(3))).value();
  for (double v : pri.data()) EXPECT_EQ(v, 0.0);
}

TEST(NoiseModel, PriorOnSingleNodeGraphIsFinite) {
  const ModelConfig c = tiny_config(1, 5);
  NoiseModel m(c, 4);
  Tape t;
  ParamBinding p(t, m.params(), false);
  const NdArray pri = m.prior(p, ForwardContext{}, t.constant(random_array({1, 1, 5}, 1)),
                              t.constant(graph::normalize_adjacency(NdArray({1, 1}))))
                          .value();
  EXPECT_EQ(pri.shape(), (Shape{1, 1, 5, 4}));
  EXPECT_TRUE(pri.all_finite());
}

TEST(NoiseModel, ZeroOutputProjectionsKeepResidualStream) {
  ModelConfig c = tiny_config(3, 5);
  c.layers = 3;
  NoiseModel m(c, 5);
  for (std::size_t l = 0; l < 3; ++l) {
    m.params().get("nem" + std::to_string(l) + ".out.weight") = NdArray({4, 8});
  }
  const NoiseInput in = random_input(c, 2, 7);
  Tape t;
  ParamBinding p(t, m.params(), false);
  Var a = t.constant(line_graph(3));
  Var pri = m.prior(p, ForwardContext{}, t.constant(in.interp), a);
  const NdArray h0 = random_array({2, 3, 5, 4}, 8);
  Var h = t.constant(h0);
  Var emb = t.constant(random_array({2, 4}, 9));
  for (std::size_t l = 0; l < 3; ++l) {
    auto [next, skip] = m.block(p, ForwardContext{}, l, h, pri, emb, a);
    EXPECT_EQ(next.value(), h0);
    for (double v : skip.value().data()) EXPECT_EQ(v, 0.0);
    h = next;
  }
  // With every skip at zero the prediction is the head's constant response.
  const NdArray eps = m.predict(in, line_graph(3));
  for (double v : eps.data()) EXPECT_EQ(v, eps[0]);
}

TEST(NoiseModel, DirectionChangesOnlyMambaParameters) {
  ModelConfig bi = tiny_config(3, 5), uni = bi;
  uni.direction = mamba::Direction::kUni;
  NoiseModel mb(bi, 1), mu(uni, 1);
  auto outside_mamba = [](const ParameterStore& s) {
    std::map<std::string, Shape> out;
    for (const auto& n : s.names())
      if (n.find(".mamba.") == std::string::npos) out[n] = s.get(n).shape();
    return out;
  };
  EXPECT_EQ(outside_mamba(mb.params()), outside_mamba(mu.params()));
  EXPECT_GT(mb.params().scalar_count(), mu.params().scalar_count());
  for (const auto& n : mb.params().names())
    if (!mu.params().contains(n)) {
      EXPECT_NE(n.find("_bwd"), std::string::npos) << n;
    }
}

TEST(NoiseModelGradient, ConditioningModule) {
  const ModelConfig c = tiny_config();
  NoiseModel m(c, 11);
  const NdArray interp = random_array({1, 2, 8}, 12);
  ParameterStore cfem;
  for (const auto& n : m.params().names())
    if (n.rfind("cfem.", 0) == 0) cfem.add(n, m.params().get(n));
  const auto r = check::check_parameter_gradients(cfem, [&](ParamBinding& p) {
    Tape& t = p.tape();
    return check::random_projection(
        m.prior(p, ForwardContext{}, t.constant(interp), t.constant(line_graph(2))), 13);
  });
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(NoiseModelGradient, NoiseEstimationBlock) {
  const ModelConfig c = tiny_config();
  NoiseModel m(c, 14);
  const NdArray h = random_array({1, 2, 8, 4}, 15), pri = random_array({1, 2, 8, 4}, 16),
                emb = random_array({1, 4}, 17);
  ParameterStore nem;
  for (const auto& n : m.params().names())
    if (n.rfind("nem0.", 0) == 0) nem.add(n, m.params().get(n));
  const auto r = check::check_parameter_gradients(nem, [&](ParamBinding& p) {
    Tape& t = p.tape();
    auto [next, skip] = m.block(p, ForwardContext{}, 0, t.constant(h), t.constant(pri),
                                t.constant(emb), t.constant(line_graph(2)));
    return ops::add(check::random_projection(next, 18), check::random_projection(skip, 19));
  });
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(NoiseModelGradient, EndToEndMaskedLoss) {
  const ModelConfig c = tiny_config();  // 2 nodes, L = 8, d = 4, one block
  NoiseModel m(c, 20);
  // Make the zero-initialised head weights generic so every path is exercised.
  m.params().get("head2.weight") = random_array({4, 1}, 21, 0.5);
  const NoiseInput in = random_input(c, 2, 22);
  const NdArray eps = random_array({2, 2, 8}, 23);
  NdArray target({2, 2, 8});
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = 1.0 - in.cond_mask[i];
  const auto r = check::check_parameter_gradients(m.params(), [&](ParamBinding& p) {
    Var eh = m.forward(p, ForwardContext{}, in, line_graph(2));
    return diffusion::masked_loss(p.tape().constant(eps), eh, target);
  });
  EXPECT_LT(r.max_rel_error, kGradTol) << r.worst << " " << r.worst_analytic << " "
                                       << r.worst_numeric;
  EXPECT_EQ(r.checked, m.params().scalar_count());
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("ssmdiff_ckpt_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  const ModelConfig c = tiny_config(3, 6);
  NoiseModel m(c, 30);
  for (const auto& n : m.params().names()) {
    NdArray& v = m.params().get(n);
    v = random_array(v.shape(), std::hash<std::string>{}(n), 0.3);
  }
  save_checkpoint(m, dir_ / "m.ckpt");
  const NoiseModel loaded = load_checkpoint(dir_ / "m.ckpt");
  for (const auto& n : m.params().names()) EXPECT_EQ(loaded.params().get(n), m.params().get(n));
  const NoiseInput in = random_input(c, 2, 31);
  EXPECT_EQ(loaded.predict(in, line_graph(3)), m.predict(in, line_graph(3)));

  NoiseModel other(c, 99);
  load_parameters(other, dir_ / "m.ckpt");
  EXPECT_EQ(other.predict(in, line_graph(3)), m.predict(in, line_graph(3)));
}

TEST_F(CheckpointTest, RejectsMismatchAndCorruption) {
  const ModelConfig c = tiny_config(3, 6);
  save_checkpoint(NoiseModel(c, 1), dir_ / "m.ckpt");
  ModelConfig different = c;
  different.channels = 8;
  NoiseModel m2(different, 1);
  EXPECT_THROW(load_parameters(m2, dir_ / "m.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), CheckpointError);
  const auto size = std::filesystem::file_size(dir_ / "m.ckpt");
  std::filesystem::resize_file(dir_ / "m.ckpt", size - 10);
  EXPECT_THROW(load_checkpoint(dir_ / "m.ckpt"), CheckpointError);
  std::ofstream(dir_ / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir_ / "junk.ckpt"), CheckpointError);
}

}  // namespace
}  // namespace ssmdiff::model
