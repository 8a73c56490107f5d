// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/check/grad_suite.hpp"

#include <algorithm>
#include <functional>

#include "ssmdiff/autodiff/ops.hpp"
#include "ssmdiff/autodiff/random.hpp"
#include "ssmdiff/diffusion/diffusion.hpp"
#include "ssmdiff/graph/spatial.hpp"
#include "ssmdiff/mamba/mamba_block.hpp"
#include "ssmdiff/model/noise_model.hpp"
#include "ssmdiff/ssm/selective_scan.hpp"

namespace ssmdiff::check {

namespace {

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  NdArray rand(const Shape& s, double sd = 1.0) {
    Rng rng(derive_seed(seed_, counter_++));
    return randn(s, rng, sd);
  }

  // Output projected on a fixed random direction.
  void op(const std::string& name, std::function<Var(const std::vector<Var>&)> f,
          std::vector<NdArray> inputs) {
    const std::uint64_t proj = derive_seed(seed_, counter_++);
    auto loss = [&](Tape&, const std::vector<Var>& v) { return random_projection(f(v), proj); };
    entries_.push_back({"op." + name, check_gradients(loss, std::move(inputs))});
  }

  void params(const std::string& name, ParameterStore& store, const ParamLossFn& loss) {
    entries_.push_back({name, check_parameter_gradients(store, loss)});
  }

  void inputs(const std::string& name, const LossFn& loss, std::vector<NdArray> in) {
    entries_.push_back({name, check_gradients(loss, std::move(in))});
  }

  std::uint64_t next_seed() { return derive_seed(seed_, counter_++); }
  std::vector<SuiteEntry> take() { return std::move(entries_); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::vector<SuiteEntry> entries_;
};

NdArray path_graph(std::size_t n) {
  NdArray a({n, n});
  for (std::size_t i = 0; i + 1 < n; ++i) a.at({i, i + 1}) = a.at({i + 1, i}) = 1.0;
  return graph::normalize_adjacency(a);
}

ParameterStore subset(const ParameterStore& all, const std::string& prefix) {
  ParameterStore out;
  for (const auto& n : all.names())
    if (n.rfind(prefix, 0) == 0) out.add(n, all.get(n));
  return out;
}

void primitive_ops(Suite& s) {
  using namespace ops;
  s.op("add", [](auto& v) { return add(v[0], v[1]); }, {s.rand({2, 3}), s.rand({2, 3})});
  s.op("sub", [](auto& v) { return sub(v[0], v[1]); }, {s.rand({2, 3}), s.rand({2, 3})});
  s.op("mul", [](auto& v) { return mul(v[0], v[1]); }, {s.rand({2, 3}), s.rand({2, 3})});
  s.op("scale", [](auto& v) { return scale(v[0], -1.7); }, {s.rand({4})});
  s.op("add_scalar", [](auto& v) { return add_scalar(v[0], 0.3); }, {s.rand({4})});
  s.op("add_bias", [](auto& v) { return add_bias(v[0], v[1]); }, {s.rand({2, 2, 3}), s.rand({3})});
  s.op("broadcast_to", [](auto& v) { return broadcast_to(v[0], {2, 3, 4}); }, {s.rand({2, 1, 4})});
  s.op("matmul", [](auto& v) { return matmul(v[0], v[1]); }, {s.rand({2, 3, 4}), s.rand({4, 5})});
  s.op("bmm", [](auto& v) { return bmm(v[0], v[1]); }, {s.rand({2, 3, 4}), s.rand({2, 4, 2})});
  s.op("bmm_transposed", [](auto& v) { return bmm(v[0], v[1], true); },
       {s.rand({2, 3, 4}), s.rand({2, 5, 4})});
  s.op("mix_axis", [](auto& v) { return mix_axis(v[0], v[1], 1); },
       {s.rand({2, 3, 4}), s.rand({5, 3})});
  s.op("transpose", [](auto& v) { return transpose(v[0]); }, {s.rand({3, 4})});
  s.op("permute", [](auto& v) { return permute(v[0], {2, 0, 1}); }, {s.rand({2, 3, 4})});
  s.op("reshape", [](auto& v) { return reshape(v[0], {6, 2}); }, {s.rand({3, 4})});
  s.op("concat", [](auto& v) { return concat({v[0], v[1]}, 1); }, {s.rand({2, 3}), s.rand({2, 2})});
  s.op("slice", [](auto& v) { return slice(v[0], 1, 1, 3); }, {s.rand({2, 4})});
  s.op("reverse", [](auto& v) { return reverse(v[0], 1); }, {s.rand({2, 5, 2})});
  s.op("sum", [](auto& v) { return scale(sum(v[0]), 0.5); }, {s.rand({3, 2})});
  s.op("mean", [](auto& v) { return mean(v[0]); }, {s.rand({3, 2})});
  s.op("sigmoid", [](auto& v) { return sigmoid(v[0]); }, {s.rand({6})});
  s.op("silu", [](auto& v) { return silu(v[0]); }, {s.rand({6})});
  s.op("softplus", [](auto& v) { return softplus(v[0]); }, {s.rand({6})});
  s.op("tanh", [](auto& v) { return ops::tanh(v[0]); }, {s.rand({6})});
  s.op("exp", [](auto& v) { return ops::exp(v[0]); }, {s.rand({6})});
  s.op("square", [](auto& v) { return square(v[0]); }, {s.rand({6})});
  s.op("softmax", [](auto& v) { return softmax(v[0]); }, {s.rand({3, 5})});
  s.op("layer_norm", [](auto& v) { return layer_norm(v[0], v[1], v[2]); },
       {s.rand({2, 3, 5}), s.rand({5}), s.rand({5})});
  s.op("depthwise_conv1d", [](auto& v) { return depthwise_conv1d(v[0], v[1], v[2]); },
       {s.rand({2, 6, 3}), s.rand({3, 4}), s.rand({3})});
  const std::uint64_t drop_seed = s.next_seed();
  s.op("dropout",
       [drop_seed](auto& v) {
         Rng rng(drop_seed);  // same mask on every evaluation
         return dropout(v[0], 0.3, true, rng);
       },
       {s.rand({4, 5})});
  const std::vector<std::size_t> idx{2, 0, 2, 3};
  s.op("embedding_lookup", [&idx](auto& v) { return embedding_lookup(v[0], idx); },
       {s.rand({4, 3})});
  const NdArray mask({2, 3}, std::vector<double>{1, 0, 1, 1, 0, 0});
  s.op("masked_select", [&mask](auto& v) { return masked_select(v[0], mask); }, {s.rand({2, 3})});

  // Selective scan: softplus keeps the step sizes positive.
  for (bool parallel : {false, true}) {
    s.op(parallel ? "selective_scan_parallel" : "selective_scan",
         [parallel](auto& v) {
           return ssm::selective_scan(v[0], softplus(v[1]), v[2], v[3], v[4], v[5],
                                      {parallel, 4});
         },
         {s.rand({2, 7, 3}), s.rand({2, 7, 3}), s.rand({3, 2}, 0.5), s.rand({2, 7, 2}),
          s.rand({2, 7, 2}), s.rand({3})});
  }
}

void blocks(Suite& s) {
  for (auto dir : {mamba::Direction::kUni, mamba::Direction::kBi}) {
    const std::string name = dir == mamba::Direction::kUni ? "block.mamba_uni" : "block.mamba_bi";
    mamba::MambaConfig mc;
    mc.d_model = 4;
    mc.d_cond = 2;
    mc.state = 3;
    mc.direction = dir;
    ParameterStore store;
    Rng rng(s.next_seed());
    mamba::MambaBlock block(store, "m", mc, rng);
    const NdArray x = s.rand({1, 2, 5, 4}), h = s.rand({1, 2, 5, 2});
    const std::uint64_t proj = s.next_seed();
    s.params(name, store, [&](ParamBinding& p) {
      Tape& t = p.tape();
      return random_projection(block(p, ForwardContext{}, t.constant(x), t.constant(h)), proj);
    });
    s.inputs(name + ".inputs",
             [&](Tape& t, const std::vector<Var>& v) {
               ParamBinding p(t, store, false);
               return random_projection(block(p, ForwardContext{}, v[0], v[1]), proj);
             },
             {x, h});
  }

  {
    ParameterStore store;
    Rng rng(s.next_seed());
    graph::Mpnn mpnn(store, "g", 3, rng);
    const NdArray h = s.rand({1, 3, 4, 3}), a = path_graph(3);
    const std::uint64_t proj = s.next_seed();
    s.params("block.mpnn", store, [&](ParamBinding& p) {
      Tape& t = p.tape();
      return random_projection(mpnn(p, t.constant(h), t.constant(a)), proj);
    });
    s.inputs("block.mpnn.inputs",
             [&](Tape& t, const std::vector<Var>& v) {
               ParamBinding p(t, store, false);
               return random_projection(mpnn(p, v[0], t.constant(a)), proj);
             },
             {h});
  }

  {
    ParameterStore store;
    Rng rng(s.next_seed());
    graph::AttentionConfig ac;
    ac.width = 4;
    ac.nodes = 3;
    ac.virtual_nodes = 2;
    ac.heads = 2;
    graph::VirtualNodeAttention att(store, "att", ac, rng);
    const NdArray h = s.rand({1, 3, 2, 4});
    const std::uint64_t proj = s.next_seed();
    s.params("block.attention", store, [&](ParamBinding& p) {
      return random_projection(att(p, p.tape().constant(h)), proj);
    });
    s.inputs("block.attention.inputs",
             [&](Tape& t, const std::vector<Var>& v) {
               ParamBinding p(t, store, false);
               return random_projection(att(p, v[0]), proj);
             },
             {h});
  }
}

void model_checks(Suite& s) {
  model::ModelConfig c;
  c.channels = 4;
  c.layers = 1;
  c.heads = 2;
  c.nodes = 2;
  c.length = 8;
  c.state = 4;
  c.step_embedding_dim = 8;
  c.diffusion_steps = 10;
  model::NoiseModel m(c, s.next_seed());
  // The output head starts at zero; give it generic weights so every path
  // carries gradient.
  m.params().get("head2.weight") = s.rand({4, 1}, 0.5);
  const NdArray a_hat = path_graph(2);

  {
    ParameterStore cfem = subset(m.params(), "cfem.");
    const NdArray interp = s.rand({1, 2, 8});
    const std::uint64_t proj = s.next_seed();
    s.params("block.cfem", cfem, [&](ParamBinding& p) {
      Tape& t = p.tape();
      return random_projection(
          m.prior(p, ForwardContext{}, t.constant(interp), t.constant(a_hat)), proj);
    });
  }
  {
    ParameterStore nem = subset(m.params(), "nem0.");
    const NdArray h = s.rand({1, 2, 8, 4}), pri = s.rand({1, 2, 8, 4}), emb = s.rand({1, 4});
    const std::uint64_t p1 = s.next_seed(), p2 = s.next_seed();
    s.params("block.nem", nem, [&](ParamBinding& p) {
      Tape& t = p.tape();
      auto [next, skip] = m.block(p, ForwardContext{}, 0, t.constant(h), t.constant(pri),
                                  t.constant(emb), t.constant(a_hat));
      return ops::add(random_projection(next, p1), random_projection(skip, p2));
    });
  }
  {
    model::NoiseInput in;
    const Shape sh{2, 2, 8};
    in.noisy = s.rand(sh);
    in.interp = s.rand(sh);
    in.cond_mask = NdArray(sh);
    NdArray target(sh);
    Rng rng(s.next_seed());
    std::bernoulli_distribution coin(0.5);
    for (std::size_t k = 0; k < target.size(); ++k) {
      in.cond_mask[k] = coin(rng);
      target[k] = 1.0 - in.cond_mask[k];
    }
    in.steps = {3, 9};
    const NdArray eps = s.rand(sh);
    s.params("model.masked_loss", m.params(), [&](ParamBinding& p) {
      Var eh = m.forward(p, ForwardContext{}, in, a_hat);
      return diffusion::masked_loss(p.tape().constant(eps), eh, target);
    });
  }
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Suite s(seed);
  primitive_ops(s);
  blocks(s);
  model_checks(s);
  return s.take();
}

double max_error(const std::vector<SuiteEntry>& entries) {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.result.max_rel_error);
  return m;
}

}  // namespace ssmdiff::check
