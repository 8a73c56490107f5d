// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/model/noise_model.hpp"

#include <cmath>

namespace ssmdiff::model {

namespace {

std::string direction_name(mamba::Direction d) {
  return d == mamba::Direction::kBi ? "bi" : "uni";
}

mamba::Direction parse_direction(const std::string& s) {
  if (s == "bi") return mamba::Direction::kBi;
  if (s == "uni") return mamba::Direction::kUni;
  throw ConfigError("model.direction must be \"uni\" or \"bi\", got \"" + s + "\"");
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(channels, "channels");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(nodes, "nodes");
  positive(length, "length");
  positive(expand, "expand");
  positive(conv_width, "conv_width");
  positive(state, "state");
  if (channels % heads) throw ConfigError("model.channels must be divisible by model.heads");
  if (resolved_virtual_nodes() > nodes) {
    throw ConfigError("model.virtual_nodes must not exceed model.nodes");
  }
  if (diffusion_steps < 2) throw ConfigError("model.diffusion_steps must be >= 2");
  if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0)) {
    throw ConfigError("need 0 < model.beta_min < model.beta_max < 1");
  }
  if (step_embedding_dim == 0 || step_embedding_dim % 2) {
    throw ConfigError("model.step_embedding_dim must be even and positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must be in [0, 1)");
}

Json ModelConfig::to_json() const {
  return Json{{"channels", channels},
              {"layers", layers},
              {"heads", heads},
              {"virtual_nodes", virtual_nodes},
              {"nodes", nodes},
              {"length", length},
              {"diffusion_steps", diffusion_steps},
              {"beta_min", beta_min},
              {"beta_max", beta_max},
              {"step_embedding_dim", step_embedding_dim},
              {"expand", expand},
              {"conv_width", conv_width},
              {"state", state},
              {"dropout", dropout},
              {"direction", direction_name(direction)}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  std::string dir = direction_name(c.direction);
  FieldReader r(j, "model");
  r.read("channels", c.channels)
      .read("layers", c.layers)
      .read("heads", c.heads)
      .read("virtual_nodes", c.virtual_nodes)
      .read("nodes", c.nodes)
      .read("length", c.length)
      .read("diffusion_steps", c.diffusion_steps)
      .read("beta_min", c.beta_min)
      .read("beta_max", c.beta_max)
      .read("step_embedding_dim", c.step_embedding_dim)
      .read("expand", c.expand)
      .read("conv_width", c.conv_width)
      .read("state", c.state)
      .read("dropout", c.dropout)
      .read("direction", dir);
  r.finish();
  c.direction = parse_direction(dir);
  c.validate();
  return c;
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(to_json().dump()); }

NdArray sinusoidal_embedding(std::size_t t, std::size_t dim) {
  if (dim == 0 || dim % 2) throw std::invalid_argument("sinusoidal_embedding: dim must be even");
  const std::size_t half = dim / 2;
  NdArray out({dim});
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -double(k) / double(half));
    out[k] = std::sin(double(t) * freq);
    out[half + k] = std::cos(double(t) * freq);
  }
  return out;
}

StepEmbedding::StepEmbedding(ParameterStore& store, const std::string& name,
                             std::size_t dim, std::size_t width, Rng& rng)
    : dim_(dim),
      fc1_(store, name + ".fc1", dim, width, rng),
      fc2_(store, name + ".fc2", width, width, rng) {}

Var StepEmbedding::operator()(ParamBinding& p, const std::vector<std::size_t>& steps) const {
  NdArray table({steps.size(), dim_});
  for (std::size_t b = 0; b < steps.size(); ++b) {
    const NdArray e = sinusoidal_embedding(steps[b], dim_);
    std::copy(e.data().begin(), e.data().end(), table.ptr() + b * dim_);
  }
  Var h = ops::silu(fc1_(p, p.tape().constant(std::move(table))));
  return ops::silu(fc2_(p, h));
}

NoiseModel::NoiseModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.channels;
  mamba::MambaConfig mc;
  mc.d_model = d;
  mc.expand = config_.expand;
  mc.conv_width = config_.conv_width;
  mc.state = config_.state;
  mc.dropout = config_.dropout;
  mc.direction = config_.direction;
  const graph::AttentionConfig ac{d, config_.nodes, config_.resolved_virtual_nodes(),
                                  config_.heads, 0.0};

  cfem_in_ = Linear(store_, "cfem.in", 1, d, rng);
  cfem_mamba_ = mamba::MambaBlock(store_, "cfem.mamba", mc, rng);
  cfem_attn_ = graph::VirtualNodeAttention(store_, "cfem.attn", ac, rng);
  cfem_mpnn_ = graph::Mpnn(store_, "cfem.mpnn", d, rng);
  cfem_mlp1_ = Linear(store_, "cfem.mlp1", d, d, rng);
  cfem_mlp2_ = Linear(store_, "cfem.mlp2", d, d, rng);

  step_emb_ = StepEmbedding(store_, "step", config_.step_embedding_dim, d, rng);
  input_ = Linear(store_, "input", 3, d, rng);

  mamba::MambaConfig nc = mc;
  nc.d_cond = d;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string n = "nem" + std::to_string(l);
    Block b;
    b.step_proj = Linear(store_, n + ".step", d, d, rng);
    b.mamba = mamba::MambaBlock(store_, n + ".mamba", nc, rng);
    b.attn = graph::VirtualNodeAttention(store_, n + ".attn", ac, rng);
    b.mpnn = graph::Mpnn(store_, n + ".mpnn", d, rng);
    b.mid = Linear(store_, n + ".mid", d, 2 * d, rng);
    b.out = Linear(store_, n + ".out", d, 2 * d, rng);
    blocks_.push_back(std::move(b));
  }
  head1_ = Linear(store_, "head1", d, d, rng);
  head2_ = Linear(store_, "head2", d, 1, rng, Init::kZero);
}

Var NoiseModel::prior(ParamBinding& p, const ForwardContext& ctx, Var interp,
                      Var a_hat) const {
  Shape s = interp.shape();
  if (s.size() != 3) throw ShapeError("prior", "interp must be [B, N, L], got " + shape_str(s));
  s.push_back(1);
  Var h = cfem_in_(p, ops::reshape(interp, s));
  h = cfem_mamba_(p, ctx, h);
  h = cfem_attn_(p, h);
  h = cfem_mpnn_(p, h, a_hat);
  return cfem_mlp2_(p, ops::silu(cfem_mlp1_(p, h)));
}

std::pair<Var, Var> NoiseModel::block(ParamBinding& p, const ForwardContext& ctx,
                                      std::size_t layer, Var h_in, Var prior,
                                      Var step_emb, Var a_hat) const {
  const Block& b = blocks_.at(layer);
  const Shape hs = h_in.shape();
  const std::size_t B = hs[0], d = config_.channels;
  Var e = ops::reshape(b.step_proj(p, step_emb), {B, 1, 1, d});
  Var u = ops::add(h_in, ops::broadcast_to(e, hs));
  u = b.mamba(p, ctx, u, prior);
  u = b.attn(p, u);
  u = b.mpnn(p, u, a_hat);
  Var mid = b.mid(p, u);
  Var gated = ops::mul(ops::sigmoid(ops::slice(mid, 3, 0, d)),
                       ops::tanh(ops::slice(mid, 3, d, 2 * d)));
  Var out = b.out(p, gated);
  Var next = ops::add(h_in, ops::slice(out, 3, 0, d));
  return {next, ops::slice(out, 3, d, 2 * d)};
}

void NoiseModel::check_input(const NoiseInput& in) const {
  const Shape& s = in.noisy.shape();
  if (s.size() != 3 || s[1] != config_.nodes || s[2] != config_.length ||
      in.interp.shape() != s || in.cond_mask.shape() != s || in.steps.size() != s[0]) {
    throw ShapeError("noise_model",
                     "inputs " + shape_str(s) + ", " + shape_str(in.interp.shape()) + ", " +
                         shape_str(in.cond_mask.shape()) + " with " +
                         std::to_string(in.steps.size()) + " steps; model expects [B, " +
                         std::to_string(config_.nodes) + ", " +
                         std::to_string(config_.length) + "]");
  }
  for (std::size_t t : in.steps) {
    if (t < 1 || t > config_.diffusion_steps) {
      throw std::out_of_range("noise_model: diffusion step " + std::to_string(t) +
                              " outside [1, " + std::to_string(config_.diffusion_steps) + "]");
    }
  }
}

Var NoiseModel::forward(ParamBinding& p, const ForwardContext& ctx, const NoiseInput& in,
                        const NdArray& a_hat, std::optional<Var> prior_in) const {
  check_input(in);
  Tape& t = p.tape();
  const Shape s = in.noisy.shape();
  const std::size_t B = s[0], N = s[1], L = s[2], d = config_.channels;
  Var a = t.constant(a_hat);

  Var pri = prior_in ? *prior_in : prior(p, ctx, t.constant(in.interp), a);
  const Shape want{B, N, L, d};
  if (pri.shape() != want) {
    if (pri.shape() != Shape{1, N, L, d}) {
      throw ShapeError("noise_model", "prior " + shape_str(pri.shape()) + " vs " + shape_str(want));
    }
    pri = ops::broadcast_to(pri, want);
  }

  NdArray feat({B, N, L, 3});
  for (std::size_t i = 0; i < B * N * L; ++i) {
    const double m = in.cond_mask[i];
    feat[3 * i] = (1.0 - m) * in.noisy[i];
    feat[3 * i + 1] = in.interp[i];
    feat[3 * i + 2] = m;
  }
  Var h = input_(p, t.constant(std::move(feat)));
  Var emb = step_emb_(p, in.steps);

  Var skip;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    auto [next, s_l] = block(p, ctx, l, h, pri, emb, a);
    h = next;
    skip = l == 0 ? s_l : ops::add(skip, s_l);
  }
  skip = ops::scale(skip, 1.0 / std::sqrt(double(blocks_.size())));
  Var out = head2_(p, ops::silu(head1_(p, skip)));
  return ops::reshape(out, {B, N, L});
}

NdArray NoiseModel::predict(const NoiseInput& in, const NdArray& a_hat) const {
  Tape t;
  ParamBinding p(t, store_, /*trainable=*/false);
  return forward(p, ForwardContext{}, in, a_hat).value();
}

}  // namespace ssmdiff::model
