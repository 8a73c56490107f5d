// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/pipeline/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "ssmdiff/pipeline/data.hpp"

namespace ssmdiff::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Streams derived from the training seed.
constexpr std::uint64_t kWindowStream = 1, kDropoutStream = 2, kPoolStream = 3;
constexpr std::uint64_t kValidationStream = 1000;

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (windows_per_epoch == 0) throw ConfigError("train.windows_per_epoch must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (milestones.size() != milestone_rates.size()) {
    throw ConfigError("train.milestones and train.milestone_rates differ in length");
  }
  double prev_m = 0.0, prev_r = learning_rate;
  for (std::size_t k = 0; k < milestones.size(); ++k) {
    if (!(milestones[k] > prev_m && milestones[k] < 1.0)) {
      throw ConfigError("train.milestones must increase strictly within (0, 1)");
    }
    if (!(milestone_rates[k] > 0.0 && milestone_rates[k] < prev_r)) {
      throw ConfigError("train.milestone_rates must be positive and decreasing");
    }
    prev_m = milestones[k];
    prev_r = milestone_rates[k];
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1 and train.adam_beta2 must be in [0, 1)");
  }
  if (!(adam_epsilon > 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("train.adam_epsilon must be positive and train.weight_decay >= 0");
  }
  if (validation_draws == 0) throw ConfigError("train.validation_draws must be positive");
  masking::parse_strategy(strategy);
}

double TrainConfig::rate_for_epoch(std::size_t epoch) const {
  double lr = learning_rate;
  for (std::size_t k = 0; k < milestones.size(); ++k) {
    const auto from = static_cast<std::size_t>(std::floor(milestones[k] * double(epochs)));
    if (epoch >= from) lr = milestone_rates[k];
  }
  return lr;
}

Json TrainConfig::to_json() const {
  return Json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"windows_per_epoch", windows_per_epoch},
              {"learning_rate", learning_rate},
              {"milestones", milestones},
              {"milestone_rates", milestone_rates},
              {"strategy", strategy},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"adam_epsilon", adam_epsilon},
              {"weight_decay", weight_decay},
              {"validation_draws", validation_draws}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  FieldReader r(j, "train");
  r.read("epochs", c.epochs)
      .read("batch_size", c.batch_size)
      .read("windows_per_epoch", c.windows_per_epoch)
      .read("learning_rate", c.learning_rate)
      .read("milestones", c.milestones)
      .read("milestone_rates", c.milestone_rates)
      .read("strategy", c.strategy)
      .read("adam_beta1", c.adam_beta1)
      .read("adam_beta2", c.adam_beta2)
      .read("adam_epsilon", c.adam_epsilon)
      .read("weight_decay", c.weight_decay)
      .read("validation_draws", c.validation_draws);
  r.finish();
  try {
    c.validate();
  } catch (const masking::MaskError& e) {
    throw ConfigError(std::string("train.strategy: ") + e.what());
  }
  return c;
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& name : store.names()) {
    m_.emplace(name, NdArray(store.get(name).shape()));
    v_.emplace(name, NdArray(store.get(name).shape()));
  }
}

void Adam::step(ParameterStore& store, const std::map<std::string, NdArray>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (const auto& [name, g] : grads) {
    NdArray& p = store.get(name);
    NdArray& m = m_.at(name);
    NdArray& v = v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + config_.weight_decay * p[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

Batch make_batch(const NdArray& x0, const std::vector<masking::MaskPair>& masks,
                 const diffusion::DiffusionSchedule& schedule,
                 const std::vector<std::size_t>& steps, Rng& rng) {
  if (x0.rank() != 3 || masks.size() != x0.dim(0) || steps.size() != x0.dim(0)) {
    throw ShapeError("make_batch", "x0 " + shape_str(x0.shape()) + " with " +
                                       std::to_string(masks.size()) + " masks and " +
                                       std::to_string(steps.size()) + " steps");
  }
  const std::size_t B = x0.dim(0), N = x0.dim(1), L = x0.dim(2), w = N * L;
  Batch b;
  b.x0 = x0;
  b.cond = NdArray(x0.shape());
  b.target = NdArray(x0.shape());
  for (std::size_t s = 0; s < B; ++s) {
    const masking::MaskPair& mp = masks[s];
    if (mp.observed.rows() != N || mp.observed.cols() != L) {
      throw ShapeError("make_batch", "mask shape does not match the window");
    }
    const masking::Mask cond = mp.conditioning();
    for (std::size_t k = 0; k < w; ++k) {
      b.cond[s * w + k] = cond[k];
      b.target[s * w + k] = mp.target[k];
    }
  }
  NdArray given(x0.shape());
  for (std::size_t k = 0; k < x0.size(); ++k) given[k] = x0[k] * b.cond[k];
  b.interp = linear_interpolate(given, b.cond).series;
  b.eps = randn(x0.shape(), rng);
  b.noisy = NdArray(x0.shape());
  b.steps = steps;
  for (std::size_t s = 0; s < B; ++s) {
    NdArray xs({N, L}), es({N, L});
    std::copy(x0.ptr() + s * w, x0.ptr() + (s + 1) * w, xs.ptr());
    std::copy(b.eps.ptr() + s * w, b.eps.ptr() + (s + 1) * w, es.ptr());
    const NdArray xt = diffusion::forward_noise(xs, steps[s], es, schedule);
    std::copy(xt.ptr(), xt.ptr() + w, b.noisy.ptr() + s * w);
  }
  return b;
}

Batch make_batch(const NdArray& x0, const std::vector<masking::MaskPair>& masks,
                 const diffusion::DiffusionSchedule& schedule, Rng& rng) {
  std::uniform_int_distribution<std::size_t> step(1, schedule.steps());
  std::vector<std::size_t> steps(x0.rank() ? x0.dim(0) : 0);
  for (auto& t : steps) t = step(rng);
  return make_batch(x0, masks, schedule, steps, rng);
}

Trainer::Trainer(model::NoiseModel& model, const TrainConfig& config, NdArray a_hat)
    : model_(model),
      a_hat_(std::move(a_hat)),
      adam_(model.params(), AdamConfig{config.adam_beta1, config.adam_beta2,
                                       config.adam_epsilon, config.weight_decay}) {}

double Trainer::step(const Batch& batch, double lr, Rng& dropout_rng) {
  tape_.clear();
  ParamBinding p(tape_, model_.params(), /*trainable=*/true);
  ForwardContext ctx;
  ctx.training = true;
  ctx.rng = &dropout_rng;
  const model::NoiseInput in{batch.noisy, batch.interp, batch.cond, batch.steps};
  Var eps_hat = model_.forward(p, ctx, in, a_hat_);
  Var loss = diffusion::masked_loss(tape_.constant(batch.eps), eps_hat, batch.target);
  const double value = loss.value().item();
  if (!std::isfinite(value)) return value;
  tape_.backward(loss);
  adam_.step(model_.params(), p.gradients(), lr);
  return value;
}

std::pair<double, std::size_t> Trainer::evaluate(const Batch& batch) {
  const model::NoiseInput in{batch.noisy, batch.interp, batch.cond, batch.steps};
  const NdArray eps_hat = model_.predict(in, a_hat_);
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < eps_hat.size(); ++k) {
    if (batch.target[k] == 0.0) continue;
    const double d = eps_hat[k] - batch.eps[k];
    sse += d * d;
    ++count;
  }
  return {sse, count};
}

namespace {

masking::Mask window_mask(const masking::Mask& m, std::size_t start, std::size_t length) {
  masking::Mask out(m.rows(), length);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t t = 0; t < length; ++t) out.set(i, t, m(i, start + t));
  return out;
}

}  // namespace

TrainResult train(model::NoiseModel& model, const TrainData& data, const TrainConfig& config,
                  std::uint64_t seed, const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  const auto t_start = Clock::now();
  const model::ModelConfig& mc = model.config();
  const std::size_t N = mc.nodes, L = mc.length;
  if (data.train.rank() != 2 || data.train.dim(0) != N || data.train.dim(1) < L) {
    throw TrainingError("training series " + shape_str(data.train.shape()) +
                        " does not fit windows of [" + std::to_string(N) + ", " +
                        std::to_string(L) + "]");
  }
  const masking::Strategy strategy = masking::parse_strategy(config.strategy);
  const auto schedule = diffusion::quadratic_schedule(mc.diffusion_steps, mc.beta_min, mc.beta_max);

  std::vector<masking::Mask> own_pool;
  const std::vector<masking::Mask>* pool = data.pool;
  if (!pool && (strategy == masking::Strategy::kHistorical ||
                strategy == masking::Strategy::kHybridHistorical)) {
    Rng pool_rng(derive_seed(seed, kPoolStream));
    for (int k = 0; k < 64; ++k) own_pool.push_back(masking::simulate_failures(N, L, {}, pool_rng));
    pool = &own_pool;
  }

  Rng rng(derive_seed(seed, kWindowStream));
  Rng dropout_rng(derive_seed(seed, kDropoutStream));
  Trainer trainer(model, config, data.a_hat);
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> val_starts;
  if (data.val.rank() == 2 && data.val.dim(1) >= L) {
    for (std::size_t s = 0; s + L <= data.val.dim(1); s += L) val_starts.push_back(s);
  }
  std::map<std::string, NdArray> best_params;
  auto snapshot = [&] {
    for (const auto& n : model.params().names()) best_params[n] = model.params().get(n);
  };

  const std::size_t max_start = data.train.dim(1) - L;
  std::uniform_int_distribution<std::size_t> offset(0, max_start);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    const double lr = config.rate_for_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t done = 0; done < config.windows_per_epoch; done += config.batch_size) {
      const std::size_t B = std::min(config.batch_size, config.windows_per_epoch - done);
      const masking::PointOptions point{unit(rng), /*keep_rate_on_retry=*/false};
      std::vector<std::size_t> starts;
      std::vector<masking::MaskPair> masks;
      std::size_t attempts = 0;
      while (starts.size() < B) {
        if (++attempts > 100 * B) {
          throw TrainingError("could not draw training windows with targets; the training "
                              "split is too sparse");
        }
        const std::size_t s = offset(rng);
        const masking::Mask obs = window_mask(data.train_observed, s, L);
        if (obs.none()) continue;
        try {
          masks.push_back(masking::sample_strategy(obs, strategy, pool, rng, point));
        } catch (const masking::MaskError&) {
          continue;
        }
        starts.push_back(s);
      }
      const Batch batch = make_batch(gather_windows(data.train, starts, L), masks, schedule, rng);
      double loss = std::numeric_limits<double>::quiet_NaN();
      std::string cause;
      try {
        loss = trainer.step(batch, lr, dropout_rng);
      } catch (const InvariantError& e) {
        // NaN parameters or inputs surface as a nonpositive scan step.
        cause = e.what();
      }
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: loss " << loss << " at epoch " << epoch << ", batch "
            << batches << " (lr " << lr << ", optimizer step " << trainer.optimizer().steps()
            << ")";
        if (!cause.empty()) msg << ": " << cause;
        throw TrainingError(msg.str());
      }
      loss_sum += loss;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    stats.train_loss = loss_sum / double(batches);
    stats.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_starts.empty()) {
      Rng val_rng(derive_seed(seed, kValidationStream + epoch));
      double sse = 0.0;
      std::size_t count = 0;
      for (std::size_t b0 = 0; b0 < val_starts.size(); b0 += config.batch_size) {
        std::vector<std::size_t> starts;
        std::vector<masking::MaskPair> masks;
        const masking::PointOptions point{unit(val_rng), false};
        for (std::size_t k = b0; k < std::min(val_starts.size(), b0 + config.batch_size); ++k) {
          const masking::Mask obs = window_mask(data.val_observed, val_starts[k], L);
          if (obs.none()) continue;
          try {
            masks.push_back(masking::sample_strategy(obs, strategy, pool, val_rng, point));
          } catch (const masking::MaskError&) {
            continue;
          }
          starts.push_back(val_starts[k]);
        }
        if (starts.empty()) continue;
        const NdArray x0 = gather_windows(data.val, starts, L);
        for (std::size_t d = 0; d < config.validation_draws; ++d) {
          const auto [s, c] = trainer.evaluate(make_batch(x0, masks, schedule, val_rng));
          sse += s;
          count += c;
        }
      }
      if (count) stats.val_loss = sse / double(count);
    }
    stats.seconds = elapsed(t_epoch);
    result.curve.push_back(stats);
    const bool has_val = std::isfinite(stats.val_loss);
    if (!has_val || stats.val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = stats.val_loss;
      snapshot();
    }
    if (on_epoch) on_epoch(stats);
  }
  for (const auto& [name, value] : best_params) model.params().get(name) = value;
  if (result.curve.empty() || !std::isfinite(result.best_val_loss)) {
    result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  result.steps = trainer.optimizer().steps();
  result.seconds = elapsed(t_start);
  return result;
}

}  // namespace ssmdiff::pipeline
