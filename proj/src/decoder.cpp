#include "simplexlm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simplexlm/errors.hpp"

namespace simplexlm {

void DecodeConfig::validate() const {
  if (block_length < 1) throw ConfigError("decode block length must be >= 1");
  if (decode_steps < 1) throw ConfigError("decode steps must be >= 1");
  if (iterations < 1) throw ConfigError("decode iterations must be >= 1");
  if (!(projection.top_p >= 0.0 && projection.top_p <= 1.0)) {
    throw ConfigError("top_p must lie in [0, 1]");
  }
}

TokenBlock GenerationRecord::generated() const {
  TokenBlock out;
  for (const auto& b : blocks) out.insert(out.end(), b.tokens.begin(), b.tokens.end());
  return out;
}

Tensor guided_logits(const Tensor& w_logits, std::span<const int> context,
                     const Guidance& guidance) {
  if (guidance.weight < 0.0) throw ConfigError("guidance weight must be >= 0");
  if (!guidance.active()) return w_logits;
  Tensor grad = guidance.classifier->grad_wrt_logits(context, w_logits, guidance.label,
                                                     guidance.objective);
  Tensor out = w_logits;
  auto o = out.values();
  const auto g = grad.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += guidance.weight * g[i];
  return out;
}

BlockRecord decode_block(const DiffusionModel& model, std::span<const int> context,
                         std::size_t block_length, const NoiseSchedule& schedule,
                         const ProjectionStrategy& projection, Rng& rng, const Guidance& guidance,
                         bool record_trajectory) {
  const ModelConfig& mc = model.config();
  if (context.size() + block_length > mc.max_length) {
    throw ShapeError("context " + std::to_string(context.size()) + " + block " +
                     std::to_string(block_length) + " exceeds max_length " +
                     std::to_string(mc.max_length));
  }
  if (guidance.weight < 0.0) throw ConfigError("guidance weight must be >= 0");
  if (guidance.active() && guidance.classifier->config().vocab_size != mc.vocab_size) {
    throw DataError("classifier vocabulary size does not match the language model");
  }

  LogitBlock state{Tensor({block_length, mc.vocab_size}), mc.k};
  for (double& v : state.logits.values()) v = mc.k * rng.normal();

  BlockRecord record;
  for (int k = schedule.steps(); k >= 1; --k) {
    const int t = schedule.timestep(k);
    Tensor predicted = model.predict(context, state, t, schedule);
    if (guidance.active()) predicted = guided_logits(predicted, context, guidance);
    LogitBlock projected = logits_projection(predicted, projection, mc.k, rng);
    // alpha_bar_0 = 1, so the last step adds no noise.
    state = k == 1 ? std::move(projected) : renoise(projected, schedule.alpha_bar(k - 1), rng);
    if (record_trajectory) {
      record.trajectory.push_back({t, argmax_rows(predicted), argmax_rows(state.logits)});
    }
  }
  record.tokens = argmax_rows(state.logits);
  return record;
}

GenerationRecord decode_sequence(const DiffusionModel& model, std::span<const int> prompt,
                                 const DecodeConfig& config, const NoiseSchedule& schedule,
                                 const Guidance& guidance) {
  config.validate();
  const NoiseSchedule decode_schedule = schedule.subsample(config.decode_steps);
  GenerationRecord record;
  record.prompt.assign(prompt.begin(), prompt.end());
  record.config = config;
  record.seed = config.seed;

  TokenBlock context = record.prompt;
  if (context.empty()) context.push_back(kBos);
  const std::size_t limit =
      config.max_length == 0 ? model.config().max_length
                             : std::min(config.max_length, model.config().max_length);
  if (context.size() + config.iterations * config.block_length > limit) {
    throw ShapeError("prompt " + std::to_string(context.size()) + " + " +
                     std::to_string(config.iterations) + " blocks of " +
                     std::to_string(config.block_length) + " exceeds max length " +
                     std::to_string(limit));
  }
  for (int id : context) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab_size) {
      throw DataError("prompt token id " + std::to_string(id) + " out of vocabulary range");
    }
  }

  Rng rng(config.seed);
  for (std::size_t i = 0; i < config.iterations; ++i) {
    BlockRecord block = decode_block(model, context, config.block_length, decode_schedule,
                                     config.projection, rng, guidance, config.record_trajectory);
    context.insert(context.end(), block.tokens.begin(), block.tokens.end());
    const bool hit_end = config.end_token &&
                         std::find(block.tokens.begin(), block.tokens.end(), *config.end_token) !=
                             block.tokens.end();
    record.blocks.push_back(std::move(block));
    if (hit_end) {
      record.stopped_early = i + 1 < config.iterations;
      break;
    }
  }
  return record;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("noise prediction shape " + shape_string(b.shape()) + " does not match " +
                     shape_string(a.shape()));
  }
}

void require_step(const NoiseSchedule& schedule, int k) {
  if (k < 1 || k > schedule.steps()) {
    throw ConfigError("step " + std::to_string(k) + " outside [1, " +
                      std::to_string(schedule.steps()) + "]");
  }
}

}  // namespace

Tensor estimate_clean(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule, int k) {
  require_step(schedule, k);
  require_same_shape(noisy, eps);
  const double ab = schedule.alpha_bar(k);
  const double noise_scale = std::sqrt(1.0 - ab);
  const double inv = 1.0 / std::sqrt(ab);
  Tensor out(noisy.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (noisy[i] - noise_scale * eps[i]) * inv;
  return out;
}

Tensor ddpm_step(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule, int k) {
  require_step(schedule, k);
  require_same_shape(noisy, eps);
  const double a = schedule.alpha(k);
  const double ab = schedule.alpha_bar(k);
  const double eps_scale = (1.0 - a) / std::sqrt(1.0 - ab);
  const double inv = 1.0 / std::sqrt(a);
  Tensor out(noisy.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (noisy[i] - eps_scale * eps[i]);
  return out;
}

namespace {

Tensor renoise_with(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule, int k,
                    double coefficient) {
  const Tensor x0 = estimate_clean(noisy, eps, schedule, k);
  const double prev = schedule.alpha_bar(k - 1);
  const double signal = std::sqrt(prev);
  const double noise = coefficient * std::sqrt(1.0 - prev);
  Tensor out(noisy.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

}  // namespace

Tensor ddpm_step_renoise(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule,
                         int k) {
  require_step(schedule, k);
  return renoise_with(noisy, eps, schedule, k, schedule.compensation_coefficient(k));
}

Tensor ddpm_step_approx(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule,
                        int k) {
  require_step(schedule, k);
  return renoise_with(noisy, eps, schedule, k, 1.0);
}

}  // namespace simplexlm
