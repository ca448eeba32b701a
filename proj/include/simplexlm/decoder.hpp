#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "simplexlm/attribute_classifier.hpp"
#include "simplexlm/diffusion_model.hpp"
#include "simplexlm/noise_schedule.hpp"
#include "simplexlm/rng.hpp"
#include "simplexlm/simplex_codec.hpp"

namespace simplexlm {

/// Classifier steering for decoding. A null classifier or zero weight
/// disables it.
struct Guidance {
  const ClassifierHandle* classifier = nullptr;
  int label = 0;
  double weight = 0.0;
  GuidanceObjective objective = GuidanceObjective::kLogProbability;

  bool active() const { return classifier != nullptr && weight != 0.0; }
};

struct DecodeConfig {
  std::size_t block_length = 8;
  int decode_steps = 200;
  ProjectionStrategy projection = ProjectionStrategy::greedy();
  /// Number of blocks m.
  std::size_t iterations = 1;
  std::uint64_t seed = 0;
  /// Upper bound on context plus generated length; 0 means the model limit.
  std::size_t max_length = 0;
  /// Stop once a block contains this id (tokens after it are kept).
  std::optional<int> end_token;
  bool record_trajectory = false;

  void validate() const;
};

/// Argmax snapshots of one reverse step.
struct TrajectoryStep {
  int timestep = 0;
  /// argmax of the model's predicted logits.
  TokenBlock predicted;
  /// argmax of the re-noised logits passed to the next step.
  TokenBlock noisy;
};

struct BlockRecord {
  TokenBlock tokens;
  std::vector<TrajectoryStep> trajectory;
};

struct GenerationRecord {
  TokenBlock prompt;
  std::vector<BlockRecord> blocks;
  DecodeConfig config;
  std::uint64_t seed = 0;
  bool stopped_early = false;

  TokenBlock generated() const;
};

/// w_logits + weight * d/d(w_logits) of log f(label | softmax(w_logits), context)
/// (or of f itself for the probability objective).
Tensor guided_logits(const Tensor& w_logits, std::span<const int> context,
                     const Guidance& guidance);

/// Reverse diffusion for one block on `schedule` (already subsampled to the
/// decode grid): start from N(0, K^2), then predict, optionally steer,
/// project, and re-noise to the next lower level. Returns argmax of the
/// final, noiseless state.
BlockRecord decode_block(const DiffusionModel& model, std::span<const int> context,
                         std::size_t block_length, const NoiseSchedule& schedule,
                         const ProjectionStrategy& projection, Rng& rng,
                         const Guidance& guidance = {}, bool record_trajectory = false);

/// m blocks, each appended to the context of the next. An empty prompt is
/// replaced by a single kBos context token. `schedule` is the training
/// schedule; it is subsampled to config.decode_steps.
GenerationRecord decode_sequence(const DiffusionModel& model, std::span<const int> prompt,
                                 const DecodeConfig& config, const NoiseSchedule& schedule,
                                 const Guidance& guidance = {});

/// Clean-data estimate from noise prediction:
/// (x_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t).
Tensor estimate_clean(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule, int k);

/// Deterministic DDPM reverse step
/// x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t).
Tensor ddpm_step(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule, int k);

/// The same step written as re-noising the clean estimate with the
/// predicted noise: sqrt(alpha_bar_{t-1}) x0 + c_t sqrt(1 - alpha_bar_{t-1}) eps
/// where c_t is the compensation coefficient.
Tensor ddpm_step_renoise(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule,
                         int k);

/// ddpm_step_renoise with c_t taken as 1.
Tensor ddpm_step_approx(const Tensor& noisy, const Tensor& eps, const NoiseSchedule& schedule,
                        int k);

}  // namespace simplexlm
