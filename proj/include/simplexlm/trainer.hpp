#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "simplexlm/checkpoint.hpp"
#include "simplexlm/diffusion_model.hpp"
#include "simplexlm/errors.hpp"
#include "simplexlm/noise_schedule.hpp"
#include "simplexlm/optimizer.hpp"
#include "simplexlm/rng.hpp"
#include "simplexlm/text_corpus.hpp"

namespace simplexlm {

struct TrainConfig {
  std::size_t seq_length = 64;
  std::size_t block_length = 8;
  int diffusion_steps = 200;
  std::size_t batch_size = 32;
  AdamWConfig optimizer{};
  std::uint64_t total_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 0;
  /// Validate every intermediate value for NaN/Inf (slow).
  bool check_finite = false;

  void validate() const;
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
  DiffusionModel model;
  AdamWState optimizer;
  Rng rng;
  std::uint64_t step = 0;
};

/// Thrown when the loss turns non-finite. what() carries the diagnostic.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// The (c, t) draw for one training sequence.
struct CorruptionDraw {
  std::size_t context_length = 0;
  int timestep = 0;
};

/// c ~ U{1..L-B}, t ~ U{1..T}.
CorruptionDraw draw_corruption(std::size_t seq_length, std::size_t block_length, int steps, Rng& rng);

/// One optimizer step on a batch of full-length sequences; returns the mean
/// per-token block NLL before the update.
double train_step(TrainState& state, std::span<const TokenBlock> batch,
                  const NoiseSchedule& schedule, const TrainConfig& config);

struct StepLog {
  std::uint64_t step = 0;
  double per_token_nll = 0.0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  /// Called every checkpoint_interval steps and once at the end.
  std::function<void(const TrainState&)> on_checkpoint;
  /// Checked after each step; true stops the loop early.
  std::function<bool(const TrainState&)> should_stop;
};

/// Runs steps until state.step == config.total_steps (or should_stop).
void train_loop(TrainState& state, const PackedCorpus& corpus, const NoiseSchedule& schedule,
                const TrainConfig& config, const TrainHooks& hooks = {});

/// Mean per-token NLL over `samples_per_sequence` seeded (c, t, noise) draws
/// per sequence. Deterministic given `seed`.
double evaluate_nll(const DiffusionModel& model, std::span<const TokenBlock> sequences,
                    const NoiseSchedule& schedule, std::size_t block_length,
                    std::size_t samples_per_sequence, std::uint64_t seed);

/// Stores the model config as checkpoint metadata.
void write_model_config(Checkpoint& checkpoint, const ModelConfig& config);
ModelConfig read_model_config(const Checkpoint& checkpoint);

/// Full training state (weights, optimizer moments, RNG, step).
Checkpoint make_checkpoint(const TrainState& state, std::uint64_t vocab_hash,
                           std::uint64_t config_hash, std::uint64_t seed);
/// Inverse of make_checkpoint. Throws DataError when the checkpoint does not
/// hold a diffusion model.
TrainState restore_train_state(const Checkpoint& checkpoint);
/// Weights only; optimizer state is ignored if present.
DiffusionModel restore_model(const Checkpoint& checkpoint);

}  // namespace simplexlm
