#include "simplexlm/trainer.hpp"

#include <cmath>
#include <sstream>

namespace simplexlm {

void TrainConfig::validate() const {
  if (block_length < 1 || block_length >= seq_length) {
    throw ConfigError("block length must satisfy 1 <= B < L");
  }
  if (diffusion_steps < 1) throw ConfigError("diffusion steps T must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (optimizer.learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
}

CorruptionDraw draw_corruption(std::size_t seq_length, std::size_t block_length, int steps, Rng& rng) {
  CorruptionDraw d;
  d.context_length = static_cast<std::size_t>(
      rng.uniform_int(1, static_cast<std::int64_t>(seq_length - block_length)));
  d.timestep = static_cast<int>(rng.uniform_int(1, steps));
  return d;
}

double train_step(TrainState& state, std::span<const TokenBlock> batch,
                  const NoiseSchedule& schedule, const TrainConfig& config) {
  if (batch.empty()) throw DataError("empty training batch");
  const DiffusionModel& model = state.model;
  const std::size_t b = config.block_length;
  auto grads = model.parameters().zeros_like();
  double total = 0.0;
  std::vector<CorruptionDraw> draws;
  for (const TokenBlock& seq : batch) {
    if (seq.size() != config.seq_length) {
      throw DataError("training sequence of length " + std::to_string(seq.size()) +
                      ", expected " + std::to_string(config.seq_length));
    }
    const CorruptionDraw d = draw_corruption(config.seq_length, b, schedule.steps(), state.rng);
    draws.push_back(d);
    const std::span<const int> context(seq.data(), d.context_length);
    const std::span<const int> block(seq.data() + d.context_length, b);
    const LogitBlock clean = logits_generation(block, model.config().k, model.config().vocab_size);
    const LogitBlock noisy = forward_diffuse(clean, schedule, d.timestep, state.rng);

    Tape tape(config.check_finite);
    const auto bound = model.parameters().bind(tape, grads);
    Var loss = model.block_nll(tape, bound, context, tape.constant(noisy.logits),
                               schedule.timestep(d.timestep), schedule, block);
    tape.backward(loss, 1.0 / static_cast<double>(batch.size()));
    total += loss.value().item();
  }
  const double mean_loss = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean_loss)) {
    std::ostringstream msg;
    msg << "training diverged at step " << state.step << " (loss " << mean_loss << "); draws:";
    for (const auto& d : draws) msg << " (c=" << d.context_length << ", t=" << d.timestep << ")";
    throw DivergenceError(msg.str());
  }
  adamw_step(state.model.parameters(), grads, state.optimizer, config.optimizer);
  ++state.step;
  return mean_loss;
}

void train_loop(TrainState& state, const PackedCorpus& corpus, const NoiseSchedule& schedule,
                const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (corpus.length != config.seq_length) {
    throw ConfigError("corpus sequence length " + std::to_string(corpus.length) +
                      " does not match configured L " + std::to_string(config.seq_length));
  }
  while (state.step < config.total_steps) {
    const auto batch = sample_batch(corpus, config.batch_size, state.rng);
    const double loss = train_step(state, batch, schedule, config);
    if (hooks.on_step) hooks.on_step({state.step, loss});
    if (hooks.on_checkpoint && config.checkpoint_interval > 0 &&
        state.step % config.checkpoint_interval == 0 && state.step < config.total_steps) {
      hooks.on_checkpoint(state);
    }
    if (hooks.should_stop && hooks.should_stop(state)) break;
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
}

double evaluate_nll(const DiffusionModel& model, std::span<const TokenBlock> sequences,
                    const NoiseSchedule& schedule, std::size_t block_length,
                    std::size_t samples_per_sequence, std::uint64_t seed) {
  if (sequences.empty() || samples_per_sequence == 0) throw DataError("nothing to evaluate");
  Rng rng(seed);
  double total = 0.0;
  std::size_t count = 0;
  for (const TokenBlock& seq : sequences) {
    for (std::size_t s = 0; s < samples_per_sequence; ++s) {
      const CorruptionDraw d = draw_corruption(seq.size(), block_length, schedule.steps(), rng);
      const std::span<const int> context(seq.data(), d.context_length);
      const std::span<const int> block(seq.data() + d.context_length, block_length);
      const LogitBlock noisy = forward_diffuse(
          logits_generation(block, model.config().k, model.config().vocab_size), schedule,
          d.timestep, rng);
      Tape tape;
      const auto bound = model.parameters().bind(tape, /*requires_grad=*/false);
      Var loss = model.block_nll(tape, bound, context, tape.constant(noisy.logits),
                                 schedule.timestep(d.timestep), schedule, block);
      total += loss.value().item();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

void write_model_config(Checkpoint& checkpoint, const ModelConfig& config) {
  checkpoint.set_meta("model.vocab_size", config.vocab_size);
  checkpoint.set_meta("model.max_length", config.max_length);
  checkpoint.set_meta("model.d_model", config.d_model);
  checkpoint.set_meta("model.n_layers", config.n_layers);
  checkpoint.set_meta("model.n_heads", config.n_heads);
  checkpoint.set_meta("model.d_ff", config.d_ff);
  checkpoint.set_meta("model.k", config.k);
}

ModelConfig read_model_config(const Checkpoint& checkpoint) {
  ModelConfig config;
  config.vocab_size = checkpoint.meta_size("model.vocab_size");
  config.max_length = checkpoint.meta_size("model.max_length");
  config.d_model = checkpoint.meta_size("model.d_model");
  config.n_layers = checkpoint.meta_size("model.n_layers");
  config.n_heads = checkpoint.meta_size("model.n_heads");
  config.d_ff = checkpoint.meta_size("model.d_ff");
  config.k = checkpoint.meta_double("model.k");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint holds an invalid model config: ") + e.what());
  }
  return config;
}

Checkpoint make_checkpoint(const TrainState& state, std::uint64_t vocab_hash,
                           std::uint64_t config_hash, std::uint64_t seed) {
  Checkpoint c;
  c.kind = ArtifactKind::kDiffusionModel;
  c.vocab_hash = vocab_hash;
  c.config_hash = config_hash;
  c.seed = seed;
  c.step = state.step;
  c.rng_state = state.rng.state();
  write_model_config(c, state.model.config());
  c.parameters = state.model.parameters();
  c.optimizer = state.optimizer;
  return c;
}

DiffusionModel restore_model(const Checkpoint& checkpoint) {
  if (checkpoint.kind != ArtifactKind::kDiffusionModel) {
    throw DataError("checkpoint does not hold a diffusion model");
  }
  DiffusionModel model(read_model_config(checkpoint), 0);
  model.parameters().assign_from(checkpoint.parameters);
  return model;
}

TrainState restore_train_state(const Checkpoint& checkpoint) {
  DiffusionModel model = restore_model(checkpoint);
  AdamWState opt = checkpoint.optimizer ? *checkpoint.optimizer
                                        : AdamWState::zeros_for(model.parameters());
  Rng rng;
  rng.set_state(checkpoint.rng_state);
  return TrainState{std::move(model), std::move(opt), rng, checkpoint.step};
}

}  // namespace simplexlm
