#include "simplexlm/diffusion_model.hpp"

#include <numeric>
#include <string>

#include "simplexlm/errors.hpp"

namespace simplexlm {

namespace {
constexpr double kEmbeddingStd = 0.02;
}

void ModelConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("vocab_size must be positive");
  if (max_length < 1) throw ConfigError("max_length must be positive");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (!(k > 0.0)) throw ConfigError("K must be positive");
}

DiffusionModel::DiffusionModel(const ModelConfig& config, std::uint64_t seed, bool zero_output)
    : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t v = config.vocab_size;
  const std::size_t d = config.d_model;
  ctx_emb_ = params_.add("context_embedding", random_normal({v, d}, kEmbeddingStd, rng));
  diff_emb_ = params_.add("diffusion_embedding", random_normal({v, d}, kEmbeddingStd, rng));
  pos_emb_ = params_.add("position_embedding", random_normal({config.max_length, d}, kEmbeddingStd, rng));
  time_w_ = params_.add("time.weight", random_normal({1, d}, kEmbeddingStd, rng));
  time_b_ = params_.add("time.bias", Tensor({1, d}));
  encoder_ = Encoder(EncoderConfig{d, config.n_layers, config.n_heads, config.d_ff}, params_,
                     "encoder.", rng);
  out_w_ = params_.add("output.weight",
                       zero_output ? Tensor({d, v}) : random_normal({d, v}, kEmbeddingStd, rng));
  out_b_ = params_.add("output.bias", Tensor({1, v}));
}

Var DiffusionModel::forward(Tape& /*tape*/, std::span<const Var> bound, std::span<const int> context,
                            Var noisy, int t, const NoiseSchedule& schedule,
                            AttentionProbe* probe) const {
  const Tensor& nv = noisy.value();
  const std::size_t c = context.size();
  const std::size_t b = nv.rows();
  if (nv.rank() != 2 || nv.cols() != config_.vocab_size) {
    throw ShapeError("noisy block must be B x " + std::to_string(config_.vocab_size) + ", got " +
                     shape_string(nv.shape()));
  }
  if (b == 0) throw ShapeError("noisy block is empty");
  if (c + b > config_.max_length) {
    throw ShapeError("context " + std::to_string(c) + " + block " + std::to_string(b) +
                     " exceeds max_length " + std::to_string(config_.max_length));
  }
  if (t < 1 || t > schedule.train_steps()) {
    throw ConfigError("timestep " + std::to_string(t) + " outside [1, " +
                      std::to_string(schedule.train_steps()) + "]");
  }

  const double time_fraction = static_cast<double>(t) / static_cast<double>(schedule.train_steps());
  Var time_embedding = add(scale(bound[time_w_], time_fraction), bound[time_b_]);
  Var block = weighted_embedding(softmax_rows(noisy), bound[diff_emb_]);
  block = add_row(block, time_embedding);

  Var x = block;
  if (c > 0) x = concat_rows(gather_rows(bound[ctx_emb_], context), block);
  std::vector<int> positions(c + b);
  std::iota(positions.begin(), positions.end(), 0);
  x = add(x, gather_rows(bound[pos_emb_], positions));

  Var h = encoder_.apply(bound, x, /*causal=*/false, probe);
  return linear(slice_rows(h, c, b), bound[out_w_], bound[out_b_]);
}

Var DiffusionModel::block_nll(Tape& tape, std::span<const Var> bound, std::span<const int> context,
                              Var noisy, int t, const NoiseSchedule& schedule,
                              std::span<const int> targets) const {
  if (targets.size() != noisy.value().rows()) {
    throw ShapeError("targets must match block length");
  }
  return cross_entropy_rows(forward(tape, bound, context, noisy, t, schedule), targets);
}

Tensor DiffusionModel::predict(std::span<const int> context, const LogitBlock& noisy, int t,
                               const NoiseSchedule& schedule) const {
  Tape tape;
  const auto bound = params_.bind(tape, /*requires_grad=*/false);
  Var out = forward(tape, bound, context, tape.constant(noisy.logits), t, schedule);
  return out.value();
}

DiffusionModel::LossAndGradient DiffusionModel::block_nll_gradient(
    std::span<const int> context, const LogitBlock& noisy, int t, const NoiseSchedule& schedule,
    std::span<const int> targets) const {
  Tape tape;
  const auto bound = params_.bind(tape);
  Var loss = block_nll(tape, bound, context, tape.constant(noisy.logits), t, schedule, targets);
  tape.backward(loss);
  return {loss.value().item(), ParameterSet::gradients(tape, bound)};
}

}  // namespace simplexlm
