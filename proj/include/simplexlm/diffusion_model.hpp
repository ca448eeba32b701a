#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "simplexlm/autodiff.hpp"
#include "simplexlm/noise_schedule.hpp"
#include "simplexlm/parameters.hpp"
#include "simplexlm/simplex_codec.hpp"
#include "simplexlm/transformer.hpp"

namespace simplexlm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t max_length = 96;
  std::size_t d_model = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  double k = 5.0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Bidirectional transformer denoiser.
///
/// Context tokens are embedded by lookup; the noisy block enters as
/// softmax(noisy logits) times the diffusion embedding table, plus a learned
/// affine embedding of t/T on those block rows only. Positional embeddings
/// cover every row and attention is unmasked. The output is one row of
/// vocabulary logits per block position.
class DiffusionModel {
 public:
  /// Random initialisation. With `zero_output`, the output projection starts
  /// at zero so the initial prediction is uniform.
  DiffusionModel(const ModelConfig& config, std::uint64_t seed, bool zero_output = true);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  std::size_t diffusion_embedding_index() const { return diff_emb_; }
  std::size_t output_weight_index() const { return out_w_; }

  /// Block logits (B x V). `bound` comes from parameters().bind(tape).
  Var forward(Tape& tape, std::span<const Var> bound, std::span<const int> context, Var noisy,
              int t, const NoiseSchedule& schedule, AttentionProbe* probe = nullptr) const;

  /// Mean per-token negative log-likelihood of `targets` over the block.
  Var block_nll(Tape& tape, std::span<const Var> bound, std::span<const int> context, Var noisy,
                int t, const NoiseSchedule& schedule, std::span<const int> targets) const;

  /// Inference-only forward pass.
  Tensor predict(std::span<const int> context, const LogitBlock& noisy, int t,
                 const NoiseSchedule& schedule) const;

  struct LossAndGradient {
    double loss = 0.0;
    std::vector<Tensor> gradients;
  };

  LossAndGradient block_nll_gradient(std::span<const int> context, const LogitBlock& noisy, int t,
                                     const NoiseSchedule& schedule,
                                     std::span<const int> targets) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  std::size_t ctx_emb_ = 0, diff_emb_ = 0, pos_emb_ = 0;
  std::size_t time_w_ = 0, time_b_ = 0;
  Encoder encoder_;
  std::size_t out_w_ = 0, out_b_ = 0;
};

}  // namespace simplexlm
