#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simplexlm/autodiff.hpp"
#include "simplexlm/checkpoint.hpp"
#include "simplexlm/optimizer.hpp"
#include "simplexlm/parameters.hpp"
#include "simplexlm/simplex_codec.hpp"
#include "simplexlm/transformer.hpp"

namespace simplexlm {

struct ClassifierConfig {
  std::size_t vocab_size = 0;
  std::size_t max_length = 96;
  std::size_t d_model = 64;
  /// 0 gives a bag-of-embeddings model (mean of token embeddings).
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::vector<std::string> labels;

  void validate() const;
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

/// Which function of the label distribution guidance differentiates.
enum class GuidanceObjective { kLogProbability, kProbability };

/// Frozen attribute classifier over a fixed vocabulary.
///
/// Context tokens are embedded by lookup; a soft block enters as
/// softmax(logits) times the same embedding table. Positions are added, the
/// encoder runs unmasked, rows are mean-pooled and a linear head produces
/// label logits. Inputs longer than max_length keep their last max_length
/// positions.
class ClassifierHandle {
 public:
  ClassifierHandle(const ClassifierConfig& config, std::uint64_t vocab_hash, std::uint64_t seed,
                   bool zero_head = false);

  const ClassifierConfig& config() const { return config_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }
  std::size_t label_count() const { return config_.labels.size(); }
  /// Throws ConfigError for unknown labels.
  int label_index(std::string_view label) const;
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t head_weight_index() const { return head_w_; }

  /// Throws DataError unless `vocab_hash` matches.
  void require_vocab(std::uint64_t vocab_hash) const;

  /// 1 x labels logits for discrete tokens.
  Var label_logits(std::span<const Var> bound, std::span<const int> tokens) const;
  /// 1 x labels logits for discrete context followed by a soft block given
  /// as raw logits (B x V).
  Var label_logits(std::span<const Var> bound, std::span<const int> context,
                   Var block_logits) const;

  /// Label log-probabilities.
  std::vector<double> classify_tokens(std::span<const int> tokens) const;
  std::vector<double> classify_simplex(std::span<const int> context, const Tensor& block_logits) const;
  int predict(std::span<const int> tokens) const;

  /// Gradient of log p(label) (or p(label)) with respect to the raw block
  /// logits, including the softmax Jacobian.
  Tensor grad_wrt_logits(std::span<const int> context, const Tensor& block_logits, int label,
                         GuidanceObjective objective = GuidanceObjective::kLogProbability) const;

  Checkpoint to_checkpoint(std::uint64_t config_hash, std::uint64_t seed) const;
  static ClassifierHandle from_checkpoint(const Checkpoint& checkpoint);

 private:
  Var pooled_logits(std::span<const Var> bound, Var embedded) const;
  void check_label(int label) const;

  ClassifierConfig config_;
  std::uint64_t vocab_hash_ = 0;
  ParameterSet params_;
  std::size_t emb_ = 0, pos_ = 0;
  Encoder encoder_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

struct LabeledExample {
  TokenBlock tokens;
  int label = 0;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct ClassifierTrainReport {
  std::size_t train_count = 0;
  std::size_t heldout_count = 0;
  double train_accuracy = 0.0;
  /// NaN when nothing was held out.
  double heldout_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Cross-entropy training with AdamW on shuffled mini-batches. Needs at least
/// two labels with at least one example each.
ClassifierHandle train_classifier(std::span<const LabeledExample> examples,
                                  const ClassifierConfig& config, std::uint64_t vocab_hash,
                                  const ClassifierTrainConfig& train_config,
                                  ClassifierTrainReport* report = nullptr);

/// Fraction of examples whose predicted label matches.
double classifier_accuracy(const ClassifierHandle& classifier,
                           std::span<const LabeledExample> examples);

}  // namespace simplexlm
