#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simplexlm/autodiff.hpp"
#include "simplexlm/checkpoint.hpp"
#include "simplexlm/optimizer.hpp"
#include "simplexlm/parameters.hpp"
#include "simplexlm/simplex_codec.hpp"
#include "simplexlm/text_corpus.hpp"
#include "simplexlm/transformer.hpp"

namespace simplexlm {

/// Mean over samples of unique n-grams / total n-grams, in percent. Samples
/// shorter than n are skipped; throws DataError if all are.
double dist_n(std::span<const TokenBlock> samples, std::size_t n);

/// True when the sample ends in some phrase of length 1..window repeated at
/// least `min_repeats` times back to back.
bool ends_in_repetition(std::span<const int> sample, std::size_t window = 8,
                        std::size_t min_repeats = 3);

/// Percentage of samples that end in a repeated phrase.
double repetition_rate(std::span<const TokenBlock> samples, std::size_t window = 8,
                       std::size_t min_repeats = 3);

/// Negative slope of the least-squares line through (log rank, log count)
/// of the pooled unigram distribution.
double zipf_coefficient(std::span<const TokenBlock> samples);

/// |ln gen_ppl - ln gold_ppl|.
double delta_log_ppl(double gen_ppl, double gold_ppl);

struct ReferenceConfig {
  std::size_t vocab_size = 0;
  std::size_t max_length = 96;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;

  void validate() const;
  friend bool operator==(const ReferenceConfig&, const ReferenceConfig&) = default;
};

/// Small causal transformer language model used to score text.
class ReferenceModel {
 public:
  /// With `zero_output` the model predicts the uniform distribution.
  ReferenceModel(const ReferenceConfig& config, std::uint64_t vocab_hash, std::uint64_t seed,
                 bool zero_output = false);

  const ReferenceConfig& config() const { return config_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// n x V next-token logits; row j depends on inputs 0..j only.
  Var forward(std::span<const Var> bound, std::span<const int> inputs,
              AttentionProbe* probe = nullptr) const;

  /// Summed NLL of `tokens` given `context` (kBos when empty). Long inputs are
  /// scored in windows of max_length predictions.
  double sequence_nll(std::span<const int> context, std::span<const int> tokens) const;

  Checkpoint to_checkpoint(std::uint64_t config_hash, std::uint64_t seed) const;
  static ReferenceModel from_checkpoint(const Checkpoint& checkpoint);

 private:
  ReferenceConfig config_;
  std::uint64_t vocab_hash_ = 0;
  ParameterSet params_;
  std::size_t emb_ = 0, pos_ = 0;
  Encoder encoder_;
  std::size_t out_w_ = 0, out_b_ = 0;
};

struct ReferenceTrainConfig {
  std::uint64_t steps = 500;
  std::size_t batch_size = 8;
  AdamWConfig optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
  std::uint64_t seed = 0;
};

/// Next-token training on the corpus training split.
ReferenceModel train_ar_reference(const PackedCorpus& corpus, const ReferenceConfig& config,
                                  std::uint64_t vocab_hash, const ReferenceTrainConfig& train_config,
                                  const std::function<void(std::uint64_t, double)>& on_step = {});

enum class PerplexityAverage {
  /// exp(total NLL / total tokens).
  kMicro,
  /// Mean of per-sample perplexities.
  kMacro,
};

/// Perplexity of `samples` under the reference. `contexts`, when non-empty,
/// gives one conditioning prefix per sample.
double reference_perplexity(const ReferenceModel& model, std::span<const TokenBlock> samples,
                            PerplexityAverage average = PerplexityAverage::kMicro,
                            std::span<const TokenBlock> contexts = {});

struct MetricReport {
  double dist1 = 0.0;
  double dist2 = 0.0;
  double dist3 = 0.0;
  double zipf = 0.0;
  double repetition = 0.0;
  std::optional<double> reference_ppl;
  std::optional<double> gold_ppl;
  std::optional<double> delta_log_ppl;
  std::size_t sample_count = 0;
};

/// Diversity metrics; perplexities are filled when a reference is given.
MetricReport compute_metrics(std::span<const TokenBlock> samples,
                             const ReferenceModel* reference = nullptr,
                             std::span<const TokenBlock> gold = {},
                             std::span<const TokenBlock> contexts = {});

/// Two-line CSV: header then values. Missing values are left empty.
void write_metric_csv(std::ostream& out, const MetricReport& report);
/// Aligned name/value table for terminals.
void write_metric_table(std::ostream& out, const MetricReport& report);

}  // namespace simplexlm
