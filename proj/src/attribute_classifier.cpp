#include "simplexlm/attribute_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "simplexlm/errors.hpp"

namespace simplexlm {

namespace {

constexpr double kInitStd = 0.02;

std::vector<int> positions(std::size_t n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

std::vector<double> row_values(const Tensor& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

}  // namespace

void ClassifierConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("classifier vocab_size must be positive");
  if (max_length < 1) throw ConfigError("classifier max_length must be positive");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("classifier d_model must be a positive multiple of n_heads");
  }
  if (labels.size() < 2) throw ConfigError("classifier needs at least two labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) throw ConfigError("classifier label names must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (labels[i] == labels[j]) throw ConfigError("duplicate classifier label " + labels[i]);
    }
  }
}

ClassifierHandle::ClassifierHandle(const ClassifierConfig& config, std::uint64_t vocab_hash,
                                   std::uint64_t seed, bool zero_head)
    : config_(config), vocab_hash_(vocab_hash) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config.d_model;
  emb_ = params_.add("embedding", random_normal({config.vocab_size, d}, kInitStd, rng));
  pos_ = params_.add("position_embedding", random_normal({config.max_length, d}, kInitStd, rng));
  encoder_ = Encoder(EncoderConfig{d, config.n_layers, config.n_heads, config.d_ff}, params_,
                     "encoder.", rng);
  const std::size_t n = config.labels.size();
  head_w_ = params_.add("head.weight", zero_head ? Tensor({d, n}) : random_normal({d, n}, kInitStd, rng));
  head_b_ = params_.add("head.bias", Tensor({1, n}));
}

int ClassifierHandle::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < config_.labels.size(); ++i) {
    if (config_.labels[i] == label) return static_cast<int>(i);
  }
  throw ConfigError("label '" + std::string(label) + "' is unknown to the classifier");
}

void ClassifierHandle::check_label(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= label_count()) {
    throw ConfigError("label index " + std::to_string(label) + " out of range");
  }
}

void ClassifierHandle::require_vocab(std::uint64_t vocab_hash) const {
  if (vocab_hash != vocab_hash_) {
    throw DataError("classifier vocabulary does not match the language model's tokenizer");
  }
}

Var ClassifierHandle::pooled_logits(std::span<const Var> bound, Var embedded) const {
  const std::size_t n = embedded.value().rows();
  Var x = add(embedded, gather_rows(bound[pos_], positions(n)));
  Var h = encoder_.apply(bound, x, /*causal=*/false);
  return linear(mean_rows(h), bound[head_w_], bound[head_b_]);
}

Var ClassifierHandle::label_logits(std::span<const Var> bound, std::span<const int> tokens) const {
  if (tokens.empty()) tokens = std::span<const int>(&kBos, 1);
  if (tokens.size() > config_.max_length) tokens = tokens.last(config_.max_length);
  return pooled_logits(bound, gather_rows(bound[emb_], tokens));
}

Var ClassifierHandle::label_logits(std::span<const Var> bound, std::span<const int> context,
                                   Var block_logits) const {
  const Tensor& bv = block_logits.value();
  if (bv.rank() != 2 || bv.cols() != config_.vocab_size) {
    throw ShapeError("classifier block must be B x " + std::to_string(config_.vocab_size) +
                     ", got " + shape_string(bv.shape()));
  }
  const std::size_t b = bv.rows();
  if (b > config_.max_length) throw ShapeError("block longer than classifier max_length");
  if (context.size() + b > config_.max_length) context = context.last(config_.max_length - b);
  Var x = weighted_embedding(softmax_rows(block_logits), bound[emb_]);
  if (!context.empty()) x = concat_rows(gather_rows(bound[emb_], context), x);
  return pooled_logits(bound, x);
}

std::vector<double> ClassifierHandle::classify_tokens(std::span<const int> tokens) const {
  Tape tape;
  const auto bound = params_.bind(tape, false);
  return row_values(log_softmax_rows(label_logits(bound, tokens)).value());
}

std::vector<double> ClassifierHandle::classify_simplex(std::span<const int> context,
                                                       const Tensor& block_logits) const {
  Tape tape;
  const auto bound = params_.bind(tape, false);
  return row_values(log_softmax_rows(label_logits(bound, context, tape.constant(block_logits))).value());
}

int ClassifierHandle::predict(std::span<const int> tokens) const {
  const auto lp = classify_tokens(tokens);
  return static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

Tensor ClassifierHandle::grad_wrt_logits(std::span<const int> context, const Tensor& block_logits,
                                         int label, GuidanceObjective objective) const {
  check_label(label);
  Tape tape;
  const auto bound = params_.bind(tape, false);
  Var block = tape.variable(block_logits);
  Var lp = log_softmax_rows(label_logits(bound, context, block));
  if (objective == GuidanceObjective::kProbability) {
    lp = softmax_rows(lp);
  }
  tape.backward(element(lp, 0, static_cast<std::size_t>(label)));
  return tape.grad(block);
}

Checkpoint ClassifierHandle::to_checkpoint(std::uint64_t config_hash, std::uint64_t seed) const {
  Checkpoint c;
  c.kind = ArtifactKind::kClassifier;
  c.vocab_hash = vocab_hash_;
  c.config_hash = config_hash;
  c.seed = seed;
  c.set_meta("classifier.vocab_size", config_.vocab_size);
  c.set_meta("classifier.max_length", config_.max_length);
  c.set_meta("classifier.d_model", config_.d_model);
  c.set_meta("classifier.n_layers", config_.n_layers);
  c.set_meta("classifier.n_heads", config_.n_heads);
  c.set_meta("classifier.d_ff", config_.d_ff);
  c.set_meta("classifier.label_count", config_.labels.size());
  for (std::size_t i = 0; i < config_.labels.size(); ++i) {
    c.set_meta("classifier.label." + std::to_string(i), config_.labels[i]);
  }
  c.parameters = params_;
  return c;
}

ClassifierHandle ClassifierHandle::from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != ArtifactKind::kClassifier) {
    throw DataError("checkpoint does not hold an attribute classifier");
  }
  ClassifierConfig config;
  config.vocab_size = checkpoint.meta_size("classifier.vocab_size");
  config.max_length = checkpoint.meta_size("classifier.max_length");
  config.d_model = checkpoint.meta_size("classifier.d_model");
  config.n_layers = checkpoint.meta_size("classifier.n_layers");
  config.n_heads = checkpoint.meta_size("classifier.n_heads");
  config.d_ff = checkpoint.meta_size("classifier.d_ff");
  const std::size_t n = checkpoint.meta_size("classifier.label_count");
  for (std::size_t i = 0; i < n; ++i) {
    config.labels.push_back(checkpoint.meta("classifier.label." + std::to_string(i)));
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint holds an invalid classifier config: ") + e.what());
  }
  ClassifierHandle handle(config, checkpoint.vocab_hash, 0);
  handle.params_.assign_from(checkpoint.parameters);
  return handle;
}

ClassifierHandle train_classifier(std::span<const LabeledExample> examples,
                                  const ClassifierConfig& config, std::uint64_t vocab_hash,
                                  const ClassifierTrainConfig& train_config,
                                  ClassifierTrainReport* report) {
  config.validate();
  std::vector<std::size_t> per_label(config.labels.size(), 0);
  for (const auto& ex : examples) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= per_label.size()) {
      throw DataError("example label " + std::to_string(ex.label) + " out of range");
    }
    for (int id : ex.tokens) {
      if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
        throw DataError("example token id " + std::to_string(id) + " out of vocabulary range");
      }
    }
    ++per_label[static_cast<std::size_t>(ex.label)];
  }
  if (std::any_of(per_label.begin(), per_label.end(), [](std::size_t n) { return n == 0; })) {
    throw DataError("degenerate label set: every label needs at least one example");
  }
  if (train_config.batch_size == 0) throw ConfigError("classifier batch size must be >= 1");

  Rng split_rng(derive_seed(train_config.seed, 1));
  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (split_rng.uniform() < train_config.holdout_fraction ? held_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) throw DataError("classifier training split is empty");

  ClassifierHandle handle(config, vocab_hash, derive_seed(train_config.seed, 2));
  AdamWState opt = AdamWState::zeros_for(handle.parameters());
  Rng rng(derive_seed(train_config.seed, 3));
  ClassifierTrainReport local;
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    // Fisher-Yates with our own RNG keeps the order portable.
    for (std::size_t i = train_idx.size(); i > 1; --i) {
      std::swap(train_idx[i - 1], train_idx[rng.uniform_index(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += train_config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + train_config.batch_size);
      auto grads = handle.parameters().zeros_like();
      for (std::size_t j = start; j < end; ++j) {
        const LabeledExample& ex = examples[train_idx[j]];
        Tape tape;
        const auto bound = handle.parameters().bind(tape, grads);
        const int target = ex.label;
        Var loss = cross_entropy_rows(handle.label_logits(bound, ex.tokens), std::span(&target, 1));
        tape.backward(loss, 1.0 / static_cast<double>(end - start));
        epoch_loss += loss.value().item();
      }
      adamw_step(handle.parameters(), grads, opt, train_config.optimizer);
    }
    local.epoch_loss.push_back(epoch_loss / static_cast<double>(train_idx.size()));
  }

  std::vector<LabeledExample> train_set, held_set;
  for (std::size_t i : train_idx) train_set.push_back(examples[i]);
  for (std::size_t i : held_idx) held_set.push_back(examples[i]);
  local.train_count = train_set.size();
  local.heldout_count = held_set.size();
  local.train_accuracy = classifier_accuracy(handle, train_set);
  local.heldout_accuracy = held_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : classifier_accuracy(handle, held_set);
  if (report) *report = std::move(local);
  return handle;
}

double classifier_accuracy(const ClassifierHandle& classifier,
                           std::span<const LabeledExample> examples) {
  if (examples.empty()) throw DataError("no examples to score");
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    if (classifier.predict(ex.tokens) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace simplexlm
