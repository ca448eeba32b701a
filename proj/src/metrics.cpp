#include "simplexlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "simplexlm/errors.hpp"

namespace simplexlm {

double dist_n(std::span<const TokenBlock> samples, std::size_t n) {
  if (n == 0) throw ConfigError("n-gram order must be >= 1");
  double total = 0.0;
  std::size_t counted = 0;
  for (const TokenBlock& s : samples) {
    if (s.size() < n) continue;
    std::set<std::vector<int>> unique;
    const std::size_t grams = s.size() - n + 1;
    for (std::size_t i = 0; i < grams; ++i) unique.emplace(s.begin() + i, s.begin() + i + n);
    total += static_cast<double>(unique.size()) / static_cast<double>(grams);
    ++counted;
  }
  if (counted == 0) throw DataError("every sample is shorter than n = " + std::to_string(n));
  return 100.0 * total / static_cast<double>(counted);
}

bool ends_in_repetition(std::span<const int> sample, std::size_t window, std::size_t min_repeats) {
  for (std::size_t len = 1; len <= window; ++len) {
    if (len * min_repeats > sample.size()) break;
    const auto tail = sample.last(len * min_repeats);
    bool repeated = true;
    for (std::size_t i = len; i < tail.size() && repeated; ++i) repeated = tail[i] == tail[i - len];
    if (repeated) return true;
  }
  return false;
}

double repetition_rate(std::span<const TokenBlock> samples, std::size_t window,
                       std::size_t min_repeats) {
  if (samples.empty()) throw DataError("no samples for repetition rate");
  const auto hits = std::count_if(samples.begin(), samples.end(), [&](const TokenBlock& s) {
    return ends_in_repetition(s, window, min_repeats);
  });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(samples.size());
}

double zipf_coefficient(std::span<const TokenBlock> samples) {
  std::map<int, std::size_t> counts;
  for (const TokenBlock& s : samples) {
    for (int id : s) ++counts[id];
  }
  if (counts.size() < 2) throw DataError("Zipf fit needs at least two distinct tokens");
  std::vector<std::size_t> freq;
  for (const auto& [id, c] : counts) freq.push_back(c);
  std::sort(freq.begin(), freq.end(), std::greater<>());
  const std::size_t n = freq.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(static_cast<double>(i + 1));
    y[i] = std::log(static_cast<double>(freq[i]));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return -sxy / sxx;
}

double delta_log_ppl(double gen_ppl, double gold_ppl) {
  if (!(gen_ppl > 0.0) || !(gold_ppl > 0.0)) throw DataError("perplexities must be positive");
  return std::abs(std::log(gen_ppl) - std::log(gold_ppl));
}

void ReferenceConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("reference vocab_size must be positive");
  if (max_length < 2) throw ConfigError("reference max_length must be >= 2");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("reference d_model must be a positive multiple of n_heads");
  }
}

namespace {
constexpr double kInitStd = 0.02;
}

ReferenceModel::ReferenceModel(const ReferenceConfig& config, std::uint64_t vocab_hash,
                               std::uint64_t seed, bool zero_output)
    : config_(config), vocab_hash_(vocab_hash) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config.d_model;
  const std::size_t v = config.vocab_size;
  emb_ = params_.add("embedding", random_normal({v, d}, kInitStd, rng));
  pos_ = params_.add("position_embedding", random_normal({config.max_length, d}, kInitStd, rng));
  encoder_ = Encoder(EncoderConfig{d, config.n_layers, config.n_heads, config.d_ff}, params_,
                     "encoder.", rng);
  out_w_ = params_.add("output.weight", zero_output ? Tensor({d, v}) : random_normal({d, v}, kInitStd, rng));
  out_b_ = params_.add("output.bias", Tensor({1, v}));
}

Var ReferenceModel::forward(std::span<const Var> bound, std::span<const int> inputs,
                            AttentionProbe* probe) const {
  if (inputs.empty() || inputs.size() > config_.max_length) {
    throw ShapeError("reference input length " + std::to_string(inputs.size()) +
                     " outside [1, " + std::to_string(config_.max_length) + "]");
  }
  std::vector<int> positions(inputs.size());
  std::iota(positions.begin(), positions.end(), 0);
  Var x = add(gather_rows(bound[emb_], inputs), gather_rows(bound[pos_], positions));
  Var h = encoder_.apply(bound, x, /*causal=*/true, probe);
  return linear(h, bound[out_w_], bound[out_b_]);
}

double ReferenceModel::sequence_nll(std::span<const int> context, std::span<const int> tokens) const {
  TokenBlock full(context.begin(), context.end());
  if (full.empty()) full.push_back(kBos);
  const std::size_t first = full.size();
  full.insert(full.end(), tokens.begin(), tokens.end());
  const std::size_t cap = config_.max_length;
  double total = 0.0;
  std::size_t pos = first;
  while (pos < full.size()) {
    // History kept before the first target of this window.
    std::size_t history = pos;
    if (full.size() - 1 > cap) history = std::min(pos, std::max<std::size_t>(1, cap / 2));
    const std::size_t count = std::min(full.size() - pos, cap + 1 - history);
    const std::span<const int> inputs(full.data() + pos - history, history + count - 1);
    const std::span<const int> targets(full.data() + pos, count);
    Tape tape;
    const auto bound = params_.bind(tape, false);
    Var logits = slice_rows(forward(bound, inputs), history - 1, count);
    total += cross_entropy_rows(logits, targets).value().item() * static_cast<double>(count);
    pos += count;
  }
  return total;
}

Checkpoint ReferenceModel::to_checkpoint(std::uint64_t config_hash, std::uint64_t seed) const {
  Checkpoint c;
  c.kind = ArtifactKind::kReferenceModel;
  c.vocab_hash = vocab_hash_;
  c.config_hash = config_hash;
  c.seed = seed;
  c.set_meta("reference.vocab_size", config_.vocab_size);
  c.set_meta("reference.max_length", config_.max_length);
  c.set_meta("reference.d_model", config_.d_model);
  c.set_meta("reference.n_layers", config_.n_layers);
  c.set_meta("reference.n_heads", config_.n_heads);
  c.set_meta("reference.d_ff", config_.d_ff);
  c.parameters = params_;
  return c;
}

ReferenceModel ReferenceModel::from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != ArtifactKind::kReferenceModel) {
    throw DataError("checkpoint does not hold a reference language model");
  }
  ReferenceConfig config;
  config.vocab_size = checkpoint.meta_size("reference.vocab_size");
  config.max_length = checkpoint.meta_size("reference.max_length");
  config.d_model = checkpoint.meta_size("reference.d_model");
  config.n_layers = checkpoint.meta_size("reference.n_layers");
  config.n_heads = checkpoint.meta_size("reference.n_heads");
  config.d_ff = checkpoint.meta_size("reference.d_ff");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint holds an invalid reference config: ") + e.what());
  }
  ReferenceModel model(config, checkpoint.vocab_hash, 0);
  model.params_.assign_from(checkpoint.parameters);
  return model;
}

ReferenceModel train_ar_reference(const PackedCorpus& corpus, const ReferenceConfig& config,
                                  std::uint64_t vocab_hash, const ReferenceTrainConfig& train_config,
                                  const std::function<void(std::uint64_t, double)>& on_step) {
  config.validate();
  if (corpus.length > config.max_length) {
    throw ConfigError("reference max_length " + std::to_string(config.max_length) +
                      " is shorter than the corpus sequence length " + std::to_string(corpus.length));
  }
  if (train_config.batch_size == 0) throw ConfigError("reference batch size must be >= 1");
  corpus.validate(config.vocab_size);
  ReferenceModel model(config, vocab_hash, derive_seed(train_config.seed, 1));
  AdamWState opt = AdamWState::zeros_for(model.parameters());
  Rng rng(derive_seed(train_config.seed, 2));
  for (std::uint64_t step = 1; step <= train_config.steps; ++step) {
    const auto batch = sample_batch(corpus, train_config.batch_size, rng);
    auto grads = model.parameters().zeros_like();
    double total = 0.0;
    for (const TokenBlock& seq : batch) {
      TokenBlock inputs{kBos};
      inputs.insert(inputs.end(), seq.begin(), seq.end() - 1);
      Tape tape;
      const auto bound = model.parameters().bind(tape, grads);
      Var loss = cross_entropy_rows(model.forward(bound, inputs), seq);
      tape.backward(loss, 1.0 / static_cast<double>(batch.size()));
      total += loss.value().item();
    }
    const double mean = total / static_cast<double>(batch.size());
    if (!std::isfinite(mean)) {
      throw NumericError("reference training diverged at step " + std::to_string(step));
    }
    adamw_step(model.parameters(), grads, opt, train_config.optimizer);
    if (on_step) on_step(step, mean);
  }
  return model;
}

double reference_perplexity(const ReferenceModel& model, std::span<const TokenBlock> samples,
                            PerplexityAverage average, std::span<const TokenBlock> contexts) {
  if (samples.empty()) throw DataError("no samples to score");
  if (!contexts.empty() && contexts.size() != samples.size()) {
    throw DataError("need one context per sample");
  }
  double total_nll = 0.0;
  std::size_t total_tokens = 0;
  double ppl_sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TokenBlock& s = samples[i];
    if (s.empty()) continue;
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab_size) {
        throw DataError("sample token id " + std::to_string(id) + " outside reference vocabulary");
      }
    }
    const double nll = model.sequence_nll(contexts.empty() ? std::span<const int>() : contexts[i], s);
    total_nll += nll;
    total_tokens += s.size();
    ppl_sum += std::exp(nll / static_cast<double>(s.size()));
    ++scored;
  }
  if (scored == 0) throw DataError("all samples are empty");
  if (average == PerplexityAverage::kMacro) return ppl_sum / static_cast<double>(scored);
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

MetricReport compute_metrics(std::span<const TokenBlock> samples, const ReferenceModel* reference,
                             std::span<const TokenBlock> gold, std::span<const TokenBlock> contexts) {
  if (samples.empty()) throw DataError("no samples to evaluate");
  MetricReport r;
  r.sample_count = samples.size();
  r.dist1 = dist_n(samples, 1);
  r.dist2 = dist_n(samples, 2);
  r.dist3 = dist_n(samples, 3);
  r.zipf = zipf_coefficient(samples);
  r.repetition = repetition_rate(samples);
  if (reference) {
    r.reference_ppl = reference_perplexity(*reference, samples, PerplexityAverage::kMicro, contexts);
    if (!gold.empty()) {
      const auto gold_contexts = contexts.size() == gold.size() ? contexts : std::span<const TokenBlock>();
      r.gold_ppl = reference_perplexity(*reference, gold, PerplexityAverage::kMicro, gold_contexts);
      r.delta_log_ppl = delta_log_ppl(*r.reference_ppl, *r.gold_ppl);
    }
  }
  return r;
}

namespace {

struct Field {
  const char* name;
  std::optional<double> value;
};

std::vector<Field> fields(const MetricReport& r) {
  return {{"dist1", r.dist1},
          {"dist2", r.dist2},
          {"dist3", r.dist3},
          {"zipf", r.zipf},
          {"rep", r.repetition},
          {"ref_ppl", r.reference_ppl},
          {"ref_log_ppl", r.reference_ppl ? std::optional(std::log(*r.reference_ppl)) : std::nullopt},
          {"gold_ppl", r.gold_ppl},
          {"delta_log_ppl", r.delta_log_ppl},
          {"samples", static_cast<double>(r.sample_count)}};
}

}  // namespace

void write_metric_csv(std::ostream& out, const MetricReport& report) {
  const auto fs = fields(report);
  for (std::size_t i = 0; i < fs.size(); ++i) out << (i ? "," : "") << fs[i].name;
  out << '\n' << std::setprecision(10);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (i) out << ',';
    if (fs[i].value) out << *fs[i].value;
  }
  out << '\n';
}

void write_metric_table(std::ostream& out, const MetricReport& report) {
  for (const Field& f : fields(report)) {
    out << std::left << std::setw(15) << f.name;
    if (f.value) {
      out << std::fixed << std::setprecision(4) << *f.value << std::defaultfloat;
    } else {
      out << "-";
    }
    out << '\n';
  }
}

}  // namespace simplexlm
