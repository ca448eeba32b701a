#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "common.hpp"
#include "simplexlm/attribute_classifier.hpp"
#include "simplexlm/errors.hpp"
#include "simplexlm/metrics.hpp"
#include "simplexlm/trainer.hpp"

namespace simplexlm::cli {

namespace {

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

std::string format_loss(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Vocabulary obtain_vocab(const Run& run, std::string_view text) {
  const RunConfig& c = run.config;
  const TokenizerMode mode = parse_tokenizer_mode(c.get_string("tokenizer"));
  Vocabulary vocab = c.has("vocab") ? Vocabulary::load(c.get_path("vocab"), mode)
                                    : Vocabulary::build(text, mode, c.get_uint("vocab_size"));
  vocab.save(run.output_dir / "vocab.txt");
  return vocab;
}

PackedCorpus pack_corpus(const Run& run, const Vocabulary& vocab, std::string_view text) {
  const TokenBlock ids = vocab.encode(text);
  PackedCorpus corpus = pack_sequences(ids, run.config.get_uint("seq_length"),
                                       run.config.get_double("holdout_fraction"),
                                       derive_seed(run.seed, 0x7061636b));
  corpus.validate(vocab.size());
  return corpus;
}

AdamWConfig optimizer_config(const RunConfig& c) {
  AdamWConfig a;
  a.learning_rate = c.get_double("learning_rate");
  a.beta1 = c.get_double("beta1");
  a.beta2 = c.get_double("beta2");
  a.epsilon = c.get_double("adam_epsilon");
  a.weight_decay = c.get_double("weight_decay");
  return a;
}

class LossLog {
 public:
  LossLog(const Run& run, bool wall_time)
      : run_(run), wall_time_(wall_time), start_(std::chrono::steady_clock::now()) {
    out_ << run.csv_header() << "step,per_token_nll" << (wall_time ? ",wall_time" : "") << '\n';
  }

  void add(std::uint64_t step, double loss) {
    out_ << step << ',' << format_loss(loss);
    if (wall_time_) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
      out_ << ',' << format_seconds(elapsed.count());
    }
    out_ << '\n';
  }

  void flush() const { run_.write("loss.csv", out_.str()); }

 private:
  const Run& run_;
  bool wall_time_;
  std::chrono::steady_clock::time_point start_;
  std::ostringstream out_;
};

int train_diffusion(Run& run) {
  RunConfig& c = run.config;
  const std::string text = read_text_file(c.get_path("corpus"));
  const Vocabulary vocab = obtain_vocab(run, text);
  const PackedCorpus corpus = pack_corpus(run, vocab, text);

  TrainConfig tc;
  tc.seq_length = c.get_uint("seq_length");
  tc.block_length = c.get_uint("block_length");
  tc.diffusion_steps = static_cast<int>(c.get_uint("diffusion_steps"));
  tc.batch_size = c.get_uint("batch_size");
  tc.optimizer = optimizer_config(c);
  tc.total_steps = c.get_uint("steps");
  tc.seed = run.seed;
  tc.checkpoint_interval = c.get_uint("checkpoint_interval");
  tc.check_finite = c.get_bool("check_finite");
  tc.validate();
  const NoiseSchedule schedule =
      NoiseSchedule::cosine(tc.diffusion_steps, c.get_double("schedule_offset"));

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.max_length = c.get_uint("max_length");
  mc.d_model = c.get_uint("d_model");
  mc.n_layers = c.get_uint("n_layers");
  mc.n_heads = c.get_uint("n_heads");
  mc.d_ff = c.get_uint("d_ff");
  mc.k = c.get_double("k");
  mc.validate();
  if (mc.max_length < tc.seq_length) {
    throw ConfigError("max_length " + std::to_string(mc.max_length) +
                      " is shorter than seq_length " + std::to_string(tc.seq_length));
  }

  std::optional<TrainState> resumed;
  if (c.has("resume")) {
    resumed = restore_train_state(load_checkpoint(c.get_path("resume"), ArtifactKind::kDiffusionModel));
    if (!(resumed->model.config() == mc)) {
      throw ConfigError("resume: checkpoint model config differs from the configured one");
    }
  }
  TrainState state = resumed ? std::move(*resumed)
                             : TrainState{DiffusionModel(mc, derive_seed(run.seed, 0x6d6f64656c)),
                                          {}, Rng(derive_seed(run.seed, 0x7472616e)), 0};
  if (!resumed) state.optimizer = AdamWState::zeros_for(state.model.parameters());

  auto checkpoint_of = [&](const TrainState& s) {
    Checkpoint ckpt = make_checkpoint(s, vocab.hash(), run.config_hash, run.seed);
    ckpt.set_meta("tokenizer", std::string(tokenizer_mode_name(vocab.mode())));
    ckpt.set_meta("schedule.steps", static_cast<std::size_t>(tc.diffusion_steps));
    ckpt.set_meta("schedule.offset", schedule.offset());
    ckpt.set_meta("train.block_length", tc.block_length);
    ckpt.set_meta("train.seq_length", tc.seq_length);
    return ckpt;
  };

  LossLog log(run, c.get_bool("wall_time"));
  TrainHooks hooks;
  hooks.on_step = [&](const StepLog& s) { log.add(s.step, s.per_token_nll); };
  hooks.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(run.output_dir / "checkpoint.bin", checkpoint_of(s));
    log.flush();
  };
  std::cerr << "train: " << corpus.train_indices().size() << " training sequences, |V| = "
            << vocab.size() << ", " << state.model.parameters().scalar_count() << " parameters\n";
  try {
    train_loop(state, corpus, schedule, tc, hooks);
  } catch (const DivergenceError&) {
    save_checkpoint(run.output_dir / "diverged.bin", checkpoint_of(state));
    log.flush();
    std::cerr << "train: state before the failing step saved to "
              << (run.output_dir / "diverged.bin").string() << '\n';
    throw;
  }
  return 0;
}

int train_reference(Run& run) {
  RunConfig& c = run.config;
  const std::string text = read_text_file(c.get_path("corpus"));
  const Vocabulary vocab = obtain_vocab(run, text);
  const PackedCorpus corpus = pack_corpus(run, vocab, text);
  ReferenceConfig rc;
  rc.vocab_size = vocab.size();
  rc.max_length = c.get_uint("max_length");
  rc.d_model = c.get_uint("d_model");
  rc.n_layers = c.get_uint("n_layers");
  rc.n_heads = c.get_uint("n_heads");
  rc.d_ff = c.get_uint("d_ff");
  ReferenceTrainConfig tc;
  tc.steps = c.get_uint("steps");
  tc.batch_size = c.get_uint("batch_size");
  tc.optimizer = optimizer_config(c);
  tc.seed = run.seed;
  LossLog log(run, c.get_bool("wall_time"));
  const ReferenceModel model = train_ar_reference(
      corpus, rc, vocab.hash(), tc, [&](std::uint64_t step, double loss) { log.add(step, loss); });
  Checkpoint ckpt = model.to_checkpoint(run.config_hash, run.seed);
  ckpt.set_meta("tokenizer", std::string(tokenizer_mode_name(vocab.mode())));
  save_checkpoint(run.output_dir / "checkpoint.bin", ckpt);
  log.flush();

  std::vector<TokenBlock> train, held;
  for (auto i : corpus.train_indices()) train.push_back(corpus.sequences[i]);
  for (auto i : corpus.heldout_indices()) held.push_back(corpus.sequences[i]);
  std::ostringstream report;
  report << run.csv_header() << "split,sequences,perplexity\n";
  report << "train," << train.size() << ',' << format_loss(reference_perplexity(model, train)) << '\n';
  if (!held.empty()) {
    report << "heldout," << held.size() << ',' << format_loss(reference_perplexity(model, held)) << '\n';
  }
  run.write("report.csv", report.str());
  return 0;
}

int train_classifier_cmd(Run& run) {
  RunConfig& c = run.config;
  const auto lines = read_labeled_corpus(c.get_path("corpus"));
  if (lines.empty()) throw DataError("labeled corpus " + c.get_path("corpus").string() + " is empty");
  std::string all_text;
  for (const auto& l : lines) all_text += l.text + "\n";
  const Vocabulary vocab = obtain_vocab(run, all_text);

  std::map<std::string, int> label_ids;
  for (const auto& l : lines) label_ids.emplace(l.label, 0);
  ClassifierConfig cc;
  for (auto& [name, id] : label_ids) {
    id = static_cast<int>(cc.labels.size());
    cc.labels.push_back(name);
  }
  std::vector<LabeledExample> examples;
  for (const auto& l : lines) examples.push_back({vocab.encode(l.text), label_ids.at(l.label)});
  cc.vocab_size = vocab.size();
  cc.max_length = c.get_uint("max_length");
  cc.d_model = c.get_uint("d_model");
  cc.n_layers = c.get_uint("n_layers");
  cc.n_heads = c.get_uint("n_heads");
  cc.d_ff = c.get_uint("d_ff");

  ClassifierTrainConfig tc;
  tc.epochs = c.get_uint("epochs");
  tc.batch_size = c.get_uint("batch_size");
  tc.optimizer = optimizer_config(c);
  tc.holdout_fraction = c.get_double("holdout_fraction");
  tc.seed = run.seed;
  ClassifierTrainReport report;
  const ClassifierHandle handle = train_classifier(examples, cc, vocab.hash(), tc, &report);
  Checkpoint ckpt = handle.to_checkpoint(run.config_hash, run.seed);
  ckpt.set_meta("tokenizer", std::string(tokenizer_mode_name(vocab.mode())));
  save_checkpoint(run.output_dir / "checkpoint.bin", ckpt);

  std::ostringstream loss;
  loss << run.csv_header() << "epoch,loss\n";
  for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
    loss << i + 1 << ',' << format_loss(report.epoch_loss[i]) << '\n';
  }
  run.write("loss.csv", loss.str());
  std::ostringstream rep;
  rep << run.csv_header() << "split,examples,accuracy\n";
  rep << "train," << report.train_count << ',' << format_loss(report.train_accuracy) << '\n';
  if (report.heldout_count > 0) {
    rep << "heldout," << report.heldout_count << ',' << format_loss(report.heldout_accuracy) << '\n';
  }
  run.write("report.csv", rep.str());
  std::cerr << "classifier: train accuracy " << report.train_accuracy;
  if (report.heldout_count > 0) std::cerr << ", held-out accuracy " << report.heldout_accuracy;
  std::cerr << '\n';
  return 0;
}

}  // namespace

int run_train(RunConfig config) {
  config.finalize();
  const std::string model = config.get_string("model");
  // Architecture and optimizer defaults depend on the model type.
  if (model == "diffusion") {
    default_to(config, "d_model", "128");
    default_to(config, "n_layers", "4");
    default_to(config, "d_ff", "512");
    default_to(config, "batch_size", "32");
    default_to(config, "learning_rate", "0.0001");
  } else if (model == "classifier") {
    default_to(config, "d_model", "64");
    default_to(config, "n_layers", "2");
    default_to(config, "d_ff", "128");
    default_to(config, "batch_size", "16");
    default_to(config, "learning_rate", "0.001");
  } else {
    default_to(config, "d_model", "64");
    default_to(config, "n_layers", "2");
    default_to(config, "d_ff", "256");
    default_to(config, "batch_size", "8");
    default_to(config, "learning_rate", "0.001");
  }
  Run run = start_run("train", std::move(config));
  if (model == "diffusion") return train_diffusion(run);
  if (model == "classifier") return train_classifier_cmd(run);
  return train_reference(run);
}

}  // namespace simplexlm::cli
