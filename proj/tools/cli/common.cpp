#include "common.hpp"

#include <sstream>

#include "simplexlm/errors.hpp"

namespace simplexlm::cli {

namespace {

ConfigKey key(std::string name, ValueType type, std::optional<std::string> def, std::string help,
              std::vector<std::string> choices = {}) {
  ConfigKey k;
  k.name = std::move(name);
  k.type = type;
  k.default_value = std::move(def);
  k.help = std::move(help);
  k.choices = std::move(choices);
  return k;
}

ConfigKey required(std::string name, ValueType type, std::string help) {
  ConfigKey k = key(std::move(name), type, std::nullopt, std::move(help));
  k.required = true;
  k.must_exist = type == ValueType::kPath;
  return k;
}

ConfigKey input(std::string name, std::string help) {
  ConfigKey k = key(std::move(name), ValueType::kPath, std::nullopt, std::move(help));
  k.must_exist = true;
  return k;
}

ConfigKey output_dir() {
  ConfigKey k = key("output_dir", ValueType::kPath, std::nullopt, "directory for all outputs");
  k.required = true;
  return k;
}

ConfigKey seed() { return required("seed", ValueType::kUint, "random seed"); }

void add_decode_keys(ConfigSchema& s) {
  s.push_back(required("checkpoint", ValueType::kPath, "diffusion model checkpoint"));
  s.push_back(input("vocab", "vocabulary file (default: vocab.txt beside the checkpoint)"));
  s.push_back(input("prompts", "prompt file, one prompt per line (default: one empty prompt)"));
  s.push_back(key("block_length", ValueType::kUint, "8", "tokens per decoded block"));
  s.push_back(key("decode_steps", ValueType::kUint, std::nullopt,
                  "reverse diffusion steps per block (default: training T)"));
  s.push_back(key("iterations", ValueType::kUint, "4", "number of blocks m"));
  s.push_back(key("samples", ValueType::kUint, "1", "generations per prompt"));
  s.push_back(key("projection", ValueType::kString, "greedy", "logits projection",
                  {"greedy", "sampling", "multi_hot"}));
  s.push_back(key("top_p", ValueType::kFloat, "0.9", "nucleus mass for sampling and multi_hot"));
  s.push_back(key("end_token", ValueType::kString, std::nullopt, "stop after a block containing this token"));
  s.push_back(key("trajectory", ValueType::kBool, "false", "write per-step argmax snapshots"));
}

}  // namespace

ConfigSchema train_schema() {
  using VT = ValueType;
  ConfigSchema s{seed(), output_dir()};
  s.push_back(key("model", VT::kString, "diffusion", "what to train",
                  {"diffusion", "classifier", "reference"}));
  s.push_back(required("corpus", VT::kPath,
                       "UTF-8 text (classifier: label<TAB>text lines)"));
  s.push_back(input("vocab", "reuse this vocabulary instead of building one"));
  s.push_back(key("tokenizer", VT::kString, "word", "token unit", {"word", "char"}));
  s.push_back(key("vocab_size", VT::kUint, "512", "maximum vocabulary size including reserved ids"));
  s.push_back(key("seq_length", VT::kUint, "64", "packed sequence length L"));
  s.push_back(key("holdout_fraction", VT::kFloat, "0.01", "held-out share of sequences or examples"));
  s.push_back(key("block_length", VT::kUint, "8", "training block length B"));
  s.push_back(key("diffusion_steps", VT::kUint, "200", "training timesteps T"));
  s.push_back(key("schedule_offset", VT::kFloat, "0.0001", "cosine schedule offset s"));
  s.push_back(key("k", VT::kFloat, "5", "almost-one-hot magnitude K"));
  s.push_back(key("batch_size", VT::kUint, std::nullopt, "sequences per step"));
  s.push_back(key("learning_rate", VT::kFloat, std::nullopt, "AdamW learning rate"));
  s.push_back(key("weight_decay", VT::kFloat, "0.01", "decoupled weight decay"));
  s.push_back(key("beta1", VT::kFloat, "0.9", "Adam beta1"));
  s.push_back(key("beta2", VT::kFloat, "0.999", "Adam beta2"));
  s.push_back(key("adam_epsilon", VT::kFloat, "1e-08", "Adam epsilon"));
  s.push_back(key("steps", VT::kUint, "1000", "optimizer steps (classifier: ignored, see epochs)"));
  s.push_back(key("epochs", VT::kUint, "10", "classifier training epochs"));
  s.push_back(key("checkpoint_interval", VT::kUint, "0", "steps between checkpoints (0: end only)"));
  s.push_back(key("max_length", VT::kUint, "96", "longest input the model accepts"));
  s.push_back(key("d_model", VT::kUint, std::nullopt, "hidden width"));
  s.push_back(key("n_layers", VT::kUint, std::nullopt, "encoder layers"));
  s.push_back(key("n_heads", VT::kUint, "4", "attention heads"));
  s.push_back(key("d_ff", VT::kUint, std::nullopt, "feed-forward width"));
  s.push_back(key("check_finite", VT::kBool, "false", "validate every intermediate value"));
  s.push_back(key("wall_time", VT::kBool, "true", "record elapsed seconds in loss.csv"));
  s.push_back(input("resume", "diffusion checkpoint to continue from"));
  return s;
}

ConfigSchema generate_schema() {
  ConfigSchema s{seed(), output_dir()};
  add_decode_keys(s);
  return s;
}

ConfigSchema control_schema() {
  ConfigSchema s = generate_schema();
  s.push_back(required("classifier", ValueType::kPath, "attribute classifier checkpoint"));
  s.push_back(input("verifier", "independent classifier used only for scoring"));
  s.push_back(required("label", ValueType::kString, "target attribute label"));
  s.push_back(key("weights", ValueType::kFloatList, "0,100,500,2000", "guidance weights to sweep"));
  s.push_back(key("objective", ValueType::kString, "log_prob", "guided quantity",
                  {"log_prob", "prob"}));
  return s;
}

ConfigSchema eval_schema() {
  ConfigSchema s{key("seed", ValueType::kUint, "0", "recorded in headers only"), output_dir()};
  s.push_back(required("generations", ValueType::kPath,
                       "generations JSONL, or text lines ([prompt<TAB>]continuation)"));
  s.push_back(input("gold", "reference continuations, same formats as generations"));
  s.push_back(input("reference", "reference language model checkpoint"));
  s.push_back(input("vocab", "vocabulary for text inputs"));
  s.push_back(key("tokenizer", ValueType::kString, "word", "token unit of the vocabulary",
                  {"word", "char"}));
  return s;
}

ConfigSchema schedule_schema() {
  ConfigSchema s{key("seed", ValueType::kUint, "0", "recorded in headers only"), output_dir()};
  s.push_back(key("diffusion_steps", ValueType::kUint, "5000", "timesteps T"));
  s.push_back(key("schedule_offset", ValueType::kFloat, "0.0001", "cosine offset s"));
  return s;
}

std::string Run::csv_header() const {
  return "# " + command + " config_hash=" + hex64(config_hash) + " seed=" + std::to_string(seed) + "\n";
}

Json Run::jsonl_header() const {
  Json h;
  h["type"] = "header";
  h["command"] = command;
  h["config_hash"] = hex64(config_hash);
  h["seed"] = seed;
  return h;
}

void Run::write(const std::string& name, const std::string& contents) const {
  write_file_atomic(output_dir / name, contents);
}

Run start_run(std::string command, RunConfig config) {
  config.finalize();
  Run run{std::move(command), std::move(config), {}, 0, 0};
  run.output_dir = run.config.get_path("output_dir");
  run.seed = run.config.get_uint("seed");
  run.config_hash = run.config.hash({"output_dir"});
  std::error_code ec;
  std::filesystem::create_directories(run.output_dir, ec);
  if (ec) throw ConfigError("output_dir: cannot create " + run.output_dir.string() + ": " + ec.message());
  run.write("config.effective", run.csv_header() + run.config.canonical());
  return run;
}

void default_to(RunConfig& config, const std::string& key, const std::string& value) {
  if (!config.has(key)) config.set(key, value, "default");
}

LanguageModel load_language_model(const std::filesystem::path& checkpoint_path,
                                  const std::optional<std::filesystem::path>& vocab_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path, ArtifactKind::kDiffusionModel);
  DiffusionModel model = restore_model(ckpt);
  const auto steps = ckpt.meta_size("schedule.steps");
  NoiseSchedule schedule = NoiseSchedule::cosine(static_cast<int>(steps), ckpt.meta_double("schedule.offset"));
  const std::filesystem::path vp = vocab_path ? *vocab_path : checkpoint_path.parent_path() / "vocab.txt";
  Vocabulary vocab = Vocabulary::load(vp, parse_tokenizer_mode(ckpt.meta("tokenizer")));
  if (vocab.hash() != ckpt.vocab_hash) {
    throw DataError("vocabulary " + vp.string() + " does not match the checkpoint's tokenizer");
  }
  if (vocab.size() != model.config().vocab_size) {
    throw DataError("vocabulary size differs from the model's");
  }
  return {std::move(model), std::move(schedule), std::move(vocab), std::move(ckpt)};
}

std::vector<std::string> read_lines(const std::filesystem::path& path, bool skip_blank) {
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_blank && line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace simplexlm::cli
