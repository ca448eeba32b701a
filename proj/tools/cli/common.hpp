#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simplexlm/checkpoint.hpp"
#include "simplexlm/diffusion_model.hpp"
#include "simplexlm/noise_schedule.hpp"
#include "simplexlm/run_config.hpp"
#include "simplexlm/text_corpus.hpp"
#include "simplexlm/trainer.hpp"

namespace simplexlm::cli {

using Json = nlohmann::ordered_json;

ConfigSchema train_schema();
ConfigSchema generate_schema();
ConfigSchema control_schema();
ConfigSchema eval_schema();
ConfigSchema schedule_schema();

/// Shared state of one subcommand invocation.
struct Run {
  std::string command;
  RunConfig config;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  /// `# command config_hash=... seed=...` line used atop CSV and text files.
  std::string csv_header() const;
  /// First record of every JSONL output.
  Json jsonl_header() const;
  /// Atomic write of `name` inside the output directory.
  void write(const std::string& name, const std::string& contents) const;
};

/// Creates the output directory and echoes the effective config into it.
Run start_run(std::string command, RunConfig config);

/// Sets `key` to `value` unless the user already did.
void default_to(RunConfig& config, const std::string& key, const std::string& value);

/// A diffusion checkpoint with its schedule and tokenizer.
struct LanguageModel {
  DiffusionModel model;
  NoiseSchedule schedule;
  Vocabulary vocab;
  Checkpoint checkpoint;
};

/// Loads a diffusion checkpoint and a vocabulary (default: vocab.txt next to
/// the checkpoint); throws DataError when the vocabulary hash differs.
LanguageModel load_language_model(const std::filesystem::path& checkpoint,
                                  const std::optional<std::filesystem::path>& vocab);

/// Non-empty lines only when `skip_blank`; otherwise every line.
std::vector<std::string> read_lines(const std::filesystem::path& path, bool skip_blank);

int run_train(RunConfig config);
int run_generate(RunConfig config);
int run_control(RunConfig config);
int run_eval(RunConfig config);
int run_schedule_dump(RunConfig config);

}  // namespace simplexlm::cli
