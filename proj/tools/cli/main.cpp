#include <algorithm>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "common.hpp"
#include "simplexlm/errors.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

using simplexlm::ConfigSchema;
using simplexlm::RunConfig;

struct Subcommand {
  std::string name;
  std::string description;
  ConfigSchema schema;
  std::function<int(RunConfig)> run;
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flags;
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void register_options(Subcommand& sub, CLI::App& parent) {
  sub.app = parent.add_subcommand(sub.name, sub.description);
  sub.app->add_option("-c,--config", sub.config_file, "typed key/value config file")
      ->check(CLI::ExistingFile);
  sub.app->add_option("--set", sub.assignments, "override as key=value (repeatable)");
  for (const auto& key : sub.schema) {
    std::string help = key.help + " [" + std::string(simplexlm::value_type_name(key.type)) + "]";
    if (key.default_value) help += " (default " + *key.default_value + ")";
    sub.app->add_option(flag_name(key.name), sub.flags[key.name], help);
  }
}

RunConfig build_config(const Subcommand& sub) {
  RunConfig config(sub.schema);
  if (!sub.config_file.empty()) config.parse_file(sub.config_file);
  for (const auto& key : sub.schema) {
    const auto* opt = sub.app->get_option(flag_name(key.name));
    if (opt->count() > 0) config.set(key.name, sub.flags.at(key.name), flag_name(key.name));
  }
  for (const auto& a : sub.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw simplexlm::ConfigError("--set expects key=value, got '" + a + "'");
    config.set(a.substr(0, eq), a.substr(eq + 1), "--set");
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = simplexlm::cli;
  CLI::App app{"Semi-autoregressive simplex diffusion language modelling"};
  app.require_subcommand(1);
  std::vector<Subcommand> subs;
  subs.push_back({"train", "train a diffusion model, attribute classifier or reference LM",
                  cli::train_schema(), cli::run_train});
  subs.push_back({"generate", "decode text block by block", cli::generate_schema(), cli::run_generate});
  subs.push_back({"control", "classifier-guided decoding over a sweep of guidance weights",
                  cli::control_schema(), cli::run_control});
  subs.push_back({"eval", "diversity and perplexity metrics for generations", cli::eval_schema(),
                  cli::run_eval});
  subs.push_back({"schedule-dump", "write the noise schedule as CSV", cli::schedule_schema(),
                  cli::run_schedule_dump});
  for (auto& s : subs) register_options(s, app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  for (auto& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      return s.run(build_config(s));
    } catch (const simplexlm::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const simplexlm::ShapeError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const simplexlm::DataError& e) {
      std::cerr << "data error: " << e.what() << '\n';
      return kExitData;
    } catch (const simplexlm::NumericError& e) {
      std::cerr << "numeric error: " << e.what() << '\n';
      return kExitNumeric;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 1;
}
