#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "simplexlm/attribute_classifier.hpp"
#include "simplexlm/decoder.hpp"
#include "simplexlm/errors.hpp"

namespace simplexlm::cli {

namespace {

struct Prompt {
  std::string text;
  TokenBlock ids;
};

struct DecodeSetup {
  LanguageModel lm;
  DecodeConfig decode;
  std::vector<Prompt> prompts;
  std::size_t samples = 1;
};

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

DecodeSetup prepare(RunConfig& config) {
  config.finalize();
  std::optional<std::filesystem::path> vocab;
  if (config.has("vocab")) vocab = config.get_path("vocab");
  DecodeSetup s{load_language_model(config.get_path("checkpoint"), vocab), {}, {}, 1};
  default_to(config, "decode_steps", std::to_string(s.lm.schedule.steps()));

  DecodeConfig& d = s.decode;
  d.block_length = config.get_uint("block_length");
  const auto steps = config.get_uint("decode_steps");
  if (steps < 1 || steps > static_cast<std::uint64_t>(s.lm.schedule.steps())) {
    throw ConfigError("decode_steps must lie in [1, " + std::to_string(s.lm.schedule.steps()) + "]");
  }
  d.decode_steps = static_cast<int>(steps);
  d.iterations = config.get_uint("iterations");
  const std::string projection = config.get_string("projection");
  const double top_p = config.get_double("top_p");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in [0, 1]");
  d.projection = projection == "greedy"     ? ProjectionStrategy::greedy()
                 : projection == "sampling" ? ProjectionStrategy::sampling(top_p)
                                            : ProjectionStrategy::multi_hot(top_p);
  if (config.has("end_token")) {
    const std::string tok = config.get_string("end_token");
    const int id = s.lm.vocab.id(tok);
    if (id == Vocabulary::kUnk && tok != Vocabulary::kUnkToken) {
      throw ConfigError("end_token '" + tok + "' is not in the vocabulary");
    }
    d.end_token = id;
  }
  d.record_trajectory = config.get_bool("trajectory");
  d.validate();
  s.samples = config.get_uint("samples");
  if (s.samples < 1) throw ConfigError("samples must be >= 1");

  if (config.has("prompts")) {
    for (auto& line : read_lines(config.get_path("prompts"), false)) {
      s.prompts.push_back({line, s.lm.vocab.encode(line)});
    }
  }
  if (s.prompts.empty()) s.prompts.push_back({"", {}});
  return s;
}

Json config_json(const DecodeConfig& d, double weight) {
  Json j;
  j["block_length"] = d.block_length;
  j["decode_steps"] = d.decode_steps;
  j["iterations"] = d.iterations;
  switch (d.projection.kind) {
    case ProjectionStrategy::Kind::kGreedy: j["projection"] = "greedy"; break;
    case ProjectionStrategy::Kind::kSampling: j["projection"] = "sampling"; break;
    case ProjectionStrategy::Kind::kMultiHot: j["projection"] = "multi_hot"; break;
  }
  if (d.projection.kind != ProjectionStrategy::Kind::kGreedy) j["top_p"] = d.projection.top_p;
  j["guidance_weight"] = weight;
  return j;
}

Json record_json(const DecodeSetup& s, std::size_t prompt_index, std::size_t sample,
                 const GenerationRecord& rec, const std::optional<double>& weight) {
  Json j;
  if (weight) j["lambda"] = *weight;
  j["prompt_index"] = prompt_index;
  j["sample"] = sample;
  j["seed"] = rec.seed;
  j["prompt"] = s.prompts[prompt_index].text;
  j["prompt_ids"] = rec.prompt;
  const TokenBlock out = rec.generated();
  j["output"] = s.lm.vocab.decode(out);
  j["output_ids"] = out;
  Json blocks = Json::array();
  for (const auto& b : rec.blocks) blocks.push_back(b.tokens);
  j["blocks"] = blocks;
  j["stopped_early"] = rec.stopped_early;
  j["config"] = config_json(rec.config, weight.value_or(0.0));
  return j;
}

Json trajectory_json(const DecodeSetup& s, std::size_t prompt_index, std::size_t sample,
                     const GenerationRecord& rec, const std::optional<double>& weight) {
  Json j;
  if (weight) j["lambda"] = *weight;
  j["prompt_index"] = prompt_index;
  j["sample"] = sample;
  Json blocks = Json::array();
  for (const auto& b : rec.blocks) {
    Json steps = Json::array();
    for (const auto& st : b.trajectory) {
      steps.push_back({{"t", st.timestep},
                       {"predicted", s.lm.vocab.decode(st.predicted)},
                       {"noisy", s.lm.vocab.decode(st.noisy)}});
    }
    blocks.push_back(steps);
  }
  j["blocks"] = blocks;
  return j;
}

/// Each (prompt, sample) pair owns an RNG stream so that adding prompts or
/// samples never changes existing outputs.
GenerationRecord generate_one(const DecodeSetup& s, std::uint64_t seed, std::size_t prompt_index,
                              std::size_t sample, const Guidance& guidance) {
  DecodeConfig d = s.decode;
  d.seed = derive_seed(seed, prompt_index, sample);
  return decode_sequence(s.lm.model, s.prompts[prompt_index].ids, d, s.lm.schedule, guidance);
}

ClassifierHandle load_classifier(const std::filesystem::path& path, const Vocabulary& vocab) {
  ClassifierHandle handle = ClassifierHandle::from_checkpoint(load_checkpoint(path, ArtifactKind::kClassifier));
  try {
    handle.require_vocab(vocab.hash());
  } catch (const DataError&) {
    throw DataError(path.string() + ": classifier vocabulary does not match the language model's");
  }
  return handle;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int run_generate(RunConfig config) {
  DecodeSetup s = prepare(config);
  Run run = start_run("generate", std::move(config));
  std::ostringstream out, traj;
  out << run.jsonl_header().dump() << '\n';
  traj << run.jsonl_header().dump() << '\n';
  for (std::size_t i = 0; i < s.prompts.size(); ++i) {
    for (std::size_t j = 0; j < s.samples; ++j) {
      const GenerationRecord rec = generate_one(s, run.seed, i, j, {});
      out << record_json(s, i, j, rec, std::nullopt).dump() << '\n';
      if (s.decode.record_trajectory) traj << trajectory_json(s, i, j, rec, std::nullopt).dump() << '\n';
    }
  }
  run.write("generations.jsonl", out.str());
  if (s.decode.record_trajectory) run.write("trajectory.jsonl", traj.str());
  return 0;
}

int run_control(RunConfig config) {
  DecodeSetup s = prepare(config);
  const ClassifierHandle classifier = load_classifier(config.get_path("classifier"), s.lm.vocab);
  std::optional<ClassifierHandle> verifier;
  if (config.has("verifier")) verifier = load_classifier(config.get_path("verifier"), s.lm.vocab);
  const int label = classifier.label_index(config.get_string("label"));
  std::optional<int> verifier_label;
  if (verifier) verifier_label = verifier->label_index(config.get_string("label"));
  const auto weights = config.get_float_list("weights");
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("weights: guidance weights must be >= 0");
  }
  const GuidanceObjective objective = config.get_string("objective") == "prob"
                                          ? GuidanceObjective::kProbability
                                          : GuidanceObjective::kLogProbability;
  Run run = start_run("control", std::move(config));

  std::ostringstream out, traj, scores, summary;
  out << run.jsonl_header().dump() << '\n';
  traj << run.jsonl_header().dump() << '\n';
  scores << run.csv_header()
         << "lambda,prompt_index,sample,internal_log_prob,internal_correct,external_correct\n";
  summary << run.csv_header()
          << "lambda,samples,internal_accuracy,internal_median_log_prob,external_accuracy\n";
  for (double w : weights) {
    const Guidance guidance{&classifier, label, w, objective};
    std::vector<double> log_probs;
    std::size_t internal_hits = 0, external_hits = 0;
    for (std::size_t i = 0; i < s.prompts.size(); ++i) {
      for (std::size_t j = 0; j < s.samples; ++j) {
        const GenerationRecord rec = generate_one(s, run.seed, i, j, guidance);
        out << record_json(s, i, j, rec, w).dump() << '\n';
        if (s.decode.record_trajectory) traj << trajectory_json(s, i, j, rec, w).dump() << '\n';
        const TokenBlock generated = rec.generated();
        const auto lp = classifier.classify_tokens(generated);
        const bool internal = classifier.predict(generated) == label;
        log_probs.push_back(lp[static_cast<std::size_t>(label)]);
        internal_hits += internal;
        scores << format_real(w) << ',' << i << ',' << j << ','
               << format_real(lp[static_cast<std::size_t>(label)]) << ',' << internal << ',';
        if (verifier) {
          const bool external = verifier->predict(generated) == *verifier_label;
          external_hits += external;
          scores << external;
        }
        scores << '\n';
      }
    }
    const double n = static_cast<double>(log_probs.size());
    summary << format_real(w) << ',' << log_probs.size() << ',' << format_real(internal_hits / n)
            << ',' << format_real(median(log_probs)) << ',';
    if (verifier) summary << format_real(external_hits / n);
    summary << '\n';
    std::cerr << "control: lambda " << w << " internal accuracy " << internal_hits / n;
    if (verifier) std::cerr << ", external accuracy " << external_hits / n;
    std::cerr << '\n';
  }
  run.write("generations.jsonl", out.str());
  if (s.decode.record_trajectory) run.write("trajectory.jsonl", traj.str());
  run.write("scores.csv", scores.str());
  run.write("summary.csv", summary.str());
  return 0;
}

}  // namespace simplexlm::cli
