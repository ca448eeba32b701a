#include <cstdio>
#include <iostream>
#include <sstream>

#include "common.hpp"
#include "simplexlm/errors.hpp"
#include "simplexlm/metrics.hpp"
#include "simplexlm/noise_schedule.hpp"

namespace simplexlm::cli {

namespace {

struct SampleSet {
  std::vector<TokenBlock> samples;
  std::vector<TokenBlock> contexts;
};

TokenBlock ids_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw DataError(where + ": expected an array of token ids");
  TokenBlock out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw DataError(where + ": token ids must be integers");
    out.push_back(v.get<int>());
  }
  return out;
}

/// JSONL generation records, or text lines `[prompt<TAB>]continuation`.
SampleSet read_samples(const std::filesystem::path& path, const Vocabulary* vocab) {
  const auto lines = read_lines(path, true);
  SampleSet set;
  const bool jsonl = !lines.empty() && lines.front().find_first_not_of(" \t") != std::string::npos &&
                     lines.front()[lines.front().find_first_not_of(" \t")] == '{';
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string where = path.string() + ":" + std::to_string(n + 1);
    if (jsonl) {
      Json j;
      try {
        j = Json::parse(lines[n]);
      } catch (const Json::parse_error& e) {
        throw DataError(where + ": malformed record: " + e.what());
      }
      if (!j.is_object()) throw DataError(where + ": record is not an object");
      if (j.value("type", "") == "header") continue;
      if (!j.contains("output_ids")) throw DataError(where + ": record lacks output_ids");
      set.samples.push_back(ids_from(j["output_ids"], where));
      set.contexts.push_back(j.contains("prompt_ids") ? ids_from(j["prompt_ids"], where) : TokenBlock{});
    } else {
      if (!vocab) throw ConfigError("vocab is required to read text file " + path.string());
      const auto tab = lines[n].find('\t');
      if (tab == std::string::npos) {
        set.samples.push_back(vocab->encode(lines[n]));
        set.contexts.emplace_back();
      } else {
        set.contexts.push_back(vocab->encode(lines[n].substr(0, tab)));
        set.samples.push_back(vocab->encode(lines[n].substr(tab + 1)));
      }
    }
  }
  if (set.samples.empty()) throw DataError(path.string() + " holds no samples");
  return set;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int run_eval(RunConfig config) {
  Run run = start_run("eval", std::move(config));
  const RunConfig& c = run.config;
  std::optional<Vocabulary> vocab;
  if (c.has("vocab")) vocab = Vocabulary::load(c.get_path("vocab"), parse_tokenizer_mode(c.get_string("tokenizer")));
  std::optional<ReferenceModel> reference;
  if (c.has("reference")) {
    reference = ReferenceModel::from_checkpoint(load_checkpoint(c.get_path("reference"), ArtifactKind::kReferenceModel));
    if (vocab && vocab->hash() != reference->vocab_hash()) {
      throw DataError("reference model vocabulary does not match " + c.get_path("vocab").string());
    }
  }
  const SampleSet gen = read_samples(c.get_path("generations"), vocab ? &*vocab : nullptr);
  SampleSet gold;
  if (c.has("gold")) gold = read_samples(c.get_path("gold"), vocab ? &*vocab : nullptr);

  MetricReport report;
  report = compute_metrics(gen.samples, nullptr);
  if (reference) {
    report.reference_ppl = reference_perplexity(*reference, gen.samples, PerplexityAverage::kMicro, gen.contexts);
    if (c.has("gold")) {
      report.gold_ppl = reference_perplexity(*reference, gold.samples, PerplexityAverage::kMicro, gold.contexts);
      report.delta_log_ppl = delta_log_ppl(*report.reference_ppl, *report.gold_ppl);
    }
  }
  std::ostringstream csv;
  csv << run.csv_header();
  write_metric_csv(csv, report);
  run.write("metrics.csv", csv.str());
  write_metric_table(std::cout, report);
  return 0;
}

int run_schedule_dump(RunConfig config) {
  Run run = start_run("schedule-dump", std::move(config));
  const auto steps = run.config.get_uint("diffusion_steps");
  if (steps < 1 || steps > 10'000'000) throw ConfigError("diffusion_steps must lie in [1, 10^7]");
  const NoiseSchedule s = NoiseSchedule::cosine(static_cast<int>(steps), run.config.get_double("schedule_offset"));
  std::ostringstream csv;
  csv << run.csv_header() << "t,alpha_bar,alpha,coefficient\n";
  csv << "0," << format_real(s.alpha_bar(0)) << ",,\n";
  std::size_t above = 0;
  for (int t = 1; t <= s.steps(); ++t) {
    const double coef = s.compensation_coefficient(t);
    above += coef > 0.98;
    csv << t << ',' << format_real(s.alpha_bar(t)) << ',' << format_real(s.alpha(t)) << ','
        << format_real(coef) << '\n';
  }
  run.write("schedule.csv", csv.str());
  std::cout << "coefficient > 0.98 at " << above << " of " << s.steps() << " timesteps ("
            << 100.0 * static_cast<double>(above) / static_cast<double>(s.steps()) << "%)\n";
  return 0;
}

}  // namespace simplexlm::cli
