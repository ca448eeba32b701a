#include "simplexlm/simplex_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simplexlm/errors.hpp"

namespace simplexlm {

ProjectionStrategy ProjectionStrategy::sampling(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("top_p must lie in [0, 1]");
  return {Kind::kSampling, p};
}

ProjectionStrategy ProjectionStrategy::multi_hot(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("top_p must lie in [0, 1]");
  return {Kind::kMultiHot, p};
}

LogitBlock logits_generation(std::span<const int> tokens, double k, std::size_t vocab) {
  if (!(k > 0.0)) throw ConfigError("one-hot magnitude K must be positive");
  LogitBlock out{Tensor::filled({tokens.size(), vocab}, -k), k};
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    if (tokens[j] < 0 || static_cast<std::size_t>(tokens[j]) >= vocab) {
      throw DataError("token id " + std::to_string(tokens[j]) + " outside vocabulary of " +
                      std::to_string(vocab));
    }
    out.logits.at(j, static_cast<std::size_t>(tokens[j])) = k;
  }
  return out;
}

LogitBlock renoise(const LogitBlock& clean, double alpha_bar, Rng& rng) {
  const double signal = std::sqrt(alpha_bar);
  const double noise = std::sqrt(1.0 - alpha_bar) * clean.k;
  LogitBlock out = clean;
  for (double& x : out.logits.values()) x = signal * x + noise * rng.normal();
  return out;
}

LogitBlock forward_diffuse(const LogitBlock& clean, const NoiseSchedule& schedule, int k, Rng& rng) {
  return renoise(clean, schedule.alpha_bar(k), rng);
}

TokenBlock argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  TokenBlock out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data() + r * cols;
    // max_element returns the first maximum, i.e. the lowest id on ties.
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

std::vector<int> nucleus(std::span<const double> logits_row, double top_p) {
  const std::size_t n = logits_row.size();
  if (n == 0) throw ShapeError("nucleus of an empty row");
  const double mx = *std::max_element(logits_row.begin(), logits_row.end());
  std::vector<double> probs(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += probs[i] = std::exp(logits_row[i] - mx);
  for (double& p : probs) p /= z;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)]; });
  if (top_p >= 1.0) return order;

  double cumulative = 0.0;
  std::size_t keep = 0;
  while (keep < n) {
    cumulative += probs[static_cast<std::size_t>(order[keep])];
    ++keep;
    if (cumulative >= top_p) break;
  }
  order.resize(keep);
  return order;
}

LogitBlock logits_projection(const Tensor& raw, const ProjectionStrategy& strategy, double k,
                             Rng& rng) {
  const std::size_t rows = raw.rows();
  const std::size_t cols = raw.cols();
  LogitBlock out{Tensor::filled({rows, cols}, -k), k};
  if (strategy.kind == ProjectionStrategy::Kind::kGreedy) {
    const TokenBlock best = argmax_rows(raw);
    for (std::size_t r = 0; r < rows; ++r) out.logits.at(r, static_cast<std::size_t>(best[r])) = k;
    return out;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::span<const double> row(raw.data() + r * cols, cols);
    const std::vector<int> members = nucleus(row, strategy.top_p);
    if (strategy.kind == ProjectionStrategy::Kind::kMultiHot) {
      for (int id : members) out.logits.at(r, static_cast<std::size_t>(id)) = k;
      continue;
    }
    int chosen = members.front();
    if (members.size() > 1) {
      const double mx = row[static_cast<std::size_t>(members.front())];
      std::vector<double> weights(members.size());
      double mass = 0.0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        mass += weights[i] = std::exp(row[static_cast<std::size_t>(members[i])] - mx);
      }
      double u = rng.uniform() * mass;
      chosen = members.back();
      for (std::size_t i = 0; i < members.size(); ++i) {
        if (u < weights[i]) {
          chosen = members[i];
          break;
        }
        u -= weights[i];
      }
    }
    out.logits.at(r, static_cast<std::size_t>(chosen)) = k;
  }
  return out;
}

}  // namespace simplexlm
