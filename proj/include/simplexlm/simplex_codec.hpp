#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "simplexlm/noise_schedule.hpp"
#include "simplexlm/rng.hpp"
#include "simplexlm/tensor.hpp"

namespace simplexlm {

/// Contiguous run of token ids.
using TokenBlock = std::vector<int>;

/// Sentinel id standing in for an empty context (shares id 0 with padding).
inline constexpr int kBos = 0;

/// B x V matrix of logits over the vocabulary together with the one-hot
/// magnitude K used to build or re-noise it.
struct LogitBlock {
  Tensor logits;
  double k = 5.0;

  std::size_t length() const { return logits.rows(); }
  std::size_t vocab() const { return logits.cols(); }
};

struct ProjectionStrategy {
  enum class Kind { kGreedy, kSampling, kMultiHot };

  Kind kind = Kind::kGreedy;
  double top_p = 0.0;

  static ProjectionStrategy greedy() { return {Kind::kGreedy, 0.0}; }
  static ProjectionStrategy sampling(double p);
  static ProjectionStrategy multi_hot(double p);
};

/// +K at each token's id and -K elsewhere.
LogitBlock logits_generation(std::span<const int> tokens, double k, std::size_t vocab);

/// sqrt(alpha_bar) * clean + sqrt(1 - alpha_bar) * eps with eps ~ N(0, K^2).
LogitBlock renoise(const LogitBlock& clean, double alpha_bar, Rng& rng);

/// Forward diffusion of clean logits to schedule entry k.
LogitBlock forward_diffuse(const LogitBlock& clean, const NoiseSchedule& schedule, int k, Rng& rng);

/// Row-wise argmax; ties resolve to the lowest id.
TokenBlock argmax_rows(const Tensor& logits);

/// Smallest descending-probability prefix of softmax(row) whose cumulative
/// mass reaches top_p (always at least one id; top_p >= 1 keeps all ids).
/// Equal probabilities order by lower id.
std::vector<int> nucleus(std::span<const double> logits_row, double top_p);

/// Maps raw logits back to {-K, +K} using the given strategy. The sampling
/// strategy draws from `rng` only when the nucleus holds more than one id.
LogitBlock logits_projection(const Tensor& raw, const ProjectionStrategy& strategy, double k,
                             Rng& rng);

}  // namespace simplexlm
