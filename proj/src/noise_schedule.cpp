#include "simplexlm/noise_schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "simplexlm/errors.hpp"

namespace simplexlm {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, std::vector<int> timesteps,
                             int train_steps, double offset)
    : alpha_bar_(std::move(alpha_bar)),
      timesteps_(std::move(timesteps)),
      train_steps_(train_steps),
      offset_(offset) {
  validate();
}

NoiseSchedule NoiseSchedule::cosine(int steps, double offset) {
  if (steps < 1) throw ConfigError("noise schedule needs T >= 1, got " + std::to_string(steps));
  if (!(offset > 0.0)) throw ConfigError("noise schedule offset s must be positive");
  const double total = static_cast<double>(steps);
  auto r = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / total + offset) / (1.0 + offset) *
                              std::numbers::pi / 2.0);
    return c * c;
  };
  const double r0 = r(0);
  std::vector<double> alpha_bar(static_cast<std::size_t>(steps) + 1);
  std::vector<int> timesteps(alpha_bar.size());
  for (int t = 0; t <= steps; ++t) {
    alpha_bar[static_cast<std::size_t>(t)] = r(t) / r0;
    timesteps[static_cast<std::size_t>(t)] = t;
  }
  return NoiseSchedule(std::move(alpha_bar), std::move(timesteps), steps, offset);
}

void NoiseSchedule::validate() const {
  if (alpha_bar_.size() < 2) throw ConfigError("noise schedule needs at least one step");
  if (alpha_bar_.front() != 1.0) throw ConfigError("noise schedule must start at alpha_bar = 1");
  for (std::size_t k = 1; k < alpha_bar_.size(); ++k) {
    if (!(alpha_bar_[k] < alpha_bar_[k - 1])) {
      throw ConfigError("alpha_bar not strictly decreasing at step " + std::to_string(k));
    }
  }
  if (alpha_bar_.back() > 1e-6) throw ConfigError("alpha_bar_T must be <= 1e-6");
}

double NoiseSchedule::alpha_bar(int k) const {
  if (k < 0 || k > steps()) {
    throw ConfigError("timestep index " + std::to_string(k) + " outside [0, " +
                      std::to_string(steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(k)];
}

double NoiseSchedule::alpha(int k) const {
  if (k < 1 || k > steps()) {
    throw ConfigError("alpha index " + std::to_string(k) + " outside [1, " +
                      std::to_string(steps()) + "]");
  }
  return alpha_bar_[static_cast<std::size_t>(k)] / alpha_bar_[static_cast<std::size_t>(k) - 1];
}

int NoiseSchedule::timestep(int k) const {
  if (k < 0 || k > steps()) throw ConfigError("timestep index out of range");
  return timesteps_[static_cast<std::size_t>(k)];
}

double NoiseSchedule::compensation_coefficient(int k) const {
  const double a = alpha(k);
  const double ab = alpha_bar(k);
  return std::sqrt((a - ab) / (1.0 - ab));
}

NoiseSchedule NoiseSchedule::subsample(int decode_steps) const {
  if (decode_steps < 1 || decode_steps > steps()) {
    throw ConfigError("T_decode must lie in [1, " + std::to_string(steps()) + "], got " +
                      std::to_string(decode_steps));
  }
  const long long n = steps();
  const long long m = decode_steps;
  std::vector<double> alpha_bar(static_cast<std::size_t>(m) + 1);
  std::vector<int> timesteps(alpha_bar.size());
  for (long long j = 0; j <= m; ++j) {
    // round(j * n / m), halves rounded up
    const auto idx = static_cast<std::size_t>((2 * j * n + m) / (2 * m));
    alpha_bar[static_cast<std::size_t>(j)] = alpha_bar_[idx];
    timesteps[static_cast<std::size_t>(j)] = timesteps_[idx];
  }
  return NoiseSchedule(std::move(alpha_bar), std::move(timesteps), train_steps_, offset_);
}

}  // namespace simplexlm
