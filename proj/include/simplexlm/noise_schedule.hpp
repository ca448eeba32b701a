#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace simplexlm {

/// Cumulative signal-retention table for the forward diffusion process.
///
/// Index k runs over 0..steps(). For a schedule built directly, k is the
/// timestep itself. A subsampled schedule keeps a coarser grid whose entries
/// point back into the parent table through timestep(k), so the model's
/// time input t/T stays on the training scale.
class NoiseSchedule {
 public:
  /// alpha_bar_t = r(t) / r(0) with r(t) = cos(((t/T + s) / (1 + s)) * pi/2)^2.
  static NoiseSchedule cosine(int steps, double offset = 1e-4);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  /// T of the training grid the timesteps refer to.
  int train_steps() const { return train_steps_; }
  double offset() const { return offset_; }

  double alpha_bar(int k) const;
  /// alpha_k = alpha_bar_k / alpha_bar_{k-1}, for 1 <= k <= steps().
  double alpha(int k) const;
  /// Training-grid timestep of entry k.
  int timestep(int k) const;

  /// sqrt((alpha_k - alpha_bar_k) / (1 - alpha_bar_k)), the factor that
  /// relates a DDPM reverse step to re-noising a clean-data estimate.
  double compensation_coefficient(int k) const;

  /// Evenly spaced sub-grid t_j = round(j * steps() / decode_steps) for
  /// j = 0..decode_steps, reusing this table's alpha_bar values.
  NoiseSchedule subsample(int decode_steps) const;

  std::span<const double> alpha_bar_table() const { return alpha_bar_; }
  std::span<const int> timestep_table() const { return timesteps_; }

 private:
  NoiseSchedule(std::vector<double> alpha_bar, std::vector<int> timesteps, int train_steps,
                double offset);
  void validate() const;

  std::vector<double> alpha_bar_;
  std::vector<int> timesteps_;
  int train_steps_ = 0;
  double offset_ = 0.0;
};

}  // namespace simplexlm
