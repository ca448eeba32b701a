#pragma once

#include <cstdint>
#include <vector>

#include "simplexlm/parameters.hpp"

namespace simplexlm {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moment estimates, one tensor per parameter.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamWState zeros_for(const ParameterSet& params);
  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

/// One Adam update with decoupled weight decay:
/// p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
void adamw_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamWState& state,
                const AdamWConfig& config);

}  // namespace simplexlm
