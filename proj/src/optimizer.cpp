#include "simplexlm/optimizer.hpp"

#include <cmath>

#include "simplexlm/errors.hpp"

namespace simplexlm {

AdamWState AdamWState::zeros_for(const ParameterSet& params) {
  return AdamWState{params.zeros_like(), params.zeros_like(), 0};
}

void adamw_step(ParameterSet& params, const std::vector<Tensor>& grads, AdamWState& state,
                const AdamWConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("optimizer state does not match parameter count");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= config.learning_rate *
              (m_hat / (std::sqrt(v_hat) + config.epsilon) + config.weight_decay * p[j]);
    }
  }
}

}  // namespace simplexlm
