#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "simplexlm/autodiff.hpp"
#include "simplexlm/parameters.hpp"
#include "simplexlm/rng.hpp"

namespace simplexlm {

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
};

/// Per-layer attention probabilities captured during a forward pass:
/// weights[layer][head] is an n x n matrix.
struct AttentionProbe {
  std::vector<std::vector<Tensor>> weights;
};

/// Pre-norm transformer encoder stack registered into a ParameterSet.
///
/// Each layer computes x + MHA(LN(x)) then x + FFN(LN(x)) with a GELU
/// feed-forward; a final layer norm closes the stack.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, ParameterSet& params, const std::string& prefix, Rng& rng);

  /// `bound` is the full ParameterSet bound on the tape; x is n x d_model.
  Var apply(std::span<const Var> bound, Var x, bool causal, AttentionProbe* probe = nullptr) const;

  const EncoderConfig& config() const { return config_; }

 private:
  struct Layer {
    std::size_t ln1_gain, ln1_bias;
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_gain, ln2_bias;
    std::size_t w1, b1, w2, b2;
  };

  EncoderConfig config_;
  std::vector<Layer> layers_;
  std::size_t final_gain_ = 0;
  std::size_t final_bias_ = 0;
};

/// x W + b for x (n x in), W (in x out), b (1 x out).
Var linear(Var x, Var weight, Var bias);

}  // namespace simplexlm
