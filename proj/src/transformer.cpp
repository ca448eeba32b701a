#include "simplexlm/transformer.hpp"

#include <cmath>

#include "simplexlm/errors.hpp"

namespace simplexlm {

namespace {
constexpr double kInitStd = 0.02;
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Encoder::Encoder(const EncoderConfig& config, ParameterSet& params, const std::string& prefix,
                 Rng& rng)
    : config_(config) {
  const std::size_t d = config.d_model;
  if (d == 0 || config.n_heads == 0 || d % config.n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  const double residual_std =
      kInitStd / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(config.n_layers, 1)));
  auto ones = [](std::size_t n) { return Tensor::filled({1, n}, 1.0); };
  auto zeros = [](std::size_t n) { return Tensor({1, n}); };
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    Layer layer{};
    layer.ln1_gain = params.add(p + "ln1.gain", ones(d));
    layer.ln1_bias = params.add(p + "ln1.bias", zeros(d));
    layer.wq = params.add(p + "attn.wq", random_normal({d, d}, kInitStd, rng));
    layer.bq = params.add(p + "attn.bq", zeros(d));
    layer.wk = params.add(p + "attn.wk", random_normal({d, d}, kInitStd, rng));
    layer.bk = params.add(p + "attn.bk", zeros(d));
    layer.wv = params.add(p + "attn.wv", random_normal({d, d}, kInitStd, rng));
    layer.bv = params.add(p + "attn.bv", zeros(d));
    layer.wo = params.add(p + "attn.wo", random_normal({d, d}, residual_std, rng));
    layer.bo = params.add(p + "attn.bo", zeros(d));
    layer.ln2_gain = params.add(p + "ln2.gain", ones(d));
    layer.ln2_bias = params.add(p + "ln2.bias", zeros(d));
    layer.w1 = params.add(p + "ffn.w1", random_normal({d, config.d_ff}, kInitStd, rng));
    layer.b1 = params.add(p + "ffn.b1", zeros(config.d_ff));
    layer.w2 = params.add(p + "ffn.w2", random_normal({config.d_ff, d}, residual_std, rng));
    layer.b2 = params.add(p + "ffn.b2", zeros(d));
    layers_.push_back(layer);
  }
  final_gain_ = params.add(prefix + "final_ln.gain", ones(d));
  final_bias_ = params.add(prefix + "final_ln.bias", zeros(d));
}

Var Encoder::apply(std::span<const Var> bound, Var x, bool causal, AttentionProbe* probe) const {
  if (probe) probe->weights.clear();
  for (const Layer& l : layers_) {
    Var h = layer_norm(x, bound[l.ln1_gain], bound[l.ln1_bias]);
    Var q = linear(h, bound[l.wq], bound[l.bq]);
    Var k = linear(h, bound[l.wk], bound[l.bk]);
    Var v = linear(h, bound[l.wv], bound[l.bv]);
    std::vector<Tensor>* weights = nullptr;
    if (probe) weights = &probe->weights.emplace_back();
    Var a = attention(q, k, v, config_.n_heads, causal, weights);
    x = add(x, linear(a, bound[l.wo], bound[l.bo]));

    Var f = layer_norm(x, bound[l.ln2_gain], bound[l.ln2_bias]);
    f = gelu(linear(f, bound[l.w1], bound[l.b1]));
    x = add(x, linear(f, bound[l.w2], bound[l.b2]));
  }
  return layer_norm(x, bound[final_gain_], bound[final_bias_]);
}

}  // namespace simplexlm
