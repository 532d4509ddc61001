#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ringformer/ring_attention.hpp"
#include "ringformer/tensor.hpp"

namespace ringformer {

struct ConformerConfig {
  std::size_t dim = 512;
  std::size_t num_heads = 8;
  std::size_t num_layers = 2;
  std::size_t depthwise_kernel = 31;
  double dropout = 0.1;
  // Inference keeps dropout off; the hook exists so a seeded mask can be
  // exercised in tests.
  bool dropout_enabled = false;
  std::uint64_t dropout_seed = 0;
  std::size_t block_len = 512;
  std::size_t ring_devices_override = 0;  // 0 = derive from block_len

  std::size_t ffn_dim() const { return dim / 2; }
  std::size_t head_dim() const { return dim / num_heads; }

  void validate() const {
    if (dim == 0 || num_heads == 0 || dim % num_heads != 0) {
      throw ConfigError("conformer: dim " + std::to_string(dim) +
                        " must be divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (dim < 2) throw ConfigError("conformer: dim must be >= 2");
    if (depthwise_kernel % 2 == 0) {
      throw ConfigError("conformer: depthwise kernel must be odd, got " +
                        std::to_string(depthwise_kernel));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw ConfigError("conformer: dropout must be in [0, 1)");
    }
  }

  AttentionConfig attention_config(std::size_t seq_len) const {
    if (ring_devices_override > 0) {
      return AttentionConfig::for_devices(seq_len, ring_devices_override,
                                          num_heads, head_dim());
    }
    return AttentionConfig(seq_len, block_len, num_heads, head_dim());
  }
};

template <typename T = float>
struct LayerNormWeights {
  Tensor<T> gain;
  Tensor<T> bias;
};

template <typename T = float>
struct LinearWeights {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]
};

template <typename T = float>
struct FeedForwardWeights {
  LayerNormWeights<T> norm;
  LinearWeights<T> expand;    // d -> d/2
  LinearWeights<T> contract;  // d/2 -> d
};

template <typename T = float>
struct SelfAttentionWeights {
  LayerNormWeights<T> norm;
  LinearWeights<T> q, k, v, out;
};

template <typename T = float>
struct ConvModuleWeights {
  LayerNormWeights<T> norm_in;
  Tensor<T> pointwise_in_w;  // [2d x d x 1]
  Tensor<T> pointwise_in_b;
  Tensor<T> depthwise_w;  // [d x 1 x kernel]
  Tensor<T> depthwise_b;
  LayerNormWeights<T> norm_mid;
  Tensor<T> pointwise_out_w;  // [d x d x 1]
  Tensor<T> pointwise_out_b;
};

template <typename T = float>
struct ConformerBlockWeights {
  FeedForwardWeights<T> ffn1;
  SelfAttentionWeights<T> mhsa;
  ConvModuleWeights<T> conv;
  FeedForwardWeights<T> ffn2;
  LayerNormWeights<T> norm_out;
};

template <typename T = float>
struct ConformerWeights {
  std::vector<ConformerBlockWeights<T>> blocks;
};

namespace init {

template <typename T>
LayerNormWeights<T> norm(std::size_t d) {
  LayerNormWeights<T> w;
  w.gain = Tensor<T>({d});
  std::fill(w.gain.data.begin(), w.gain.data.end(), T(1));
  w.bias = Tensor<T>({d});
  return w;
}

template <typename T>
LinearWeights<T> linear_weights(std::mt19937_64& rng, std::size_t out,
                                std::size_t in) {
  LinearWeights<T> w;
  w.weight = uniform_fan_in<T>(rng, {out, in}, in);
  w.bias = uniform_fan_in<T>(rng, {out}, in);
  return w;
}

template <typename T>
Tensor<T> conv_weight(std::mt19937_64& rng, std::size_t out, std::size_t in,
                      std::size_t kernel) {
  return uniform_fan_in<T>(rng, {out, in, kernel}, in * kernel);
}

}  // namespace init

template <typename T>
ConformerBlockWeights<T> build_conformer_block(std::mt19937_64& rng,
                                               const ConformerConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  const std::size_t h = cfg.ffn_dim();
  ConformerBlockWeights<T> w;
  w.ffn1.norm = init::norm<T>(d);
  w.ffn1.expand = init::linear_weights<T>(rng, h, d);
  w.ffn1.contract = init::linear_weights<T>(rng, d, h);
  w.mhsa.norm = init::norm<T>(d);
  w.mhsa.q = init::linear_weights<T>(rng, d, d);
  w.mhsa.k = init::linear_weights<T>(rng, d, d);
  w.mhsa.v = init::linear_weights<T>(rng, d, d);
  w.mhsa.out = init::linear_weights<T>(rng, d, d);
  w.conv.norm_in = init::norm<T>(d);
  w.conv.pointwise_in_w = init::conv_weight<T>(rng, 2 * d, d, 1);
  w.conv.pointwise_in_b = init::uniform_fan_in<T>(rng, {2 * d}, d);
  w.conv.depthwise_w = init::conv_weight<T>(rng, d, 1, cfg.depthwise_kernel);
  w.conv.depthwise_b = init::uniform_fan_in<T>(rng, {d}, cfg.depthwise_kernel);
  w.conv.norm_mid = init::norm<T>(d);
  w.conv.pointwise_out_w = init::conv_weight<T>(rng, d, d, 1);
  w.conv.pointwise_out_b = init::uniform_fan_in<T>(rng, {d}, d);
  w.ffn2.norm = init::norm<T>(d);
  w.ffn2.expand = init::linear_weights<T>(rng, h, d);
  w.ffn2.contract = init::linear_weights<T>(rng, d, h);
  w.norm_out = init::norm<T>(d);
  return w;
}

template <typename T>
ConformerWeights<T> build_conformer(std::mt19937_64& rng,
                                    const ConformerConfig& cfg) {
  cfg.validate();
  ConformerWeights<T> w;
  w.blocks.reserve(cfg.num_layers);
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    w.blocks.push_back(build_conformer_block<T>(rng, cfg));
  }
  return w;
}

namespace detail {

template <typename T>
void apply_dropout(Tensor<T>& x, const ConformerConfig& cfg,
                   std::uint64_t salt) {
  if (!cfg.dropout_enabled || cfg.dropout <= 0.0) return;
  std::mt19937_64 rng(cfg.dropout_seed ^ (salt * 0x9e3779b97f4a7c15ull));
  std::bernoulli_distribution drop(cfg.dropout);
  const T keep_scale = T(1.0 / (1.0 - cfg.dropout));
  for (T& v : x.data) v = drop(rng) ? T{} : v * keep_scale;
}

}  // namespace detail

// layer_norm -> d->d/2 -> swish -> d/2->d. The caller owns the half-step
// residual x + 0.5*out.
template <typename T>
Tensor<T> feed_forward_module(const Tensor<T>& x, const FeedForwardWeights<T>& w,
                              const ConformerConfig& cfg) {
  Tensor<T> h = layer_norm(x, w.norm.gain, w.norm.bias);
  h = linear(h, w.expand.weight, &w.expand.bias);
  h = swish(h);
  detail::apply_dropout(h, cfg, 1);
  h = linear(h, w.contract.weight, &w.contract.bias);
  detail::apply_dropout(h, cfg, 2);
  return h;
}

// layer_norm -> per-head Q/K/V projection -> ring attention -> concat ->
// output projection. Residual added by the caller.
template <typename T>
Tensor<T> mhsa_module(const Tensor<T>& x, const SelfAttentionWeights<T>& w,
                      const ConformerConfig& cfg) {
  if (x.rank() != 2 || x.shape[1] != cfg.dim) {
    throw DimensionError("mhsa: input " + shape_str(x.shape) +
                         " does not match conformer dim " +
                         std::to_string(cfg.dim));
  }
  const std::size_t t = x.shape[0];
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim();
  const AttentionConfig attn_cfg = cfg.attention_config(t);

  Tensor<T> h = layer_norm(x, w.norm.gain, w.norm.bias);
  const Tensor<T> q = linear(h, w.q.weight, &w.q.bias);
  const Tensor<T> k = linear(h, w.k.weight, &w.k.bias);
  const Tensor<T> v = linear(h, w.v.weight, &w.v.bias);

  Tensor<T> concat({t, cfg.dim});
  Tensor<T> qh({t, hd}), kh({t, hd}), vh({t, hd});
  for (std::size_t head = 0; head < heads; ++head) {
    const std::size_t off = head * hd;
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < hd; ++c) {
        qh.at(r, c) = q.at(r, off + c);
        kh.at(r, c) = k.at(r, off + c);
        vh.at(r, c) = v.at(r, off + c);
      }
    }
    const Tensor<T> oh = ring_attention(qh, kh, vh, attn_cfg);
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t c = 0; c < hd; ++c) concat.at(r, off + c) = oh.at(r, c);
    }
  }
  Tensor<T> out = linear(concat, w.out.weight, &w.out.bias);
  detail::apply_dropout(out, cfg, 3);
  return out;
}

// layer_norm -> pointwise d->2d -> GLU -> depthwise (odd kernel, same-length
// padding) -> layer_norm -> swish -> pointwise d->d. Residual by the caller.
template <typename T>
Tensor<T> conv_module(const Tensor<T>& x, const ConvModuleWeights<T>& w,
                      const ConformerConfig& cfg) {
  if (x.rank() != 2 || x.shape[1] != cfg.dim) {
    throw DimensionError("conv module: input " + shape_str(x.shape) +
                         " does not match conformer dim " +
                         std::to_string(cfg.dim));
  }
  const std::size_t t = x.shape[0];
  const std::size_t d = cfg.dim;

  Tensor<T> h = layer_norm(x, w.norm_in.gain, w.norm_in.bias);
  Tensor<T> channels = transpose(h);  // [d x T]
  channels = conv1d(channels, w.pointwise_in_w, {}, &w.pointwise_in_b);

  // GLU: first half gated by sigmoid of the second half
  Tensor<T> gated({d, t});
  for (std::size_t c = 0; c < d; ++c) {
    const T* a = channels.row(c);
    const T* b = channels.row(c + d);
    T* o = gated.row(c);
    for (std::size_t i = 0; i < t; ++i) o[i] = a[i] * sigmoid(b[i]);
  }

  Conv1dOptions depthwise_opt;
  depthwise_opt.padding = (cfg.depthwise_kernel - 1) / 2;
  depthwise_opt.groups = d;
  gated = conv1d(gated, w.depthwise_w, depthwise_opt, &w.depthwise_b);

  Tensor<T> out = transpose(gated);  // [T x d]
  out = layer_norm(out, w.norm_mid.gain, w.norm_mid.bias);
  out = swish(out);
  out = transpose(out);
  out = conv1d(out, w.pointwise_out_w, {}, &w.pointwise_out_b);
  out = transpose(out);
  detail::apply_dropout(out, cfg, 4);
  return out;
}

// Macaron order: half-step FFN, MHSA, conv module, half-step FFN, final norm.
template <typename T>
Tensor<T> conformer_block(const Tensor<T>& x, const ConformerBlockWeights<T>& w,
                          const ConformerConfig& cfg) {
  Tensor<T> y = add(x, scale(feed_forward_module(x, w.ffn1, cfg), T(0.5)));
  y = add(y, mhsa_module(y, w.mhsa, cfg));
  y = add(y, conv_module(y, w.conv, cfg));
  y = add(y, scale(feed_forward_module(y, w.ffn2, cfg), T(0.5)));
  return layer_norm(y, w.norm_out.gain, w.norm_out.bias);
}

template <typename T>
Tensor<T> conformer_forward(const Tensor<T>& x, const ConformerWeights<T>& w,
                            const ConformerConfig& cfg) {
  Tensor<T> y = x;
  for (const auto& block : w.blocks) y = conformer_block(y, block, cfg);
  return y;
}

}  // namespace ringformer
