#pragma once

#include <string>

#include <json.hpp>

#include "sar/backbone.hpp"
#include "sar/jsonutil.hpp"
#include "sar/nn_ops.hpp"
#include "sar/optim.hpp"

namespace sar {

// Location-aware attention over the feature map. Per decoding step:
//   e_ij = tanh(conv(V)_ij + Wq h),  score_ij = we . e_ij,
//   alpha = softmax over valid columns,  glimpse = sum alpha_ij v_ij.
// The conv aggregates each position's neighborhood:
//   proposed2d     3x3 kernel, zero-padded borders
//   traditional2d  1x1 kernel (no neighborhood term)
//   oned           height-max-pool V to one row first, then the 1x1 path
struct AttentionConfig {
  std::string variant = "proposed2d";
  int feature_dim = 512;
  int decoder_dim = 512;
  int attn_dim = 512;
  bool conv_bias = true;

  void validate() const {
    if (variant != "proposed2d" && variant != "traditional2d" && variant != "oned")
      throw std::runtime_error("attention: unknown variant '" + variant + "'");
    if (feature_dim < 1 || decoder_dim < 1 || attn_dim < 1)
      throw std::runtime_error("attention: dimensions must be positive");
  }

  int kernel() const { return variant == "proposed2d" ? 3 : 1; }

  static AttentionConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j, {"variant", "feature_dim", "decoder_dim", "attn_dim", "conv_bias"},
                       "attention config");
    AttentionConfig c;
    c.variant = j.value("variant", c.variant);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
    c.attn_dim = j.value("attn_dim", c.attn_dim);
    c.conv_bias = j.value("conv_bias", c.conv_bias);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"variant", variant},
                          {"feature_dim", feature_dim},
                          {"decoder_dim", decoder_dim},
                          {"attn_dim", attn_dim},
                          {"conv_bias", conv_bias}};
  }
};

template <class S>
void build_attention(ParamStore<S>& store, const AttentionConfig& cfg, Rng& rng,
                     const std::string& prefix = "attn") {
  cfg.validate();
  const int k = cfg.kernel();
  auto& cw = store.add(prefix + ".conv.weight",
                       Tensor<S>::zeros({cfg.attn_dim, cfg.feature_dim, k, k}));
  const double cb = fan_in_bound(size_t(k) * size_t(k) * size_t(cfg.feature_dim));
  fill_uniform(cw, rng, -cb, cb);
  if (cfg.conv_bias) store.add(prefix + ".conv.bias", Tensor<S>::zeros({cfg.attn_dim}));
  auto& qw = store.add(prefix + ".query.weight",
                       Tensor<S>::zeros({cfg.attn_dim, cfg.decoder_dim}));
  const double qb = fan_in_bound(size_t(cfg.decoder_dim));
  fill_uniform(qw, rng, -qb, qb);
  auto& sw = store.add(prefix + ".score.weight", Tensor<S>::zeros({cfg.attn_dim}));
  const double sb = fan_in_bound(size_t(cfg.attn_dim));
  fill_uniform(sw, rng, -sb, sb);
}

// Per-sample precomputation: everything that does not depend on the decoder
// state. Build once, reuse across all decoding steps of the sample.
template <class S>
struct AttnContext {
  Tensor<S> features;  // what the glimpse averages over ([D,H',W'], or [D,1,W'] for oned)
  Tensor<S> precomp;   // conv output [da, Hc, Wc]
  int valid_width = 0;
};

template <class S>
AttnContext<S> attn_context(ParamStore<S>& store, const AttentionConfig& cfg,
                            const FeatureMap<S>& fm, const std::string& prefix = "attn") {
  cfg.validate();
  if (fm.values.shape().size() != 3 || fm.values.dim(0) != cfg.feature_dim)
    throw std::runtime_error("attn_context: feature map channels do not match feature_dim");
  if (fm.valid_width < 1 || fm.valid_width > fm.values.dim(2))
    throw std::runtime_error("attn_context: empty or out-of-range valid region");

  AttnContext<S> ctx;
  ctx.features = fm.values;
  if (cfg.variant == "oned" && fm.values.dim(1) > 1)
    ctx.features = maxpool2d(fm.values, fm.values.dim(1), 1, fm.values.dim(1), 1);
  const auto& w = store.get(prefix + ".conv.weight");
  Tensor<S> b;
  if (cfg.conv_bias) b = store.get(prefix + ".conv.bias");
  ctx.precomp = conv2d(ctx.features, w, b.defined() ? b : Tensor<S>::zeros({cfg.attn_dim}),
                       cfg.kernel() / 2);
  ctx.valid_width = fm.valid_width;
  return ctx;
}

template <class S>
struct AttnResult {
  Tensor<S> glimpse;  // [D]
  Tensor<S> alpha;    // [Hc, Wc]; padded columns exactly zero
  Tensor<S> scores;   // pre-softmax [Hc, Wc]
};

template <class S>
AttnResult<S> attend(ParamStore<S>& store, const AttentionConfig& cfg,
                     const AttnContext<S>& ctx, const Tensor<S>& h_dec,
                     const std::string& prefix = "attn") {
  if (h_dec.shape() != Shape{cfg.decoder_dim})
    throw std::runtime_error("attend: decoder state must be [decoder_dim]");
  auto q = linear(h_dec, store.get(prefix + ".query.weight"));
  auto e = tanh_map(add_channel_bias(ctx.precomp, q));
  AttnResult<S> res;
  res.scores = channel_dot(e, store.get(prefix + ".score.weight"));
  res.alpha = masked_softmax2d(res.scores, ctx.valid_width);
  res.glimpse = attn_weighted_sum(res.alpha, ctx.features);
  return res;
}

}  // namespace sar
