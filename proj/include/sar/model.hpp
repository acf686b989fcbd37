#pragma once

#include <string>

#include <json.hpp>

#include "sar/attention.hpp"
#include "sar/backbone.hpp"
#include "sar/charset.hpp"
#include "sar/jsonutil.hpp"
#include "sar/optim.hpp"

namespace sar {

// Full recognizer shape: backbone, attention, a 2-layer LSTM encoder over
// pooled columns, and a 2-layer LSTM decoder. The attention feature and
// query widths are derived, never stated: the feature width is the backbone
// output and the query width is hidden_dim.
struct ModelConfig {
  BackboneConfig backbone;
  std::string attn_variant = "proposed2d";
  int attn_dim = 0;      // 0 selects hidden_dim
  bool attn_conv_bias = true;
  int feature_dim = 0;   // 0 selects the backbone output width
  int hidden_dim = 512;
  int embed_dim = 0;     // 0 selects hidden_dim
  std::string charset = "";  // symbol string, empty selects the standard 93
  int max_decode_len = 30;

  int embed_width() const { return embed_dim > 0 ? embed_dim : hidden_dim; }
  int feature_width() const {
    return feature_dim > 0 ? feature_dim : BackboneConfig::feature_dim;
  }

  AttentionConfig attention() const {
    AttentionConfig a;
    a.variant = attn_variant;
    a.feature_dim = feature_width();
    a.decoder_dim = hidden_dim;
    a.attn_dim = attn_dim > 0 ? attn_dim : hidden_dim;
    a.conv_bias = attn_conv_bias;
    return a;
  }

  CharSet make_charset() const {
    return charset.empty() ? CharSet::standard()
                           : CharSet::from_symbols(CharSet::split_utf8(charset));
  }

  void validate() const {
    backbone.validate();
    if (hidden_dim < 1) throw std::runtime_error("model: hidden_dim must be positive");
    if (embed_dim < 0 || attn_dim < 0 || feature_dim < 0)
      throw std::runtime_error("model: embed_dim, attn_dim, feature_dim must be >= 0");
    if (max_decode_len < 1)
      throw std::runtime_error("model: max_decode_len must be positive");
    attention().validate();
    make_charset();
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"backbone", "attn_variant", "attn_dim", "attn_conv_bias",
                        "feature_dim", "hidden_dim", "embed_dim", "charset",
                        "max_decode_len"},
                       "model config");
    ModelConfig c;
    if (j.contains("backbone")) c.backbone = BackboneConfig::from_json(j.at("backbone"));
    c.attn_variant = j.value("attn_variant", c.attn_variant);
    c.attn_dim = j.value("attn_dim", c.attn_dim);
    c.attn_conv_bias = j.value("attn_conv_bias", c.attn_conv_bias);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.charset = j.value("charset", c.charset);
    c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"backbone", backbone.to_json()},
                          {"attn_variant", attn_variant},
                          {"attn_dim", attn_dim},
                          {"attn_conv_bias", attn_conv_bias},
                          {"feature_dim", feature_dim},
                          {"hidden_dim", hidden_dim},
                          {"embed_dim", embed_dim},
                          {"charset", charset},
                          {"max_decode_len", max_decode_len}};
  }
};

namespace detail {

// w_ih/w_hh uniform in +-sqrt(1/fan_in), bias zero except the forget gate
// block, set to one to keep early memories alive.
template <class S>
void add_lstm(ParamStore<S>& store, const std::string& name, int din, int dh, Rng& rng) {
  auto& wi = store.add(name + ".w_ih", Tensor<S>::zeros({4 * dh, din}));
  fill_uniform(wi, rng, -fan_in_bound(size_t(din)), fan_in_bound(size_t(din)));
  auto& wh = store.add(name + ".w_hh", Tensor<S>::zeros({4 * dh, dh}));
  fill_uniform(wh, rng, -fan_in_bound(size_t(dh)), fan_in_bound(size_t(dh)));
  auto& b = store.add(name + ".bias", Tensor<S>::zeros({4 * dh}));
  std::fill(b.data() + dh, b.data() + 2 * dh, S(1));
}

template <class S>
void add_linear(ParamStore<S>& store, const std::string& name, int din, int dout, Rng& rng,
                bool bias) {
  auto& w = store.add(name + ".weight", Tensor<S>::zeros({dout, din}));
  fill_uniform(w, rng, -fan_in_bound(size_t(din)), fan_in_bound(size_t(din)));
  if (bias) store.add(name + ".bias", Tensor<S>::zeros({dout}));
}

}  // namespace detail

// Registers every parameter of the recognizer. Each subtree draws from its
// own derived stream, so adding parameters to one leaves the others stable.
template <class S>
void build_model(ParamStore<S>& store, const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const auto cs = cfg.make_charset();
  const int dh = cfg.hidden_dim;
  const int de = cfg.embed_width();
  const int D = cfg.feature_width();

  Rng rb(derive_seed(seed, 1));
  build_backbone(store, cfg.backbone, rb);
  Rng ra(derive_seed(seed, 2));
  build_attention(store, cfg.attention(), ra);

  Rng re(derive_seed(seed, 3));
  detail::add_lstm(store, "encoder.l1", D, dh, re);
  detail::add_lstm(store, "encoder.l2", dh, dh, re);

  Rng rd(derive_seed(seed, 4));
  detail::add_lstm(store, "decoder.l1", de, dh, rd);
  detail::add_lstm(store, "decoder.l2", dh, dh, rd);
  auto& emb = store.add("decoder.embed.weight", Tensor<S>::zeros({cs.embed_vocab(), de}));
  fill_uniform(emb, rd, -fan_in_bound(size_t(cs.embed_vocab())),
               fan_in_bound(size_t(cs.embed_vocab())));
  detail::add_linear(store, "decoder.holistic", dh, de, rd, true);
  detail::add_linear(store, "decoder.out", dh + D, cs.num_classes(), rd, true);
}

}  // namespace sar
