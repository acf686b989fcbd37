#pragma once

#include <array>
#include <cmath>
#include <string>

#include <json.hpp>

#include "sar/image.hpp"
#include "sar/jsonutil.hpp"
#include "sar/nn_ops.hpp"
#include "sar/optim.hpp"

namespace sar {

struct PoolSpec {
  int kh = 2, kw = 2, sh = 2, sw = 2;
};

// Feature extractor stack: conv64, conv128, pool, [256x2]x1, conv256, pool,
// [256x2]x2, conv256, height-only pool, [512x2]x5, conv512, [512x2]x3,
// conv512. The multiplier scales every width except the final conv, which
// always emits feature_dim channels.
struct BackboneConfig {
  double channel_multiplier = 1.0;
  std::array<PoolSpec, 3> pools{{{2, 2, 2, 2}, {2, 2, 2, 2}, {2, 1, 2, 1}}};
  int input_channels = 1;
  int input_height = 48;
  bool channel_norm = false;  // standardize after each standalone conv
  static constexpr int feature_dim = 512;

  struct Widths {
    int c1, c2, c3, c4;
  };

  Widths widths() const {
    auto scaled = [this](int base) {
      const double v = base * channel_multiplier;
      const int r = int(std::lround(v));
      if (r < 1 || std::abs(v - r) > 1e-9)
        throw std::runtime_error("channel_multiplier " + std::to_string(channel_multiplier) +
                                 " gives non-integral channels for base " +
                                 std::to_string(base));
      return r;
    };
    return {scaled(64), scaled(128), scaled(256), scaled(512)};
  }

  int vertical_stride() const { return pools[0].sh * pools[1].sh * pools[2].sh; }
  int horizontal_stride() const { return pools[0].sw * pools[1].sw * pools[2].sw; }

  void validate() const {
    widths();
    if (input_channels != 1 && input_channels != 3)
      throw std::runtime_error("backbone: input_channels must be 1 or 3");
    if (input_height < 1 || input_height % vertical_stride() != 0)
      throw std::runtime_error("backbone: input_height must be a positive multiple of " +
                               std::to_string(vertical_stride()));
    for (const auto& p : pools)
      if (p.kh < 1 || p.kw < 1 || p.sh < 1 || p.sw < 1)
        throw std::runtime_error("backbone: pool kernel/stride must be positive");
  }

  static BackboneConfig from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"channel_multiplier", "pools", "input_channels", "input_height",
                        "channel_norm"},
                       "backbone config");
    BackboneConfig c;
    c.channel_multiplier = j.value("channel_multiplier", c.channel_multiplier);
    if (j.contains("pools")) {
      const auto& jp = j.at("pools");
      if (!jp.is_array() || jp.size() != 3)
        throw std::runtime_error("backbone config: pools must be 3 entries of [kh,kw,sh,sw]");
      for (size_t i = 0; i < 3; ++i) {
        const auto& e = jp[i];
        if (!e.is_array() || e.size() != 4)
          throw std::runtime_error("backbone config: each pool is [kh,kw,sh,sw]");
        c.pools[i] = {e[0].get<int>(), e[1].get<int>(), e[2].get<int>(), e[3].get<int>()};
      }
    }
    c.input_channels = j.value("input_channels", c.input_channels);
    c.input_height = j.value("input_height", c.input_height);
    c.channel_norm = j.value("channel_norm", c.channel_norm);
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json jp = nlohmann::json::array();
    for (const auto& p : pools) jp.push_back({p.kh, p.kw, p.sh, p.sw});
    return nlohmann::json{{"channel_multiplier", channel_multiplier},
                          {"pools", jp},
                          {"input_channels", input_channels},
                          {"input_height", input_height},
                          {"channel_norm", channel_norm}};
  }
};

template <class S>
struct FeatureMap {
  Tensor<S> values;     // [D, H', W']
  int valid_width = 0;  // columns at and past this index are padding
};

namespace detail {

template <class S>
void add_conv(ParamStore<S>& store, const std::string& name, int cin, int cout, int k,
              Rng& rng) {
  auto& w = store.add(name + ".weight", Tensor<S>::zeros({cout, cin, k, k}));
  const double bound = fan_in_bound(size_t(k) * size_t(k) * size_t(cin));
  fill_uniform(w, rng, -bound, bound);
  store.add(name + ".bias", Tensor<S>::zeros({cout}));
}

// The stack in order. Pool indices refer to BackboneConfig::pools.
struct BackbonePlan {
  struct Item {
    enum Kind { kConv, kPool, kBlock } kind;
    std::string name;  // conv or block name
    int cin = 0, cout = 0;
    int pool = -1;
  };
  std::vector<Item> items;
};

inline BackbonePlan backbone_plan(const BackboneConfig& cfg) {
  const auto w = cfg.widths();
  BackbonePlan plan;
  auto conv = [&](const std::string& n, int ci, int co) {
    plan.items.push_back({BackbonePlan::Item::kConv, n, ci, co, -1});
  };
  auto pool = [&](int i) { plan.items.push_back({BackbonePlan::Item::kPool, "", 0, 0, i}); };
  auto block = [&](int idx, int ci, int co) {
    plan.items.push_back(
        {BackbonePlan::Item::kBlock, "block" + std::to_string(idx), ci, co, -1});
  };
  conv("conv1", cfg.input_channels, w.c1);
  conv("conv2", w.c1, w.c2);
  pool(0);
  block(1, w.c2, w.c3);
  conv("conv3", w.c3, w.c3);
  pool(1);
  block(2, w.c3, w.c3);
  block(3, w.c3, w.c3);
  conv("conv4", w.c3, w.c3);
  pool(2);
  block(4, w.c3, w.c4);
  for (int i = 5; i <= 8; ++i) block(i, w.c4, w.c4);
  conv("conv5", w.c4, w.c4);
  for (int i = 9; i <= 11; ++i) block(i, w.c4, w.c4);
  conv("conv6", w.c4, BackboneConfig::feature_dim);
  return plan;
}

}  // namespace detail

// Registers backbone.* parameters: weights U(+-sqrt(1/fan_in)), biases zero.
// Residual blocks with differing widths get a 1x1 projection shortcut.
template <class S>
void build_backbone(ParamStore<S>& store, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto plan = detail::backbone_plan(cfg);
  for (const auto& it : plan.items) {
    switch (it.kind) {
      case detail::BackbonePlan::Item::kConv:
        detail::add_conv(store, "backbone." + it.name, it.cin, it.cout, 3, rng);
        break;
      case detail::BackbonePlan::Item::kBlock:
        detail::add_conv(store, "backbone." + it.name + ".conv1", it.cin, it.cout, 3, rng);
        detail::add_conv(store, "backbone." + it.name + ".conv2", it.cout, it.cout, 3, rng);
        if (it.cin != it.cout)
          detail::add_conv(store, "backbone." + it.name + ".proj", it.cin, it.cout, 1, rng);
        break;
      case detail::BackbonePlan::Item::kPool:
        break;
    }
  }
}

// Image pixels to the network's input range: x/255 - 0.5, laid out [C,H,W].
template <class S>
Tensor<S> image_to_tensor(const Image& im) {
  auto t = Tensor<S>::zeros({im.channels, im.height, im.width});
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        t.data()[(size_t(c) * im.height + size_t(y)) * im.width + size_t(x)] =
            S(im.at(y, x, c)) / S(255) - S(0.5);
  return t;
}

// Runs the conv stack. The input is zero-padded on the right to a multiple of
// the total horizontal stride, so the output width is ceil(W / stride_w);
// valid_width marks which output columns hold content.
template <class S>
FeatureMap<S> extract_features(ParamStore<S>& store, const BackboneConfig& cfg,
                               const Tensor<S>& image, int content_width = -1) {
  cfg.validate();
  if (image.shape().size() != 3 || image.dim(0) != cfg.input_channels)
    throw std::runtime_error("extract_features: expected image [" +
                             std::to_string(cfg.input_channels) + ",H,W]");
  if (image.dim(1) != cfg.input_height)
    throw std::runtime_error("extract_features: image height " + std::to_string(image.dim(1)) +
                             " does not match configured input height " +
                             std::to_string(cfg.input_height));
  const int W = image.dim(2);
  if (W < 1) throw std::runtime_error("extract_features: empty image");
  if (content_width < 0) content_width = W;
  if (content_width < 1 || content_width > W)
    throw std::runtime_error("extract_features: content width out of range");

  const int swx = cfg.horizontal_stride();
  const int w_pad = (W + swx - 1) / swx * swx;

  Tensor<S> x = image;
  if (w_pad != W) {
    auto padded = Tensor<S>::zeros({image.dim(0), image.dim(1), w_pad});
    for (int c = 0; c < image.dim(0); ++c)
      for (int y = 0; y < image.dim(1); ++y) {
        const S* src = image.data() + (size_t(c) * image.dim(1) + size_t(y)) * W;
        S* dst = padded.data() + (size_t(c) * image.dim(1) + size_t(y)) * w_pad;
        std::copy(src, src + W, dst);
      }
    x = padded;
  }

  auto conv_named = [&](Tensor<S> in, const std::string& name, bool norm) {
    auto out = relu(conv2d(in, store.get("backbone." + name + ".weight"),
                           store.get("backbone." + name + ".bias"),
                           store.get("backbone." + name + ".weight").dim(2) / 2));
    if (norm && cfg.channel_norm) out = channel_norm(out);
    return out;
  };

  const auto plan = detail::backbone_plan(cfg);
  for (const auto& it : plan.items) {
    switch (it.kind) {
      case detail::BackbonePlan::Item::kConv:
        x = conv_named(x, it.name, true);
        break;
      case detail::BackbonePlan::Item::kPool: {
        const auto& p = cfg.pools[size_t(it.pool)];
        x = maxpool2d(x, p.kh, p.kw, p.sh, p.sw);
        break;
      }
      case detail::BackbonePlan::Item::kBlock: {
        auto branch = conv_named(x, it.name + ".conv1", false);
        branch = conv2d(branch, store.get("backbone." + it.name + ".conv2.weight"),
                        store.get("backbone." + it.name + ".conv2.bias"), 1);
        Tensor<S> shortcut = x;
        if (it.cin != it.cout)
          shortcut = conv2d(x, store.get("backbone." + it.name + ".proj.weight"),
                            store.get("backbone." + it.name + ".proj.bias"), 0);
        x = relu(add(branch, shortcut));
        break;
      }
    }
  }

  FeatureMap<S> fm;
  fm.values = x;
  fm.valid_width = std::max(1, (content_width + swx - 1) / swx);
  if (fm.valid_width > x.dim(2)) fm.valid_width = x.dim(2);
  return fm;
}

}  // namespace sar
