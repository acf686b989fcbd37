#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sar/backbone.hpp"
#include "sar/encdec.hpp"

namespace sar {

// One named differentiation check: builds its own parameters, runs a
// central-difference sweep, reports the worst relative error. corrupt != 1
// deliberately breaks one analytic gradient so callers can prove the check
// is able to fail.
struct GradCheckCase {
  std::string name;
  double tolerance = 1e-5;
  std::function<GradCheckReport(double corrupt)> run;
};

namespace detail {

inline Tensor<double>& add_random(ParamStore<double>& store, const std::string& name,
                                  Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto& t = store.add(name, Tensor<double>::zeros(std::move(shape)));
  fill_uniform(t, rng, lo, hi);
  return t;
}

// Head-only recognizer over a given feature width, small enough to probe
// every entry.
inline void add_head(ParamStore<double>& store, const ModelConfig& cfg, Rng& rng) {
  const CharSet cs = cfg.make_charset();
  const int D = cfg.feature_width(), dh = cfg.hidden_dim, de = cfg.embed_width();
  build_attention(store, cfg.attention(), rng);
  for (std::string side : {"encoder", "decoder"}) {
    const int din = side == "encoder" ? D : de;
    add_random(store, side + ".l1.w_ih", {4 * dh, din}, rng, -0.4, 0.4);
    add_random(store, side + ".l1.w_hh", {4 * dh, dh}, rng, -0.4, 0.4);
    add_random(store, side + ".l1.bias", {4 * dh}, rng, -0.4, 0.4);
    add_random(store, side + ".l2.w_ih", {4 * dh, dh}, rng, -0.4, 0.4);
    add_random(store, side + ".l2.w_hh", {4 * dh, dh}, rng, -0.4, 0.4);
    add_random(store, side + ".l2.bias", {4 * dh}, rng, -0.4, 0.4);
  }
  add_random(store, "decoder.embed.weight", {cs.embed_vocab(), de}, rng, -0.4, 0.4);
  add_random(store, "decoder.holistic.weight", {de, dh}, rng, -0.4, 0.4);
  add_random(store, "decoder.holistic.bias", {de}, rng, -0.4, 0.4);
  add_random(store, "decoder.out.weight", {cs.num_classes(), dh + D}, rng, -0.4, 0.4);
  add_random(store, "decoder.out.bias", {cs.num_classes()}, rng, -0.4, 0.4);
}

inline ModelConfig head_config() {
  ModelConfig cfg;
  cfg.hidden_dim = 4;
  cfg.embed_dim = 3;
  cfg.charset = "01234";
  cfg.attn_variant = "proposed2d";
  cfg.feature_dim = 3;
  cfg.attn_dim = 5;
  return cfg;
}

template <class Build>
GradCheckCase make_case(std::string name, Build&& build, double step = 1e-4,
                        size_t sample_cap = 0, double tolerance = 1e-5) {
  GradCheckCase c;
  c.name = std::move(name);
  c.tolerance = tolerance;
  c.run = [build, step, sample_cap](double corrupt) {
    auto store = std::make_shared<ParamStore<double>>();
    auto loss_fn = build(*store);
    return grad_check(*store, loss_fn, step, sample_cap, 7, corrupt);
  };
  return c;
}

}  // namespace detail

// Every differentiable op plus composite model paths, each wired to a scalar
// loss through fixed random probes so no gradient direction can hide.
inline std::vector<GradCheckCase> gradient_check_cases() {
  using detail::add_random;
  using detail::make_case;
  std::vector<GradCheckCase> cases;

  cases.push_back(make_case("conv2d_padded", [](ParamStore<double>& s) {
    Rng rng(101);
    auto& x = add_random(s, "x", {2, 5, 6}, rng);
    auto& w = add_random(s, "w", {3, 2, 3, 3}, rng);
    auto& b = add_random(s, "b", {3}, rng);
    auto probe = Tensor<double>::zeros({3, 5, 6});
    fill_uniform(probe, rng, -1, 1);
    return [&x, &w, &b, probe] {
      auto y = conv2d(x, w, b, 1);
      auto g = attn_weighted_sum(row(probe, 0), y);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("conv2d_1x1", [](ParamStore<double>& s) {
    Rng rng(102);
    auto& x = add_random(s, "x", {3, 4, 5}, rng);
    auto& w = add_random(s, "w", {2, 3, 1, 1}, rng);
    auto& b = add_random(s, "b", {2}, rng);
    auto probe = Tensor<double>::zeros({2, 4, 5});
    fill_uniform(probe, rng, -1, 1);
    return [&x, &w, &b, probe] {
      auto y = conv2d(x, w, b, 0);
      auto g = attn_weighted_sum(row(probe, 0), y);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("maxpool2d", [](ParamStore<double>& s) {
    Rng rng(103);
    auto& x = add_random(s, "x", {2, 6, 6}, rng);
    auto probe = Tensor<double>::zeros({2, 3, 3});
    fill_uniform(probe, rng, -1, 1);
    return [&x, probe] {
      auto y = maxpool2d(x, 2, 2, 2, 2);
      auto g = attn_weighted_sum(row(probe, 0), y);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("height_max_wc", [](ParamStore<double>& s) {
    Rng rng(104);
    auto& x = add_random(s, "x", {3, 4, 5}, rng);
    auto probe = Tensor<double>::zeros({5});
    fill_uniform(probe, rng, -1, 1);
    return [&x, probe] {
      auto g = weighted_row_sum(height_max_wc(x), probe);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("linear", [](ParamStore<double>& s) {
    Rng rng(105);
    auto& x = add_random(s, "x", {6}, rng);
    auto& w = add_random(s, "w", {4, 6}, rng);
    auto& b = add_random(s, "b", {4}, rng);
    return [&x, &w, &b] {
      auto y = linear(x, w, b);
      return dot(y, y);
    };
  }));

  cases.push_back(make_case("linear_nobias", [](ParamStore<double>& s) {
    Rng rng(106);
    auto& x = add_random(s, "x", {5}, rng);
    auto& w = add_random(s, "w", {3, 5}, rng);
    return [&x, &w] {
      auto y = linear(x, w);
      return dot(y, y);
    };
  }));

  cases.push_back(make_case("lstm_step", [](ParamStore<double>& s) {
    Rng rng(107);
    const int din = 4, dh = 3;
    auto& x = add_random(s, "x", {din}, rng);
    auto& h = add_random(s, "h", {dh}, rng);
    auto& c = add_random(s, "c", {dh}, rng);
    auto& w_ih = add_random(s, "w_ih", {4 * dh, din}, rng);
    auto& w_hh = add_random(s, "w_hh", {4 * dh, dh}, rng);
    auto& b = add_random(s, "b", {4 * dh}, rng);
    auto ph = Tensor<double>::zeros({dh});
    auto pc = Tensor<double>::zeros({dh});
    fill_uniform(ph, rng, -1, 1);
    fill_uniform(pc, rng, -1, 1);
    return [&x, &h, &c, &w_ih, &w_hh, &b, ph, pc] {
      auto hc = lstm_step(x, h, c, w_ih, w_hh, b);
      return add(dot(row(hc, 0), ph), dot(row(hc, 1), pc));
    };
  }));

  cases.push_back(make_case("softmax_row", [](ParamStore<double>& s) {
    Rng rng(108);
    auto& x = add_random(s, "x", {6}, rng);
    auto probe = Tensor<double>::zeros({6});
    fill_uniform(probe, rng, -1, 1);
    return [&x, probe] { return dot(softmax_row(x), probe); };
  }));

  cases.push_back(make_case("softmax_cross_entropy", [](ParamStore<double>& s) {
    Rng rng(109);
    auto& x = add_random(s, "x", {7}, rng);
    return [&x] { return softmax_cross_entropy(x, 3); };
  }));

  cases.push_back(make_case("masked_softmax2d", [](ParamStore<double>& s) {
    Rng rng(110);
    auto& sc = add_random(s, "scores", {3, 5}, rng);
    auto& v = add_random(s, "values", {2, 3, 5}, rng);
    return [&sc, &v] {
      auto g = attn_weighted_sum(masked_softmax2d(sc, 3), v);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("masked_softmax_vec", [](ParamStore<double>& s) {
    Rng rng(111);
    auto& x = add_random(s, "x", {6}, rng);
    auto probe = Tensor<double>::zeros({6});
    fill_uniform(probe, rng, -1, 1);
    return [&x, probe] { return dot(masked_softmax_vec(x, 4), probe); };
  }));

  cases.push_back(make_case("channel_bias_dot", [](ParamStore<double>& s) {
    Rng rng(112);
    auto& x = add_random(s, "x", {3, 2, 4}, rng);
    auto& q = add_random(s, "q", {3}, rng);
    auto& w = add_random(s, "w", {3}, rng);
    auto probe = Tensor<double>::zeros({2});
    fill_uniform(probe, rng, -1, 1);
    return [&x, &q, &w, probe] {
      auto y = channel_dot(tanh_map(add_channel_bias(x, q)), w);
      auto g = weighted_row_sum(y, probe);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("elementwise_chain", [](ParamStore<double>& s) {
    Rng rng(113);
    auto& a = add_random(s, "a", {4}, rng, 0.1, 1.0);
    auto& b = add_random(s, "b", {4}, rng, 0.1, 1.0);
    auto probe = Tensor<double>::zeros({8});
    fill_uniform(probe, rng, -1, 1);
    return [&a, &b, probe] {
      auto y = concat(relu(a), tanh_map(scale(add(a, b), 1.7)));
      return dot(y, probe);
    };
  }));

  cases.push_back(make_case("embed_row", [](ParamStore<double>& s) {
    Rng rng(114);
    auto& table = add_random(s, "table", {5, 3}, rng);
    auto probe = Tensor<double>::zeros({3});
    fill_uniform(probe, rng, -1, 1);
    return [&table, probe] { return dot(embed_row(table, 2), probe); };
  }));

  cases.push_back(make_case("stack_scalars", [](ParamStore<double>& s) {
    Rng rng(115);
    auto& a = add_random(s, "a", {3}, rng);
    auto probe = Tensor<double>::zeros({3});
    fill_uniform(probe, rng, -1, 1);
    return [&a, probe] {
      std::vector<Tensor<double>> parts{dot(a, a), dot(a, probe)};
      auto y = stack_scalars(parts);
      return dot(y, y);
    };
  }));

  cases.push_back(make_case(
      "channel_norm",
      [](ParamStore<double>& s) {
        Rng rng(116);
        auto& x = add_random(s, "x", {2, 3, 4}, rng);
        auto probe = Tensor<double>::zeros({2, 3, 4});
        fill_uniform(probe, rng, -1, 1);
        return [&x, probe] {
          auto g = attn_weighted_sum(row(probe, 0), channel_norm(x));
          return dot(g, g);
        };
      },
      1e-5));

  cases.push_back(make_case("weighted_row_sum", [](ParamStore<double>& s) {
    Rng rng(117);
    auto& m = add_random(s, "m", {4, 3}, rng);
    auto& w = add_random(s, "w", {4}, rng);
    return [&m, &w] {
      auto g = weighted_row_sum(m, w);
      return dot(g, g);
    };
  }));

  cases.push_back(make_case("mean_all", [](ParamStore<double>& s) {
    Rng rng(118);
    auto& x = add_random(s, "x", {3, 4}, rng);
    return [&x] { return scale(mean_all(x), 3.0); };
  }));

  for (std::string variant : {"proposed2d", "traditional2d", "oned"}) {
    cases.push_back(make_case("attention_" + variant, [variant](ParamStore<double>& s) {
      Rng rng(119);
      AttentionConfig acfg;
      acfg.variant = variant;
      acfg.feature_dim = 3;
      acfg.decoder_dim = 4;
      acfg.attn_dim = 5;
      build_attention(s, acfg, rng);
      auto& v = add_random(s, "input.features", {3, 4, 6}, rng);
      auto& h = add_random(s, "input.state", {4}, rng);
      auto probe = Tensor<double>::zeros({3});
      fill_uniform(probe, rng, -1, 1);
      return [&s, acfg, &v, &h, probe] {
        auto ctx = attn_context(s, acfg, FeatureMap<double>{v, 5});
        return dot(attend(s, acfg, ctx, h).glimpse, probe);
      };
    }));
  }

  cases.push_back(make_case("encode", [](ParamStore<double>& s) {
    Rng rng(120);
    auto cfg = detail::head_config();
    detail::add_head(s, cfg, rng);
    auto& v = add_random(s, "input.features", {3, 2, 4}, rng);
    auto probe = Tensor<double>::zeros({cfg.hidden_dim});
    fill_uniform(probe, rng, -1, 1);
    return [&s, cfg, &v, probe] {
      return dot(encode(s, cfg, FeatureMap<double>{v, 3}), probe);
    };
  }));

  cases.push_back(make_case("decode_step", [](ParamStore<double>& s) {
    Rng rng(121);
    auto cfg = detail::head_config();
    detail::add_head(s, cfg, rng);
    auto& v = add_random(s, "input.features", {3, 2, 4}, rng);
    const CharSet cs = cfg.make_charset();
    const int probe_cols = cs.num_classes();
    auto probe = Tensor<double>::zeros({probe_cols});
    fill_uniform(probe, rng, -1, 1);
    return [&s, cfg, &v, probe] {
      FeatureMap<double> fm{v, 4};
      auto ctx = attn_context(s, cfg.attention(), fm);
      auto state = decode_start(s, cfg, encode(s, cfg, fm));
      auto step = decode_step(s, cfg, ctx, 1, state);
      return dot(step.logits, probe);
    };
  }));

  cases.push_back(make_case("sequence_loss", [](ParamStore<double>& s) {
    Rng rng(122);
    auto cfg = detail::head_config();
    detail::add_head(s, cfg, rng);
    auto& v = add_random(s, "input.features", {3, 2, 5}, rng);
    const CharSet cs = cfg.make_charset();
    const auto target = encode_label(cs, "102");
    return [&s, cfg, &v, target, cs] {
      return sequence_loss(s, cfg, FeatureMap<double>{v, 5}, target, cs);
    };
  }));

  return cases;
}

// Full recognizer from pixels to sequence loss. The parameter count makes an
// exhaustive probe impractical, so entries are sampled per tensor; every
// tensor is still visited.
inline GradCheckCase recognizer_gradient_case(size_t sample_cap = 6) {
  GradCheckCase c;
  c.name = "recognizer_micro";
  c.tolerance = 1e-5;
  c.run = [sample_cap](double corrupt) {
    ModelConfig cfg;
    cfg.backbone.channel_multiplier = 0.125;
    cfg.backbone.input_height = 16;
    cfg.hidden_dim = 32;
    cfg.attn_dim = 32;
    cfg.charset = "01234";
    ParamStore<double> store;
    build_model(store, cfg, 40);
    const CharSet cs = cfg.make_charset();

    Rng rng(41);
    auto img = Tensor<double>::zeros({1, 16, 32});
    fill_uniform(img, rng, -0.5, 0.5);
    store.add("input.image", img);
    const auto target = encode_label(cs, "302");

    auto loss_fn = [&] {
      auto fm = extract_features(store, cfg.backbone, store.get("input.image"), 30);
      return sequence_loss(store, cfg, fm, target, cs);
    };
    return grad_check(store, loss_fn, 1e-4, sample_cap, 7, corrupt);
  };
  return c;
}

}  // namespace sar
