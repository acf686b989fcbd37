#include <catch2/catch_amalgamated.hpp>

#include "sar/inference.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"

using namespace sar;

namespace {

template <class S>
Tensor<S> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros(shape);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = S(rng.uniform(lo, hi));
  return t;
}

// Recognizer head over a hand-sized feature map, no backbone.
struct MicroRig {
  std::string symbols;
  CharSet cs;
  int D = 3, dh = 4, da = 5, de = 4;
  int max_len = 4;

  explicit MicroRig(std::string syms)
      : symbols(std::move(syms)), cs(CharSet::from_symbols(CharSet::split_utf8(symbols))) {}

  ModelConfig make_cfg() const {
    ModelConfig c;
    c.hidden_dim = dh;
    c.embed_dim = de;
    c.charset = symbols;
    c.attn_variant = "proposed2d";
    c.feature_dim = D;
    c.attn_dim = da;
    c.max_decode_len = max_len;
    return c;
  }

  template <class S>
  void build(ParamStore<S>& store, Rng& rng) const {
    auto add = [&](const std::string& name, const Shape& shape) {
      fill_uniform(store.add(name, Tensor<S>::zeros(shape)), rng, -0.4, 0.4);
    };
    build_attention(store, make_cfg().attention(), rng);
    for (std::string side : {"encoder", "decoder"}) {
      const int din = side == "encoder" ? D : de;
      add(side + ".l1.w_ih", {4 * dh, din});
      add(side + ".l1.w_hh", {4 * dh, dh});
      add(side + ".l1.bias", {4 * dh});
      add(side + ".l2.w_ih", {4 * dh, dh});
      add(side + ".l2.w_hh", {4 * dh, dh});
      add(side + ".l2.bias", {4 * dh});
    }
    add("decoder.embed.weight", {cs.embed_vocab(), de});
    add("decoder.holistic.weight", {de, dh});
    add("decoder.holistic.bias", {de});
    add("decoder.out.weight", {cs.num_classes(), dh + D});
    add("decoder.out.bias", {cs.num_classes()});
  }
};

std::vector<double> logsm_ref(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  for (double v : logits) z += std::exp(v - mx);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - (mx + std::log(z));
  return out;
}

struct RefDecode {
  std::vector<int> tokens;
  double logprob = 0;
};

// Step-by-step argmax decoding, END forced once the length cap is hit.
RefDecode greedy_ref(ParamStore<double>& store, const ModelConfig& cfg,
                     const FeatureMap<double>& fm, const CharSet& cs) {
  NoGrad ng;
  auto ctx = attn_context(store, cfg.attention(), fm);
  auto state = decode_start(store, cfg, encode(store, cfg, fm));
  RefDecode out;
  int prev = cs.start_token();
  while (true) {
    auto ds = decode_step(store, cfg, ctx, prev, state);
    const auto lp = logsm_ref(ds.logits.values());
    int arg = 0;
    for (int c = 1; c < cs.num_classes(); ++c)
      if (lp[size_t(c)] > lp[size_t(arg)]) arg = c;
    if (int(out.tokens.size()) >= cfg.max_decode_len) arg = cs.end_token();
    out.tokens.push_back(arg);
    out.logprob += lp[size_t(arg)];
    if (arg == cs.end_token()) return out;
    state = ds.state;
    prev = arg;
  }
}

// Log probability of one complete token sequence (END included) under
// teacher forcing.
double sequence_logprob(ParamStore<double>& store, const ModelConfig& cfg,
                        const FeatureMap<double>& fm, const CharSet& cs,
                        const std::vector<int>& tokens) {
  NoGrad ng;
  auto ctx = attn_context(store, cfg.attention(), fm);
  auto state = decode_start(store, cfg, encode(store, cfg, fm));
  double lp = 0;
  int prev = cs.start_token();
  for (int tok : tokens) {
    auto ds = decode_step(store, cfg, ctx, prev, state);
    lp += logsm_ref(ds.logits.values())[size_t(tok)];
    state = ds.state;
    prev = tok;
  }
  return lp;
}

Image noise_image(int w, int h, Rng& rng) {
  Image im = Image::make(w, h, 1);
  for (auto& p : im.pixels) p = uint8_t(rng.next_u64() % 256);
  return im;
}

std::string random_word(Rng& rng, int max_len, const std::string& alphabet) {
  const int n = int(rng.next_u64() % uint64_t(max_len + 1));
  std::string s;
  for (int i = 0; i < n; ++i) s += alphabet[size_t(rng.next_u64() % alphabet.size())];
  return s;
}

}  // namespace

TEST_CASE("graph recording can be suspended per scope") {
  auto a = Tensor<double>::zeros({3}, true);
  REQUIRE(add(a, a).requires_grad());
  {
    NoGrad ng;
    REQUIRE_FALSE(add(a, a).requires_grad());
    {
      NoGrad inner;
      REQUIRE_FALSE(add(a, a).requires_grad());
    }
    REQUIRE_FALSE(add(a, a).requires_grad());
  }
  REQUIRE(add(a, a).requires_grad());
}

TEST_CASE("beam width 1 reproduces greedy decoding") {
  MicroRig rig("abc");
  ParamStore<double> store;
  Rng rng(11);
  rig.build(store, rng);
  auto cfg = rig.make_cfg();

  for (int trial = 0; trial < 20; ++trial) {
    const int w = 2 + int(rng.next_u64() % 5);
    auto v = random_tensor<double>({rig.D, 2, w}, rng);
    FeatureMap<double> fm{v, w};
    auto rec = beam_search(store, cfg, fm, rig.cs, 1);
    auto ref = greedy_ref(store, cfg, fm, rig.cs);
    REQUIRE(rec.tokens == ref.tokens);
    REQUIRE(rec.logprob == Catch::Approx(ref.logprob).margin(1e-9));
  }
}

TEST_CASE("wider beams never score worse") {
  MicroRig rig("abcde");
  ParamStore<double> store;
  Rng rng(12);
  rig.build(store, rng);
  auto cfg = rig.make_cfg();
  cfg.max_decode_len = 6;

  for (int trial = 0; trial < 20; ++trial) {
    auto v = random_tensor<double>({rig.D, 2, 4}, rng);
    FeatureMap<double> fm{v, 4};
    auto r1 = beam_search(store, cfg, fm, rig.cs, 1);
    auto r5 = beam_search(store, cfg, fm, rig.cs, 5);
    REQUIRE(r5.logprob >= r1.logprob - 1e-12);
  }
}

TEST_CASE("a beam covering the whole sequence space finds the exhaustive optimum") {
  MicroRig rig("abc");
  ParamStore<double> store;
  Rng rng(13);
  rig.build(store, rng);
  auto cfg = rig.make_cfg();
  auto v = random_tensor<double>({rig.D, 2, 3}, rng);
  FeatureMap<double> fm{v, 3};

  // 3 symbols, content length <= 4: 1 + 3 + 9 + 27 + 81 complete sequences.
  std::vector<std::vector<int>> all{{}};
  for (int len = 1; len <= 4; ++len) {
    const size_t start = all.size();
    std::vector<std::vector<int>> grown;
    for (size_t i = 0; i < all.size(); ++i)
      if (int(all[i].size()) == len - 1)
        for (int c = 0; c < 3; ++c) {
          auto seq = all[i];
          seq.push_back(c);
          grown.push_back(std::move(seq));
        }
    (void)start;
    all.insert(all.end(), grown.begin(), grown.end());
  }
  REQUIRE(all.size() == 121);

  double best_lp = -1e300;
  std::vector<int> best_seq;
  for (auto seq : all) {
    seq.push_back(rig.cs.end_token());
    const double lp = sequence_logprob(store, cfg, fm, rig.cs, seq);
    if (lp > best_lp) {
      best_lp = lp;
      best_seq = seq;
    }
  }

  auto rec = beam_search(store, cfg, fm, rig.cs, 121);
  REQUIRE(rec.tokens == best_seq);
  REQUIRE(rec.logprob == Catch::Approx(best_lp).margin(1e-9));
}

TEST_CASE("recognition invariants hold") {
  MicroRig rig("abc");
  ParamStore<double> store;
  Rng rng(14);
  rig.build(store, rng);
  auto cfg = rig.make_cfg();
  auto v = random_tensor<double>({rig.D, 3, 5}, rng);
  FeatureMap<double> fm{v, 4};

  auto rec = beam_search(store, cfg, fm, rig.cs, 3);
  REQUIRE(std::isfinite(rec.score));
  REQUIRE(rec.logprob < 0.0);
  REQUIRE(rec.score < 0.0);
  REQUIRE(rec.tokens.back() == rig.cs.end_token());
  REQUIRE(rec.tokens.size() <= size_t(cfg.max_decode_len) + 1);
  REQUIRE(rec.trace.size() == rec.tokens.size());
  REQUIRE(rec.trace.size() == CharSet::split_utf8(rec.text).size() + 1);
  for (const auto& alpha : rec.trace) {
    REQUIRE(alpha.shape() == Shape{3, 5});
    double sum = 0;
    for (size_t i = 0; i < alpha.size(); ++i) sum += alpha.data()[i];
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
  REQUIRE(rec.text == decode_tokens(rig.cs, rec.tokens));

  SECTION("rejects a non-positive beam width") {
    REQUIRE_THROWS_WITH(beam_search(store, cfg, fm, rig.cs, 0),
                        Catch::Matchers::ContainsSubstring("k"));
  }
}

TEST_CASE("decoding suppresses gradient graphs") {
  MicroRig rig("abc");
  ParamStore<double> store;
  Rng rng(15);
  rig.build(store, rng);
  auto cfg = rig.make_cfg();
  auto v = random_tensor<double>({rig.D, 2, 3}, rng);

  auto rec = beam_search(store, cfg, FeatureMap<double>{v, 3}, rig.cs, 2);
  for (const auto& alpha : rec.trace) REQUIRE_FALSE(alpha.requires_grad());
}

TEST_CASE("wide images are decoded exactly once at orientation zero") {
  ModelConfig cfg;
  cfg.backbone.channel_multiplier = 0.125;
  cfg.backbone.input_height = 16;
  cfg.hidden_dim = 8;
  cfg.charset = "abc";
  cfg.max_decode_len = 4;
  ParamStore<float> store;
  build_model(store, cfg, 21);
  CharSet cs = cfg.make_charset();
  Rng rng(22);

  auto img = noise_image(40, 16, rng);
  RotationTrace<float> trace;
  auto rec = recognize_with_rotation(store, cfg, img, cs, 2, &trace);
  REQUIRE(trace.candidates.size() == 1);
  REQUIRE(rec.orientation == 0);

  auto square = noise_image(16, 16, rng);
  auto rec2 = recognize_with_rotation(store, cfg, square, cs, 2, &trace);
  REQUIRE(trace.candidates.size() == 1);
  REQUIRE(rec2.orientation == 0);
}

TEST_CASE("tall images pick the best of three orientations") {
  ModelConfig cfg;
  cfg.backbone.channel_multiplier = 0.125;
  cfg.backbone.input_height = 16;
  cfg.hidden_dim = 8;
  cfg.charset = "abc";
  cfg.max_decode_len = 4;
  ParamStore<float> store;
  build_model(store, cfg, 23);
  CharSet cs = cfg.make_charset();
  Rng rng(24);

  auto img = noise_image(20, 52, rng);
  RotationTrace<float> trace;
  auto rec = recognize_with_rotation(store, cfg, img, cs, 2, &trace);

  REQUIRE(trace.candidates.size() == 3);
  REQUIRE(trace.candidates[0].orientation == 0);
  REQUIRE(trace.candidates[1].orientation == 90);
  REQUIRE(trace.candidates[2].orientation == -90);

  double best = -1e300;
  for (const auto& c : trace.candidates) best = std::max(best, c.score);
  REQUIRE(rec.score == best);
  for (const auto& c : trace.candidates)
    if (c.score == best) {
      REQUIRE(rec.orientation == c.orientation);
      break;
    }

  SECTION("threaded decoding gives the same answer") {
    RotationTrace<float> ttrace;
    auto trec = recognize_with_rotation(store, cfg, img, cs, 2, &ttrace, 3);
    REQUIRE(trec.tokens == rec.tokens);
    REQUIRE(trec.orientation == rec.orientation);
    REQUIRE(trec.logprob == rec.logprob);
    REQUIRE(ttrace.candidates.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      REQUIRE(ttrace.candidates[i].tokens == trace.candidates[i].tokens);
      REQUIRE(ttrace.candidates[i].logprob == trace.candidates[i].logprob);
    }
  }
}

TEST_CASE("edit distance matches a reference on known and random pairs") {
  REQUIRE(levenshtein("kitten", "sitting") == 3);
  REQUIRE(levenshtein("", "") == 0);
  REQUIRE(levenshtein("", "abc") == 3);
  REQUIRE(levenshtein("abc", "") == 3);
  REQUIRE(levenshtein("same", "same") == 0);
  REQUIRE(levenshtein("caf\xc3\xa9", "cafe") == 1);
  REQUIRE(levenshtein("flaw", "lawn") == 2);

  Rng rng(31);
  const std::string alphabet = "abcde";
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_word(rng, 8, alphabet);
    const auto b = random_word(rng, 8, alphabet);
    REQUIRE(levenshtein(a, b) == oracle::levenshtein_ref(a, b));
  }
}

TEST_CASE("lexicon matching picks the closest word") {
  std::vector<std::string> lex{"hello", "world", "help", "hold"};
  REQUIRE(lexicon_match("hellp", lex) == "hello");
  REQUIRE(lexicon_match("world", lex) == "world");
  REQUIRE(lexicon_match("wold", lex) == "world");

  SECTION("ties keep the earliest entry") {
    std::vector<std::string> tie{"cat", "bat", "rat"};
    REQUIRE(lexicon_match("aat", tie) == "cat");
    REQUIRE(lexicon_match("hat", tie) == "cat");
  }

  SECTION("case folding changes the winner but not the returned casing") {
    std::vector<std::string> cased{"HELLO", "jelly"};
    REQUIRE(lexicon_match("hello", cased) == "jelly");
    REQUIRE(lexicon_match("hello", cased, true) == "HELLO");
  }

  SECTION("empty lexicon is rejected") {
    REQUIRE_THROWS_WITH(lexicon_match("x", {}), Catch::Matchers::ContainsSubstring("empty"));
  }
}

TEST_CASE("lexicon files load one word per line") {
  const std::string path = "test_lexicon.txt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "alpha\nbeta\r\n\ngamma\n";
  }
  auto words = load_lexicon(path);
  std::remove(path.c_str());
  REQUIRE(words == std::vector<std::string>{"alpha", "beta", "gamma"});
  REQUIRE_THROWS_WITH(load_lexicon("no_such_lexicon.txt"),
                      Catch::Matchers::ContainsSubstring("open"));
}
