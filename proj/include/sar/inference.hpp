#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <future>
#include <string>
#include <vector>

#include "sar/encdec.hpp"
#include "sar/image.hpp"

namespace sar {

template <class S>
struct Hypothesis {
  std::vector<int> tokens;  // emitted ids, END included once finished
  double logprob = 0;       // accumulated ln p of the chosen tokens
  DecoderState<S> state;
  bool finished = false;
  std::vector<Tensor<S>> trace;  // attention map per emitted token
};

template <class S>
struct Recognition {
  std::string text;
  std::vector<int> tokens;
  double logprob = 0;  // accumulated, END included
  double score = 0;    // logprob / emitted steps
  std::vector<Tensor<S>> trace;
  int orientation = 0;  // degrees: 0, 90 (clockwise), -90
};

namespace detail {

template <class S>
std::vector<double> log_softmax(const std::vector<S>& logits) {
  double mx = -1e300;
  for (S v : logits) mx = std::max(mx, double(v));
  double z = 0;
  for (S v : logits) z += std::exp(double(v) - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = double(logits[i]) - lse;
  return out;
}

}  // namespace detail

// Beam search over decoding steps, ranked by accumulated log probability
// with no length normalization. A hypothesis finishes when it emits END;
// finished hypotheses are never extended. Once a hypothesis reaches
// max_decode_len symbols only END is offered, so every branch terminates.
// The search stops when k hypotheses have finished (or nothing is left to
// extend) and returns the best finished one.
template <class S>
Recognition<S> beam_search(ParamStore<S>& store, const ModelConfig& cfg,
                           const FeatureMap<S>& fm, const CharSet& cs, int k) {
  if (k < 1) throw std::runtime_error("beam_search: k must be >= 1");
  NoGrad inference_scope;

  auto holistic = encode(store, cfg, fm);
  auto ctx = attn_context(store, cfg.attention(), fm);

  std::vector<Hypothesis<S>> alive(1);
  alive[0].state = decode_start(store, cfg, holistic);
  std::vector<Hypothesis<S>> completed;

  while (!alive.empty() && int(completed.size()) < k) {
    std::vector<Hypothesis<S>> candidates;
    for (auto& hyp : alive) {
      const int prev = hyp.tokens.empty() ? cs.start_token() : hyp.tokens.back();
      auto step = decode_step(store, cfg, ctx, prev, hyp.state);
      const auto logp = detail::log_softmax(step.logits.values());
      const bool at_cap = int(hyp.tokens.size()) >= cfg.max_decode_len;
      for (int c = 0; c < cs.num_classes(); ++c) {
        if (at_cap && c != cs.end_token()) continue;
        Hypothesis<S> next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(c);
        next.logprob = hyp.logprob + logp[size_t(c)];
        next.state = step.state;
        next.finished = c == cs.end_token();
        next.trace = hyp.trace;
        next.trace.push_back(step.alpha);
        candidates.push_back(std::move(next));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
    if (int(candidates.size()) > k) candidates.resize(size_t(k));
    alive.clear();
    for (auto& c : candidates) {
      if (c.finished)
        completed.push_back(std::move(c));
      else
        alive.push_back(std::move(c));
    }
  }

  const Hypothesis<S>* best = nullptr;
  for (const auto& h : completed)
    if (!best || h.logprob > best->logprob) best = &h;
  if (!best)
    for (const auto& h : alive)
      if (!best || h.logprob > best->logprob) best = &h;
  if (!best) throw std::runtime_error("beam_search: no hypothesis produced");

  Recognition<S> rec;
  rec.tokens = best->tokens;
  rec.text = decode_tokens(cs, best->tokens);
  rec.logprob = best->logprob;
  rec.score = best->logprob / double(best->tokens.size());
  rec.trace = best->trace;
  return rec;
}

template <class S>
Recognition<S> greedy_decode(ParamStore<S>& store, const ModelConfig& cfg,
                             const FeatureMap<S>& fm, const CharSet& cs) {
  return beam_search(store, cfg, fm, cs, 1);
}

// Raw image to Recognition: grayscale if the model expects one channel,
// resize to the configured height, decode.
template <class S>
Recognition<S> recognize_image(ParamStore<S>& store, const ModelConfig& cfg,
                               const Image& raw, const CharSet& cs, int k) {
  Image gray = (cfg.backbone.input_channels == 1 && raw.channels == 3) ? to_gray(raw) : raw;
  auto sized = resize_policy(gray, cfg.backbone.input_height);
  auto img = image_to_tensor<S>(sized.image);
  auto fm = extract_features(store, cfg.backbone, img, sized.content_width);
  return beam_search(store, cfg, fm, cs, k);
}

template <class S>
struct RotationTrace {
  std::vector<Recognition<S>> candidates;  // orientation order 0, +90, -90
};

// Tall images are decoded three ways (as-is, rotated 90 degrees clockwise,
// counter-clockwise) and the orientation whose decode has the best mean
// per-step log probability wins; ties keep the earlier orientation. Wide
// images are decoded once.
template <class S>
Recognition<S> recognize_with_rotation(ParamStore<S>& store, const ModelConfig& cfg,
                                       const Image& raw, const CharSet& cs, int k,
                                       RotationTrace<S>* trace = nullptr, int threads = 1) {
  if (raw.height <= raw.width) {
    auto rec = recognize_image(store, cfg, raw, cs, k);
    rec.orientation = 0;
    if (trace) trace->candidates = {rec};
    return rec;
  }

  const std::array<int, 3> orientations{0, 90, -90};
  auto decode_at = [&](int deg) {
    NoGrad inference_scope;
    Image variant = deg == 0 ? raw : (deg == 90 ? rotate90_cw(raw) : rotate90_ccw(raw));
    auto rec = recognize_image(store, cfg, variant, cs, k);
    rec.orientation = deg;
    return rec;
  };

  std::vector<Recognition<S>> recs;
  if (threads > 1) {
    std::vector<std::future<Recognition<S>>> futs;
    for (int deg : orientations)
      futs.push_back(std::async(std::launch::async, decode_at, deg));
    for (auto& f : futs) recs.push_back(f.get());
  } else {
    for (int deg : orientations) recs.push_back(decode_at(deg));
  }

  size_t best = 0;
  for (size_t i = 1; i < recs.size(); ++i)
    if (recs[i].score > recs[best].score) best = i;
  if (trace) trace->candidates = recs;
  return recs[best];
}

// Unit-cost edit distance over UTF-8 code points.
inline int levenshtein(const std::string& a, const std::string& b) {
  const auto sa = CharSet::split_utf8(a);
  const auto sb = CharSet::split_utf8(b);
  std::vector<int> row(sb.size() + 1);
  for (size_t j = 0; j <= sb.size(); ++j) row[j] = int(j);
  for (size_t i = 1; i <= sa.size(); ++i) {
    int diag = row[0];
    row[0] = int(i);
    for (size_t j = 1; j <= sb.size(); ++j) {
      const int sub = diag + (sa[i - 1] == sb[j - 1] ? 0 : 1);
      diag = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, sub});
    }
  }
  return row[sb.size()];
}

// Closest lexicon word by edit distance; ties keep the earliest entry.
inline std::string lexicon_match(const std::string& prediction,
                                 const std::vector<std::string>& lexicon,
                                 bool case_fold = false) {
  if (lexicon.empty()) throw std::runtime_error("lexicon_match: empty lexicon");
  const std::string pred = case_fold ? ascii_lower(prediction) : prediction;
  size_t best = 0;
  int best_d = -1;
  for (size_t i = 0; i < lexicon.size(); ++i) {
    const int d = levenshtein(pred, case_fold ? ascii_lower(lexicon[i]) : lexicon[i]);
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return lexicon[best];
}

// One word per line, UTF-8, blank lines skipped.
inline std::vector<std::string> load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace sar
