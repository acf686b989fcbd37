// Reference implementations written directly from the math, kept independent
// of the library kernels so the two sides can disagree.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

// Plain triple loop, k innermost ascending.
template <class S>
std::vector<S> matmul_ref(const std::vector<S>& a, const std::vector<S>& b, int M, int K,
                          int N) {
  std::vector<S> c(size_t(M) * N, S(0));
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) {
      S sum = 0;
      for (int k = 0; k < K; ++k) sum += a[size_t(m) * K + k] * b[size_t(k) * N + n];
      c[size_t(m) * N + n] = sum;
    }
  return c;
}

// Direct convolution, stride 1: sum starts at the bias and walks the weight
// tensor in its row-major order (cin, kh, kw); out-of-bounds taps are skipped.
template <class S>
std::vector<S> conv2d_ref(const std::vector<S>& x, const std::vector<S>& w,
                          const std::vector<S>& b, int cin, int H, int W, int cout, int kh,
                          int kw, int pad) {
  const int oh = H + 2 * pad - kh + 1;
  const int ow = W + 2 * pad - kw + 1;
  std::vector<S> out(size_t(cout) * oh * ow);
  for (int co = 0; co < cout; ++co)
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        S sum = b[size_t(co)];
        for (int ci = 0; ci < cin; ++ci)
          for (int dh = 0; dh < kh; ++dh)
            for (int dw = 0; dw < kw; ++dw) {
              const int ih = y + dh - pad;
              const int iw = xo + dw - pad;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              sum += w[((size_t(co) * cin + ci) * kh + dh) * size_t(kw) + dw] *
                     x[(size_t(ci) * H + ih) * size_t(W) + iw];
            }
        out[(size_t(co) * oh + y) * size_t(ow) + xo] = sum;
      }
  return out;
}

template <class S>
std::vector<S> maxpool2d_ref(const std::vector<S>& x, int C, int H, int W, int kh, int kw,
                             int sh, int sw) {
  const int oh = (H - kh) / sh + 1;
  const int ow = (W - kw) / sw + 1;
  std::vector<S> out(size_t(C) * oh * ow);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        S best = x[(size_t(c) * H + size_t(y) * sh) * W + size_t(xo) * sw];
        for (int dh = 0; dh < kh; ++dh)
          for (int dw = 0; dw < kw; ++dw) {
            const S v = x[(size_t(c) * H + size_t(y) * sh + dh) * W + size_t(xo) * sw + dw];
            if (v > best) best = v;
          }
        out[(size_t(c) * oh + y) * size_t(ow) + xo] = best;
      }
  return out;
}

inline double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LstmRefOut {
  std::vector<double> h, c;
};

// Gate order input, forget, cell, output in the stacked parameters.
inline LstmRefOut lstm_step_ref(const std::vector<double>& x, const std::vector<double>& h,
                                const std::vector<double>& c,
                                const std::vector<double>& w_ih,
                                const std::vector<double>& w_hh,
                                const std::vector<double>& b, int din, int dh) {
  std::vector<double> pre(size_t(4) * dh);
  for (int r = 0; r < 4 * dh; ++r) {
    double s = b[size_t(r)];
    for (int n = 0; n < din; ++n) s += w_ih[size_t(r) * din + n] * x[size_t(n)];
    for (int n = 0; n < dh; ++n) s += w_hh[size_t(r) * dh + n] * h[size_t(n)];
    pre[size_t(r)] = s;
  }
  LstmRefOut o;
  o.h.resize(size_t(dh));
  o.c.resize(size_t(dh));
  for (int k = 0; k < dh; ++k) {
    const double i = sigmoid_ref(pre[size_t(k)]);
    const double f = sigmoid_ref(pre[size_t(dh + k)]);
    const double g = std::tanh(pre[size_t(2 * dh + k)]);
    const double ou = sigmoid_ref(pre[size_t(3 * dh + k)]);
    o.c[size_t(k)] = f * c[size_t(k)] + i * g;
    o.h[size_t(k)] = ou * std::tanh(o.c[size_t(k)]);
  }
  return o;
}

inline double softmax_ce_ref(const std::vector<double>& logits, int target) {
  long double z = 0;
  for (double v : logits) z += std::exp((long double)v);
  return double(std::log(z) - (long double)logits[size_t(target)]);
}

// Attention scores for one decoding step, written as the explicit
// 8-neighborhood sum: the 3x3 kernel's center tap is the per-position term
// and the other eight taps are the neighborhood term; outside the map the
// feature is zero. conv_w is [da, D, 3, 3], conv_b [da] (or empty), w_h
// [da, dh], w_e [da].
inline std::vector<double> attn_scores_ref(const std::vector<double>& v, int D, int H,
                                           int W, const std::vector<double>& conv_w,
                                           const std::vector<double>& conv_b,
                                           const std::vector<double>& w_h,
                                           const std::vector<double>& w_e,
                                           const std::vector<double>& hidden, int da,
                                           int dh) {
  std::vector<double> proj(size_t(da), 0.0);
  for (int d = 0; d < da; ++d)
    for (int n = 0; n < dh; ++n) proj[size_t(d)] += w_h[size_t(d) * dh + n] * hidden[size_t(n)];
  std::vector<double> scores(size_t(H) * W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double score = 0;
      for (int d = 0; d < da; ++d) {
        double s = conv_b.empty() ? 0.0 : conv_b[size_t(d)];
        for (int c = 0; c < D; ++c)
          for (int p = -1; p <= 1; ++p)
            for (int q = -1; q <= 1; ++q) {
              const int ii = i + p, jj = j + q;
              if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
              s += conv_w[((size_t(d) * D + c) * 3 + size_t(p + 1)) * 3 + size_t(q + 1)] *
                   v[(size_t(c) * H + ii) * size_t(W) + jj];
            }
        score += w_e[size_t(d)] * std::tanh(s + proj[size_t(d)]);
      }
      scores[size_t(i) * W + j] = score;
    }
  return scores;
}

// Memoized recursive edit distance with unit costs.
inline int levenshtein_ref(const std::string& a, const std::string& b) {
  std::map<std::pair<size_t, size_t>, int> memo;
  std::function<int(size_t, size_t)> rec = [&](size_t i, size_t j) -> int {
    if (i == 0) return int(j);
    if (j == 0) return int(i);
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const int sub = rec(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    const int del = rec(i - 1, j) + 1;
    const int ins = rec(i, j - 1) + 1;
    const int r = std::min(sub, std::min(del, ins));
    memo[key] = r;
    return r;
  };
  return rec(a.size(), b.size());
}

}  // namespace oracle
