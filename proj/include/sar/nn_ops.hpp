#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "sar/tensor.hpp"

namespace sar {

namespace detail {

template <class S>
Tensor<S> make_result_vec(Shape shape, std::vector<S> value,
                          const std::vector<Tensor<S>>& inputs,
                          std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool need = false;
  if (grad_mode_flag())
    for (const auto& t : inputs)
      if (t.defined() && t.requires_grad()) need = true;
  if (need) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backward = std::move(backward);
  }
  return Tensor<S>(std::move(n));
}

template <class S>
S sigmoid(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: x[Cin,H,W] * w[Cout,Cin,Kh,Kw] + b[Cout] -> [Cout,Oh,Ow], stride 1.
// Lowered to a matrix product whose inner dimension walks (cin,kh,kw) in
// ascending order, so every output element is the same left-to-right sum a
// nested loop over the row-major weight layout produces. Output starts from
// the bias and accumulates, matching a reference that seeds its sum with the
// bias.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int pad) {
  if (x.shape().size() != 3 || w.shape().size() != 4)
    throw std::runtime_error("conv2d expects x[C,H,W], w[Cout,Cin,Kh,Kw]");
  const int cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin)
    throw std::runtime_error("conv2d channel mismatch: x has " + std::to_string(cin) +
                             ", w expects " + std::to_string(w.dim(1)));
  if (b.shape() != Shape{cout}) throw std::runtime_error("conv2d bias must be [Cout]");
  const int oh = H + 2 * pad - kh + 1;
  const int ow = W + 2 * pad - kw + 1;
  if (oh <= 0 || ow <= 0)
    throw std::runtime_error("conv2d: kernel larger than padded input");

  const int K = cin * kh * kw;
  const int M = oh * ow;

  // colT[k][pos], k = (cin*Kh + dh)*Kw + dw
  std::vector<S> colT(size_t(K) * size_t(M), S(0));
  {
    const S* px = x.data();
    for (int c = 0; c < cin; ++c)
      for (int dh = 0; dh < kh; ++dh)
        for (int dw = 0; dw < kw; ++dw) {
          S* rowk = colT.data() + size_t(((c * kh + dh) * kw + dw)) * size_t(M);
          for (int y = 0; y < oh; ++y) {
            const int ih = y + dh - pad;
            if (ih < 0 || ih >= H) continue;
            const S* src = px + (size_t(c) * H + size_t(ih)) * W;
            for (int xo = 0; xo < ow; ++xo) {
              const int iw = xo + dw - pad;
              if (iw >= 0 && iw < W) rowk[size_t(y) * ow + xo] = src[iw];
            }
          }
        }
  }

  std::vector<S> out(size_t(cout) * size_t(M));
  for (int co = 0; co < cout; ++co)
    std::fill(out.begin() + size_t(co) * M, out.begin() + size_t(co + 1) * M, b.data()[co]);
  detail::gemm_rowmajor(w.data(), colT.data(), out.data(), cout, K, M, true);

  // Backward keeps patches position-major so both weight and input gradients
  // reduce over contiguous rows.
  std::shared_ptr<std::vector<S>> col;
  if (detail::any_requires_grad<S>({&x, &w, &b})) {
    col = std::make_shared<std::vector<S>>(size_t(M) * size_t(K));
    for (int k = 0; k < K; ++k) {
      const S* src = colT.data() + size_t(k) * M;
      S* dst = col->data() + k;
      for (int p = 0; p < M; ++p) dst[size_t(p) * K] = src[p];
    }
  }

  return detail::make_result<S>(
      {cout, oh, ow}, std::move(out), {&x, &w, &b},
      [col, cin, H, W, cout, kh, kw, pad, oh, ow, K, M](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pw = *self.parents[1];
        Node<S>& pb = *self.parents[2];
        const S* dy = self.grad.data();
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int co = 0; co < cout; ++co) {
            S acc = 0;
            const S* r = dy + size_t(co) * M;
            for (int p = 0; p < M; ++p) acc += r[p];
            pb.grad[size_t(co)] += acc;
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          detail::gemm_rowmajor(dy, col->data(), pw.grad.data(), cout, M, K, true);
        }
        if (px.requires_grad) {
          px.ensure_grad();
          std::vector<S> dcol(size_t(M) * size_t(K));
          detail::gemm_at_b(dy, pw.value.data(), dcol.data(), cout, M, K, false);
          S* gx = px.grad.data();
          for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo) {
              const S* drow = dcol.data() + (size_t(y) * ow + xo) * K;
              for (int c = 0; c < cin; ++c)
                for (int dh = 0; dh < kh; ++dh) {
                  const int ih = y + dh - pad;
                  if (ih < 0 || ih >= H) continue;
                  S* dst = gx + (size_t(c) * H + size_t(ih)) * W;
                  for (int dw = 0; dw < kw; ++dw) {
                    const int iw = xo + dw - pad;
                    if (iw >= 0 && iw < W) dst[iw] += drow[(c * kh + dh) * kw + dw];
                  }
                }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// maxpool2d: windows lie fully inside the input (no padding); floor division
// drops ragged edges. The winning index is the first maximum in row-major
// window order, and gradients flow only to it.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> maxpool2d(const Tensor<S>& x, int kh, int kw, int sh, int sw) {
  if (x.shape().size() != 3) throw std::runtime_error("maxpool2d expects x[C,H,W]");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0)
    throw std::runtime_error("maxpool2d: window and stride must be positive");
  if (kh > H || kw > W)
    throw std::runtime_error("maxpool2d: window " + std::to_string(kh) + "x" +
                             std::to_string(kw) + " exceeds input " + std::to_string(H) +
                             "x" + std::to_string(W));
  const int oh = (H - kh) / sh + 1;
  const int ow = (W - kw) / sw + 1;

  std::vector<S> out(size_t(C) * oh * ow);
  auto arg = std::make_shared<std::vector<uint32_t>>(out.size());
  const S* px = x.data();
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo) {
        const int h0 = y * sh, w0 = xo * sw;
        size_t best = (size_t(c) * H + size_t(h0)) * W + size_t(w0);
        S bv = px[best];
        for (int dh = 0; dh < kh; ++dh)
          for (int dw = 0; dw < kw; ++dw) {
            const size_t idx = (size_t(c) * H + size_t(h0 + dh)) * W + size_t(w0 + dw);
            if (px[idx] > bv) {
              bv = px[idx];
              best = idx;
            }
          }
        const size_t o = (size_t(c) * oh + size_t(y)) * ow + size_t(xo);
        out[o] = bv;
        (*arg)[o] = uint32_t(best);
      }

  return detail::make_result<S>(
      {C, oh, ow}, std::move(out), {&x}, [arg](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t o = 0; o < self.grad.size(); ++o)
          px.grad[(*arg)[o]] += self.grad[o];
      });
}

// Column-wise vertical max: x[C,H,W] -> [W,C], out[j][c] = max_h x[c][h][j].
// First maximum wins on ties (h ascending).
template <class S>
Tensor<S> height_max_wc(const Tensor<S>& x) {
  if (x.shape().size() != 3) throw std::runtime_error("height_max_wc expects x[C,H,W]");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<S> out(size_t(W) * C);
  auto arg = std::make_shared<std::vector<uint32_t>>(out.size());
  const S* px = x.data();
  for (int j = 0; j < W; ++j)
    for (int c = 0; c < C; ++c) {
      size_t best = (size_t(c) * H) * W + size_t(j);
      S bv = px[best];
      for (int h = 1; h < H; ++h) {
        const size_t idx = (size_t(c) * H + size_t(h)) * W + size_t(j);
        if (px[idx] > bv) {
          bv = px[idx];
          best = idx;
        }
      }
      out[size_t(j) * C + c] = bv;
      (*arg)[size_t(j) * C + c] = uint32_t(best);
    }
  return detail::make_result<S>(
      {W, C}, std::move(out), {&x}, [arg](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (size_t o = 0; o < self.grad.size(); ++o)
          px.grad[(*arg)[o]] += self.grad[o];
      });
}

// y = W x (+ b). Pass an undefined Tensor for b to omit the bias.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b = {}) {
  if (x.shape().size() != 1 || w.shape().size() != 2)
    throw std::runtime_error("linear expects x[N], w[M,N]");
  const int Mo = w.dim(0), N = w.dim(1);
  if (x.dim(0) != N)
    throw std::runtime_error("linear: x has " + std::to_string(x.dim(0)) + ", w expects " +
                             std::to_string(N));
  const bool with_bias = b.defined();
  if (with_bias && b.shape() != Shape{Mo})
    throw std::runtime_error("linear: bias must be [M]");

  std::vector<S> out(size_t(Mo), S(0));
  if (with_bias)
    std::copy(b.data(), b.data() + Mo, out.begin());
  detail::matvec(w.data(), x.data(), out.data(), Mo, N, with_bias);

  auto bwd = [Mo, N, with_bias](Node<S>& self) {
    Node<S>& px = *self.parents[0];
    Node<S>& pw = *self.parents[1];
    const S* dy = self.grad.data();
    if (with_bias) {
      Node<S>& pb = *self.parents[2];
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int m = 0; m < Mo; ++m) pb.grad[size_t(m)] += dy[m];
      }
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (int m = 0; m < Mo; ++m) {
        const S d = dy[m];
        S* gw = pw.grad.data() + size_t(m) * N;
        const S* xv = px.value.data();
        for (int n = 0; n < N; ++n) gw[n] += d * xv[n];
      }
    }
    if (px.requires_grad) {
      px.ensure_grad();
      detail::matvec_t(pw.value.data(), dy, px.grad.data(), Mo, N, true);
    }
  };
  if (with_bias)
    return detail::make_result<S>({Mo}, std::move(out), {&x, &w, &b}, bwd);
  return detail::make_result<S>({Mo}, std::move(out), {&x, &w}, bwd);
}

// ---------------------------------------------------------------------------
// One LSTM step as a fused op. Gate order in the stacked parameters is
// input, forget, cell, output. Returns [2,dh]: row 0 the new hidden state,
// row 1 the new cell state.
// ---------------------------------------------------------------------------
template <class S>
Tensor<S> lstm_step(const Tensor<S>& x, const Tensor<S>& h, const Tensor<S>& c,
                    const Tensor<S>& w_ih, const Tensor<S>& w_hh, const Tensor<S>& b) {
  const int din = x.dim(0);
  const int dh = h.dim(0);
  if (c.shape() != Shape{dh}) throw std::runtime_error("lstm_step: c must match h");
  if (w_ih.shape() != Shape{4 * dh, din} || w_hh.shape() != Shape{4 * dh, dh} ||
      b.shape() != Shape{4 * dh})
    throw std::runtime_error("lstm_step: parameter shapes must be [4dh,din],[4dh,dh],[4dh]");

  std::vector<S> pre(size_t(4) * dh);
  std::copy(b.data(), b.data() + 4 * dh, pre.begin());
  detail::matvec(w_ih.data(), x.data(), pre.data(), 4 * dh, din, true);
  detail::matvec(w_hh.data(), h.data(), pre.data(), 4 * dh, dh, true);

  auto gates = std::make_shared<std::vector<S>>(size_t(4) * dh);
  auto ctan = std::make_shared<std::vector<S>>(size_t(dh));
  S* g = gates->data();
  for (int k = 0; k < dh; ++k) {
    g[k] = detail::sigmoid(pre[size_t(k)]);                    // i
    g[dh + k] = detail::sigmoid(pre[size_t(dh + k)]);          // f
    g[2 * dh + k] = std::tanh(pre[size_t(2 * dh + k)]);        // g
    g[3 * dh + k] = detail::sigmoid(pre[size_t(3 * dh + k)]);  // o
  }
  std::vector<S> out(size_t(2) * dh);
  for (int k = 0; k < dh; ++k) {
    const S cn = g[dh + k] * c.data()[k] + g[k] * g[2 * dh + k];
    const S t = std::tanh(cn);
    (*ctan)[size_t(k)] = t;
    out[size_t(dh + k)] = cn;
    out[size_t(k)] = g[3 * dh + k] * t;
  }

  return detail::make_result<S>(
      {2, dh}, std::move(out), {&x, &h, &c, &w_ih, &w_hh, &b},
      [gates, ctan, din, dh](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& ph = *self.parents[1];
        Node<S>& pc = *self.parents[2];
        Node<S>& pwi = *self.parents[3];
        Node<S>& pwh = *self.parents[4];
        Node<S>& pb = *self.parents[5];
        const S* g = gates->data();
        const S* dy = self.grad.data();
        std::vector<S> dpre(size_t(4) * dh);
        for (int k = 0; k < dh; ++k) {
          const S i = g[k], f = g[dh + k], gg = g[2 * dh + k], o = g[3 * dh + k];
          const S t = (*ctan)[size_t(k)];
          const S dh_ = dy[k];
          const S dc = dy[dh + k] + dh_ * o * (S(1) - t * t);
          dpre[size_t(k)] = dc * gg * i * (S(1) - i);
          dpre[size_t(dh + k)] = dc * pc.value[size_t(k)] * f * (S(1) - f);
          dpre[size_t(2 * dh + k)] = dc * i * (S(1) - gg * gg);
          dpre[size_t(3 * dh + k)] = dh_ * t * o * (S(1) - o);
          if (pc.requires_grad) {
            pc.ensure_grad();
            pc.grad[size_t(k)] += dc * f;
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (size_t k = 0; k < dpre.size(); ++k) pb.grad[k] += dpre[k];
        }
        if (pwi.requires_grad) {
          pwi.ensure_grad();
          for (int r = 0; r < 4 * dh; ++r) {
            const S d = dpre[size_t(r)];
            S* gw = pwi.grad.data() + size_t(r) * din;
            for (int n = 0; n < din; ++n) gw[n] += d * px.value[size_t(n)];
          }
        }
        if (pwh.requires_grad) {
          pwh.ensure_grad();
          for (int r = 0; r < 4 * dh; ++r) {
            const S d = dpre[size_t(r)];
            S* gw = pwh.grad.data() + size_t(r) * dh;
            for (int n = 0; n < dh; ++n) gw[n] += d * ph.value[size_t(n)];
          }
        }
        if (px.requires_grad) {
          px.ensure_grad();
          detail::matvec_t(pwi.value.data(), dpre.data(), px.grad.data(), 4 * dh, din, true);
        }
        if (ph.requires_grad) {
          ph.ensure_grad();
          detail::matvec_t(pwh.value.data(), dpre.data(), ph.grad.data(), 4 * dh, dh, true);
        }
      });
}

template <class S>
Tensor<S> softmax_row(const Tensor<S>& x) {
  if (x.shape().size() != 1) throw std::runtime_error("softmax_row expects rank-1 input");
  const int N = x.dim(0);
  std::vector<S> out(size_t(N), S(0));
  const S* px = x.data();
  S m = px[0];
  for (int i = 1; i < N; ++i) m = std::max(m, px[i]);
  S z = 0;
  for (int i = 0; i < N; ++i) {
    out[size_t(i)] = std::exp(px[i] - m);
    z += out[size_t(i)];
  }
  for (int i = 0; i < N; ++i) out[size_t(i)] /= z;
  return detail::make_result<S>(
      {N}, std::move(out), {&x}, [N](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        S dotv = 0;
        for (int i = 0; i < N; ++i) dotv += self.grad[size_t(i)] * self.value[size_t(i)];
        for (int i = 0; i < N; ++i)
          px.grad[size_t(i)] += self.value[size_t(i)] * (self.grad[size_t(i)] - dotv);
      });
}

// Cross-entropy with integrated softmax: loss = logsumexp(x) - x[target].
template <class S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, int target) {
  if (logits.shape().size() != 1)
    throw std::runtime_error("softmax_cross_entropy expects rank-1 logits");
  const int N = logits.dim(0);
  if (target < 0 || target >= N)
    throw std::runtime_error("softmax_cross_entropy: target " + std::to_string(target) +
                             " out of [0," + std::to_string(N) + ")");
  const S* px = logits.data();
  S m = px[0];
  for (int i = 1; i < N; ++i) m = std::max(m, px[i]);
  S z = 0;
  for (int i = 0; i < N; ++i) z += std::exp(px[i] - m);
  const S loss = m + std::log(z) - px[target];
  return detail::make_result<S>(
      {}, {loss}, {&logits}, [N, target, m, z](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const S d = self.grad[0];
        for (int i = 0; i < N; ++i) {
          const S p = std::exp(px.value[size_t(i)] - m) / z;
          px.grad[size_t(i)] += d * (p - (i == target ? S(1) : S(0)));
        }
      });
}

// Softmax over the leading `valid` columns of every row; entries at and past
// `valid` come out exactly zero and receive no gradient.
template <class S>
Tensor<S> masked_softmax2d(const Tensor<S>& scores, int valid) {
  if (scores.shape().size() != 2) throw std::runtime_error("masked_softmax2d expects [H,W]");
  const int H = scores.dim(0), W = scores.dim(1);
  if (valid < 1 || valid > W)
    throw std::runtime_error("masked_softmax2d: valid width " + std::to_string(valid) +
                             " out of [1," + std::to_string(W) + "]");
  const S* px = scores.data();
  S m = px[0];
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < valid; ++j) m = std::max(m, px[size_t(i) * W + j]);
  std::vector<S> out(size_t(H) * W, S(0));
  S z = 0;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < valid; ++j) {
      const S e = std::exp(px[size_t(i) * W + j] - m);
      out[size_t(i) * W + j] = e;
      z += e;
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < valid; ++j) out[size_t(i) * W + j] /= z;
  return detail::make_result<S>(
      {H, W}, std::move(out), {&scores}, [H, W, valid](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        S dotv = 0;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < valid; ++j) {
            const size_t k = size_t(i) * W + j;
            dotv += self.grad[k] * self.value[k];
          }
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < valid; ++j) {
            const size_t k = size_t(i) * W + j;
            px.grad[k] += self.value[k] * (self.grad[k] - dotv);
          }
      });
}

template <class S>
Tensor<S> masked_softmax_vec(const Tensor<S>& scores, int valid) {
  if (scores.shape().size() != 1)
    throw std::runtime_error("masked_softmax_vec expects rank-1 scores");
  const int N = scores.dim(0);
  if (valid < 1 || valid > N)
    throw std::runtime_error("masked_softmax_vec: valid length out of range");
  const S* px = scores.data();
  S m = px[0];
  for (int j = 1; j < valid; ++j) m = std::max(m, px[j]);
  std::vector<S> out(size_t(N), S(0));
  S z = 0;
  for (int j = 0; j < valid; ++j) {
    out[size_t(j)] = std::exp(px[j] - m);
    z += out[size_t(j)];
  }
  for (int j = 0; j < valid; ++j) out[size_t(j)] /= z;
  return detail::make_result<S>(
      {N}, std::move(out), {&scores}, [valid](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        S dotv = 0;
        for (int j = 0; j < valid; ++j) dotv += self.grad[size_t(j)] * self.value[size_t(j)];
        for (int j = 0; j < valid; ++j)
          px.grad[size_t(j)] += self.value[size_t(j)] * (self.grad[size_t(j)] - dotv);
      });
}

// x[C,H,W] + s[C] broadcast over spatial positions.
template <class S>
Tensor<S> add_channel_bias(const Tensor<S>& x, const Tensor<S>& s) {
  if (x.shape().size() != 3 || s.shape() != Shape{x.dim(0)})
    throw std::runtime_error("add_channel_bias expects x[C,H,W], s[C]");
  const int C = x.dim(0);
  const size_t HW = size_t(x.dim(1)) * size_t(x.dim(2));
  std::vector<S> out(x.size());
  const S* px = x.data();
  const S* ps = s.data();
  for (int c = 0; c < C; ++c) {
    const S v = ps[c];
    for (size_t i = 0; i < HW; ++i) out[size_t(c) * HW + i] = px[size_t(c) * HW + i] + v;
  }
  return detail::make_result<S>(
      x.shape(), std::move(out), {&x, &s}, [C, HW](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& ps = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
        }
        if (ps.requires_grad) {
          ps.ensure_grad();
          for (int c = 0; c < C; ++c) {
            S acc = 0;
            for (size_t i = 0; i < HW; ++i) acc += self.grad[size_t(c) * HW + i];
            ps.grad[size_t(c)] += acc;
          }
        }
      });
}

// Per-position channel dot: x[C,H,W], w[C] -> [H,W].
template <class S>
Tensor<S> channel_dot(const Tensor<S>& x, const Tensor<S>& w) {
  if (x.shape().size() != 3 || w.shape() != Shape{x.dim(0)})
    throw std::runtime_error("channel_dot expects x[C,H,W], w[C]");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const size_t HW = size_t(H) * W;
  std::vector<S> out(HW, S(0));
  const S* px = x.data();
  const S* pw = w.data();
  for (int c = 0; c < C; ++c) {
    const S v = pw[c];
    for (size_t i = 0; i < HW; ++i) out[i] += v * px[size_t(c) * HW + i];
  }
  return detail::make_result<S>(
      {H, W}, std::move(out), {&x, &w}, [C, HW](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pw = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (int c = 0; c < C; ++c) {
            const S v = pw.value[size_t(c)];
            for (size_t i = 0; i < HW; ++i) px.grad[size_t(c) * HW + i] += v * self.grad[i];
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (int c = 0; c < C; ++c) {
            S acc = 0;
            for (size_t i = 0; i < HW; ++i) acc += px.value[size_t(c) * HW + i] * self.grad[i];
            pw.grad[size_t(c)] += acc;
          }
        }
      });
}

// Glimpse: g[c] = sum_{y,x} alpha[y][x] * v[c][y][x].
template <class S>
Tensor<S> attn_weighted_sum(const Tensor<S>& alpha, const Tensor<S>& v) {
  if (alpha.shape().size() != 2 || v.shape().size() != 3 || v.dim(1) != alpha.dim(0) ||
      v.dim(2) != alpha.dim(1))
    throw std::runtime_error("attn_weighted_sum expects alpha[H,W], v[C,H,W]");
  const int C = v.dim(0);
  const size_t HW = size_t(alpha.dim(0)) * size_t(alpha.dim(1));
  std::vector<S> out(size_t(C), S(0));
  const S* pa = alpha.data();
  const S* pv = v.data();
  for (int c = 0; c < C; ++c) {
    S acc = 0;
    const S* vc = pv + size_t(c) * HW;
    for (size_t i = 0; i < HW; ++i) acc += pa[i] * vc[i];
    out[size_t(c)] = acc;
  }
  return detail::make_result<S>(
      {C}, std::move(out), {&alpha, &v}, [C, HW](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pv = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (int c = 0; c < C; ++c) {
            const S d = self.grad[size_t(c)];
            const S* vc = pv.value.data() + size_t(c) * HW;
            for (size_t i = 0; i < HW; ++i) pa.grad[i] += d * vc[i];
          }
        }
        if (pv.requires_grad) {
          pv.ensure_grad();
          for (int c = 0; c < C; ++c) {
            const S d = self.grad[size_t(c)];
            S* gv = pv.grad.data() + size_t(c) * HW;
            for (size_t i = 0; i < HW; ++i) gv[i] += d * pa.value[i];
          }
        }
      });
}

// out[c] = sum_r w[r] * m[r][c].
template <class S>
Tensor<S> weighted_row_sum(const Tensor<S>& m, const Tensor<S>& w) {
  if (m.shape().size() != 2 || w.shape() != Shape{m.dim(0)})
    throw std::runtime_error("weighted_row_sum expects m[R,C], w[R]");
  const int R = m.dim(0), C = m.dim(1);
  std::vector<S> out(size_t(C), S(0));
  for (int r = 0; r < R; ++r) {
    const S v = w.data()[r];
    const S* mr = m.data() + size_t(r) * C;
    for (int c = 0; c < C; ++c) out[size_t(c)] += v * mr[c];
  }
  return detail::make_result<S>(
      {C}, std::move(out), {&m, &w}, [R, C](Node<S>& self) {
        Node<S>& pm = *self.parents[0];
        Node<S>& pw = *self.parents[1];
        if (pm.requires_grad) {
          pm.ensure_grad();
          for (int r = 0; r < R; ++r) {
            const S v = pw.value[size_t(r)];
            S* gr = pm.grad.data() + size_t(r) * C;
            for (int c = 0; c < C; ++c) gr[c] += v * self.grad[size_t(c)];
          }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (int r = 0; r < R; ++r) {
            S acc = 0;
            const S* mr = pm.value.data() + size_t(r) * C;
            for (int c = 0; c < C; ++c) acc += mr[c] * self.grad[size_t(c)];
            pw.grad[size_t(r)] += acc;
          }
        }
      });
}

template <class S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape() || a.shape().size() != 1)
    throw std::runtime_error("dot expects matching rank-1 tensors");
  S acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
  return detail::make_result<S>(
      {}, {acc}, {&a, &b}, [](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        const S d = self.grad[0];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (size_t i = 0; i < pa.value.size(); ++i) pa.grad[i] += d * pb.value[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (size_t i = 0; i < pb.value.size(); ++i) pb.grad[i] += d * pa.value[i];
        }
      });
}

template <class S>
Tensor<S> stack_scalars(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw std::runtime_error("stack_scalars of empty list");
  std::vector<S> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != 1) throw std::runtime_error("stack_scalars expects scalars");
    out[i] = xs[i].data()[0];
  }
  return detail::make_result_vec<S>(
      {int(xs.size())}, std::move(out), xs, [](Node<S>& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
          Node<S>& p = *self.parents[i];
          if (!p.requires_grad) continue;
          p.ensure_grad();
          p.grad[0] += self.grad[i];
        }
      });
}

// Per-channel spatial standardization: zero mean, unit variance over H*W.
template <class S>
Tensor<S> channel_norm(const Tensor<S>& x, S eps = S(1e-5)) {
  if (x.shape().size() != 3) throw std::runtime_error("channel_norm expects x[C,H,W]");
  const int C = x.dim(0);
  const size_t HW = size_t(x.dim(1)) * size_t(x.dim(2));
  std::vector<S> out(x.size());
  auto inv_std = std::make_shared<std::vector<S>>(size_t(C));
  const S* px = x.data();
  for (int c = 0; c < C; ++c) {
    const S* xc = px + size_t(c) * HW;
    S mu = 0;
    for (size_t i = 0; i < HW; ++i) mu += xc[i];
    mu /= S(HW);
    S var = 0;
    for (size_t i = 0; i < HW; ++i) var += (xc[i] - mu) * (xc[i] - mu);
    var /= S(HW);
    const S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[size_t(c)] = is;
    S* oc = out.data() + size_t(c) * HW;
    for (size_t i = 0; i < HW; ++i) oc[i] = (xc[i] - mu) * is;
  }
  return detail::make_result<S>(
      x.shape(), std::move(out), {&x}, [inv_std, C, HW](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        for (int c = 0; c < C; ++c) {
          const S is = (*inv_std)[size_t(c)];
          const S* xh = self.value.data() + size_t(c) * HW;
          const S* dy = self.grad.data() + size_t(c) * HW;
          S sum_dy = 0, sum_dy_xh = 0;
          for (size_t i = 0; i < HW; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += dy[i] * xh[i];
          }
          const S mdy = sum_dy / S(HW);
          const S mdyx = sum_dy_xh / S(HW);
          S* gx = px.grad.data() + size_t(c) * HW;
          for (size_t i = 0; i < HW; ++i) gx[i] += is * (dy[i] - mdy - xh[i] * mdyx);
        }
      });
}

}  // namespace sar
