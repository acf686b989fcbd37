#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sar {

using Shape = std::vector<int>;

inline size_t numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::runtime_error("negative extent in shape");
    n *= size_t(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily on first backward touch
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

// Shared handle to a graph node. Copies alias the same storage; ops create
// fresh nodes, so user-visible tensors behave as values as long as callers
// do not write through data() after sharing.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value.assign(numel(shape), S(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<S> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw std::runtime_error("tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    return from({}, {v}, requires_grad);
  }

  explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[size_t(i)]; }
  size_t size() const { return node_->value.size(); }

  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }

  S item() const {
    if (node_->value.size() != 1) throw std::runtime_error("item() on non-scalar tensor");
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  const std::vector<S>& grad() const { return node_->grad; }
  std::vector<S>& grad() { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  std::shared_ptr<Node<S>> node() const { return node_; }

  // Deep copy of values only (fresh leaf).
  Tensor clone_detached() const {
    return Tensor::from(node_->shape, node_->value, node_->requires_grad);
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

inline bool& grad_mode_flag() {
  static thread_local bool on = true;
  return on;
}

template <class S>
bool any_requires_grad(std::initializer_list<const Tensor<S>*> ts) {
  if (!grad_mode_flag()) return false;
  for (auto* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Creates the result node; records parents and the pull-style backward only
// when some input needs gradients, so inference builds free-standing values.
template <class S>
Tensor<S> make_result(Shape shape, std::vector<S> value,
                      std::initializer_list<const Tensor<S>*> inputs,
                      std::function<void(Node<S>&)> backward) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (any_requires_grad<S>(inputs)) {
    n->requires_grad = true;
    for (auto* t : inputs) n->parents.push_back(t->node());
    n->backward = std::move(backward);
  }
  return Tensor<S>(std::move(n));
}

}  // namespace detail

// Scope guard that suppresses graph recording on this thread: ops built
// inside produce plain values. New threads start with recording on.
class NoGrad {
 public:
  NoGrad() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGrad() { detail::grad_mode_flag() = prev_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar loss. Topological order is determined by
// graph structure alone, so repeated runs accumulate in the same order.
template <class S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::runtime_error("backward expects a defined scalar loss");
  if (!loss.requires_grad()) return;

  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  struct Frame {
    Node<S>* n;
    size_t next;
  };
  std::vector<Frame> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node<S>* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Matrix kernels. gemm_rowmajor keeps a single accumulator per output element
// and walks k in ascending order, so each C[m][n] is the exact left-to-right
// fold the nested-loop reference computes. The other two kernels have no
// ordering contract beyond run-to-run determinism.
// ---------------------------------------------------------------------------
namespace detail {

// C[M x N] (+)= A[M x K] * B[K x N]; all row-major. Register tile of
// MR x NR accumulators; k advances sequentially, so each output element is
// an exact left-to-right fold over k regardless of how the n lanes vectorize.
template <class S>
void gemm_rowmajor(const S* A, const S* B, S* C, int M, int K, int N, bool accumulate) {
  constexpr int MR = 4;
  constexpr int NR = int(128 / sizeof(S));  // 32 floats / 16 doubles
  if (!accumulate)
    for (size_t i = 0; i < size_t(M) * size_t(N); ++i) C[i] = S(0);

  int m0 = 0;
  for (; m0 + MR <= M; m0 += MR) {
    int n0 = 0;
    for (; n0 + NR <= N; n0 += NR) {
      S acc[MR * NR];
      for (int m = 0; m < MR; ++m)
        for (int n = 0; n < NR; ++n) acc[m * NR + n] = C[size_t(m0 + m) * N + n0 + n];
      const S* a0 = A + size_t(m0) * K;
      for (int k = 0; k < K; ++k) {
        const S* __restrict bk = B + size_t(k) * N + n0;
        for (int m = 0; m < MR; ++m) {
          const S a = a0[size_t(m) * K + k];
          S* __restrict am = acc + m * NR;
#pragma GCC ivdep
          for (int n = 0; n < NR; ++n) am[n] += a * bk[n];
        }
      }
      for (int m = 0; m < MR; ++m)
        for (int n = 0; n < NR; ++n) C[size_t(m0 + m) * N + n0 + n] = acc[m * NR + n];
    }
    // N remainder
    for (; n0 < N; ++n0) {
      for (int m = 0; m < MR; ++m) {
        S acc = C[size_t(m0 + m) * N + n0];
        const S* __restrict a = A + size_t(m0 + m) * K;
        for (int k = 0; k < K; ++k) acc += a[k] * B[size_t(k) * N + n0];
        C[size_t(m0 + m) * N + n0] = acc;
      }
    }
  }
  // M remainder
  for (; m0 < M; ++m0) {
    const S* __restrict a = A + size_t(m0) * K;
    S* __restrict c = C + size_t(m0) * N;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      const S* __restrict bk = B + size_t(k) * N;
#pragma GCC ivdep
      for (int n = 0; n < N; ++n) c[n] += av * bk[n];
    }
  }
}

// C[K x N] (+)= A^T[K x M] * B[M x N]  with A given as [M x K].
template <class S>
void gemm_at_b(const S* A, const S* B, S* C, int M, int K, int N, bool accumulate) {
  if (!accumulate)
    for (size_t i = 0; i < size_t(K) * size_t(N); ++i) C[i] = S(0);
  constexpr int MB = 4;
  int m0 = 0;
  for (; m0 + MB <= M; m0 += MB) {
    for (int k = 0; k < K; ++k) {
      const S a0 = A[size_t(m0 + 0) * K + k];
      const S a1 = A[size_t(m0 + 1) * K + k];
      const S a2 = A[size_t(m0 + 2) * K + k];
      const S a3 = A[size_t(m0 + 3) * K + k];
      S* __restrict ck = C + size_t(k) * N;
      const S* __restrict b0 = B + size_t(m0 + 0) * N;
      const S* __restrict b1 = B + size_t(m0 + 1) * N;
      const S* __restrict b2 = B + size_t(m0 + 2) * N;
      const S* __restrict b3 = B + size_t(m0 + 3) * N;
#pragma GCC ivdep
      for (int n = 0; n < N; ++n) ck[n] += a0 * b0[n] + a1 * b1[n] + a2 * b2[n] + a3 * b3[n];
    }
  }
  for (; m0 < M; ++m0) {
    for (int k = 0; k < K; ++k) {
      const S a = A[size_t(m0) * K + k];
      S* __restrict ck = C + size_t(k) * N;
      const S* __restrict bm = B + size_t(m0) * N;
#pragma GCC ivdep
      for (int n = 0; n < N; ++n) ck[n] += a * bm[n];
    }
  }
}

// C[M x K] (+)= A[M x N] * B^T[N x K]  with B given as [K x N]; row dots with
// fixed vector-lane partials, folded in a fixed order.
template <class S>
void gemm_a_bt(const S* A, const S* B, S* C, int M, int N, int K, bool accumulate) {
  constexpr int L = int(64 / sizeof(S));
  for (int m = 0; m < M; ++m) {
    const S* __restrict am = A + size_t(m) * N;
    for (int k = 0; k < K; ++k) {
      const S* __restrict bk = B + size_t(k) * N;
      S lanes[L] = {};
      int n = 0;
      for (; n + L <= N; n += L) {
#pragma GCC ivdep
        for (int j = 0; j < L; ++j) lanes[j] += am[n + j] * bk[n + j];
      }
      S acc = 0;
      for (int j = 0; j < L; ++j) acc += lanes[j];
      for (; n < N; ++n) acc += am[n] * bk[n];
      S* c = C + size_t(m) * K + k;
      *c = accumulate ? *c + acc : acc;
    }
  }
}

// y[M] (+)= W[M x N] * x[N]; vector-lane partials per row, folded in a fixed
// order, so results are identical from run to run.
template <class S>
void matvec(const S* W, const S* x, S* y, int M, int N, bool accumulate) {
  constexpr int L = int(64 / sizeof(S));
  for (int m = 0; m < M; ++m) {
    const S* __restrict w = W + size_t(m) * N;
    S lanes[L] = {};
    int n = 0;
    for (; n + L <= N; n += L) {
#pragma GCC ivdep
      for (int j = 0; j < L; ++j) lanes[j] += w[n + j] * x[n + j];
    }
    S acc = 0;
    for (int j = 0; j < L; ++j) acc += lanes[j];
    for (; n < N; ++n) acc += w[n] * x[n];
    y[m] = accumulate ? y[m] + acc : acc;
  }
}

// y[N] (+)= W^T[N x M] * x[M] with W given as [M x N].
template <class S>
void matvec_t(const S* W, const S* x, S* y, int M, int N, bool accumulate) {
  if (!accumulate)
    for (int n = 0; n < N; ++n) y[n] = S(0);
  for (int m = 0; m < M; ++m) {
    const S xm = x[m];
    const S* __restrict w = W + size_t(m) * N;
#pragma GCC ivdep
    for (int n = 0; n < N; ++n) y[n] += xm * w[n];
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw std::runtime_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
  std::vector<S> out(a.size());
  const S* pa = a.data();
  const S* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  return detail::make_result<S>(
      a.shape(), std::move(out), {&a, &b}, [](Node<S>& self) {
        for (int p = 0; p < 2; ++p) {
          Node<S>& par = *self.parents[size_t(p)];
          if (!par.requires_grad) continue;
          par.ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
        }
      });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  std::vector<S> out(a.size());
  const S* pa = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * factor;
  return detail::make_result<S>(
      a.shape(), std::move(out), {&a}, [factor](Node<S>& self) {
        Node<S>& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i] * factor;
      });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out(a.size());
  const S* pa = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] > S(0) ? pa[i] : S(0);
  return detail::make_result<S>(
      a.shape(), std::move(out), {&a}, [](Node<S>& self) {
        Node<S>& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          if (self.value[i] > S(0)) par.grad[i] += self.grad[i];
      });
}

template <class S>
Tensor<S> tanh_map(const Tensor<S>& a) {
  std::vector<S> out(a.size());
  const S* pa = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(pa[i]);
  return detail::make_result<S>(
      a.shape(), std::move(out), {&a}, [](Node<S>& self) {
        Node<S>& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
          par.grad[i] += self.grad[i] * (S(1) - self.value[i] * self.value[i]);
      });
}

template <class S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 1 || b.shape().size() != 1)
    throw std::runtime_error("concat expects rank-1 tensors");
  std::vector<S> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  const int na = int(a.size());
  return detail::make_result<S>(
      {int(a.size() + b.size())}, std::move(out), {&a, &b}, [na](Node<S>& self) {
        Node<S>& pa = *self.parents[0];
        Node<S>& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (int i = 0; i < na; ++i) pa.grad[size_t(i)] += self.grad[size_t(i)];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (size_t i = size_t(na); i < self.grad.size(); ++i)
            pb.grad[i - size_t(na)] += self.grad[i];
        }
      });
}

// Slice along the leading dimension: x[R, C...] -> x[i] of shape [C...].
template <class S>
Tensor<S> row(const Tensor<S>& x, int index) {
  if (x.shape().empty()) throw std::runtime_error("row: scalar has no rows");
  const int rows = x.dim(0);
  if (index < 0 || index >= rows)
    throw std::runtime_error("row index " + std::to_string(index) + " out of [0," +
                             std::to_string(rows) + ")");
  Shape rest(x.shape().begin() + 1, x.shape().end());
  const size_t stride = numel(rest);
  std::vector<S> out(x.data() + size_t(index) * stride,
                     x.data() + size_t(index + 1) * stride);
  return detail::make_result<S>(
      std::move(rest), std::move(out), {&x}, [index, stride](Node<S>& self) {
        Node<S>& par = *self.parents[0];
        if (!par.requires_grad) return;
        par.ensure_grad();
        for (size_t i = 0; i < stride; ++i)
          par.grad[size_t(index) * stride + i] += self.grad[i];
      });
}

// Embedding lookup: table[V, d] row `index` (exactly one-hot times table).
template <class S>
Tensor<S> embed_row(const Tensor<S>& table, int index) {
  if (table.shape().size() != 2) throw std::runtime_error("embed_row expects [V,d] table");
  return row(table, index);
}

template <class S>
Tensor<S> add_n(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw std::runtime_error("add_n of empty list");
  Tensor<S> acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

template <class S>
Tensor<S> mean_of(const std::vector<Tensor<S>>& xs) {
  return scale(add_n(xs), S(1) / S(xs.size()));
}

// Scalar mean over every element of one tensor.
template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
  const size_t n = x.size();
  if (n == 0) throw std::runtime_error("mean_all of empty tensor");
  S sum = 0;
  for (size_t i = 0; i < n; ++i) sum += x.data()[i];
  return detail::make_result<S>(
      {1}, {sum / S(n)}, {&x}, [n](Node<S>& out) {
        auto& xn = *out.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const S g = out.grad[0] / S(n);
        for (size_t i = 0; i < xn.grad.size(); ++i) xn.grad[i] += g;
      });
}

}  // namespace sar
