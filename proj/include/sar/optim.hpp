#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sar/rng.hpp"
#include "sar/tensor.hpp"

namespace sar {

// Named parameter registry. std::map keeps iteration (and thus serialization
// and update order) deterministic.
template <class S>
class ParamStore {
 public:
  Tensor<S>& add(const std::string& name, Tensor<S> t) {
    auto [it, fresh] = params_.emplace(name, std::move(t));
    if (!fresh) throw std::runtime_error("parameter already registered: " + name);
    it->second.node()->requires_grad = true;
    return it->second;
  }

  Tensor<S>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  const Tensor<S>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  size_t size() const { return params_.size(); }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& [k, v] : params_) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : params_) v.clear_grad();
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor<S>> params_;
};

template <class S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = S(rng.uniform(lo, hi));
}

// Bound for the default initializer: U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
inline double fan_in_bound(size_t fan_in) { return std::sqrt(1.0 / double(fan_in)); }

template <class S>
S global_grad_norm(const ParamStore<S>& store) {
  double acc = 0;
  for (const auto& [k, v] : store)
    if (v.has_grad())
      for (S g : v.grad()) acc += double(g) * double(g);
  return S(std::sqrt(acc));
}

// Scales every gradient by max_norm/norm when the global norm exceeds
// max_norm. Returns the pre-clip norm.
template <class S>
S clip_grad_norm(ParamStore<S>& store, S max_norm) {
  const S norm = global_grad_norm(store);
  if (norm > max_norm && norm > S(0)) {
    const S f = max_norm / norm;
    for (auto& [k, v] : store)
      if (v.has_grad())
        for (S& g : v.grad()) g *= f;
  }
  return norm;
}

template <class S>
struct AdamState {
  std::map<std::string, std::vector<S>> m;
  std::map<std::string, std::vector<S>> v;
  uint64_t step = 0;
};

// One update over every parameter that received a gradient this step.
// Moments appear the first time a parameter participates; bias correction
// uses the shared step counter.
template <class S>
void adam_step(ParamStore<S>& store, AdamState<S>& state, S lr, S beta1 = S(0.9),
               S beta2 = S(0.999), S eps = S(1e-8)) {
  state.step += 1;
  const S bc1 = S(1) - S(std::pow(double(beta1), double(state.step)));
  const S bc2 = S(1) - S(std::pow(double(beta2), double(state.step)));
  for (auto& [name, p] : store) {
    if (!p.has_grad()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.size()) m.assign(p.size(), S(0));
    if (v.size() != p.size()) v.assign(p.size(), S(0));
    S* theta = p.data();
    const S* g = p.grad().data();
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
      v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
      const S mhat = m[i] / bc1;
      const S vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct GradCheckReport {
  double max_rel_err = 0;
  size_t checked = 0;
  std::string worst_param;
  size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
};

// Central-difference verification of reverse-mode gradients. loss_fn must
// build a fresh scalar graph from the current parameter values. sample_cap
// limits how many entries per tensor are probed (0 = all), drawn without
// replacement from a seeded stream so runs are repeatable. corrupt_factor
// scales the first sizeable analytic gradient, a hook for proving the check
// can fail.
template <class F>
GradCheckReport grad_check(ParamStore<double>& params, F&& loss_fn, double step = 1e-4,
                           size_t sample_cap = 0, uint64_t seed = 7,
                           double corrupt_factor = 1.0) {
  params.zero_grad();
  {
    Tensor<double> loss = loss_fn();
    backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : params)
    analytic[name] = p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0);

  if (corrupt_factor != 1.0) {
    for (auto& [name, g] : analytic) {
      bool done = false;
      for (double& a : g) {
        if (std::abs(a) > 1e-6) {
          a *= corrupt_factor;
          done = true;
          break;
        }
      }
      if (done) break;
    }
  }

  Rng rng(seed);
  GradCheckReport rep;
  for (auto& [name, p] : params) {
    const size_t n = p.size();
    std::vector<size_t> idx;
    if (sample_cap == 0 || n <= sample_cap) {
      idx.resize(n);
      for (size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      std::vector<size_t> all(n);
      for (size_t i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all.data(), all.size());
      idx.assign(all.begin(), all.begin() + ptrdiff_t(sample_cap));
    }
    for (size_t i : idx) {
      const double saved = p.data()[i];
      p.data()[i] = saved + step;
      const double lp = loss_fn().item();
      p.data()[i] = saved - step;
      const double lm = loss_fn().item();
      p.data()[i] = saved;
      const double num = (lp - lm) / (2 * step);
      const double ana = analytic[name][i];
      // The floor keeps near-zero entries judged on absolute error at the
      // central-difference noise scale rather than on a 0/0 ratio.
      const double rel = std::abs(ana - num) / std::max(1e-6, std::abs(ana) + std::abs(num));
      rep.checked += 1;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace sar
