#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "zsflow/ndgrad/array.hpp"

namespace zsflow::nd {

struct AdamWHyper {
  double lr0 = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double gamma = 0.999875;  // per-step exponential decay
  double eps = 1e-9;
};

template <typename Real>
struct OptimState {
  AdamWHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> m, v;

  /// Learning rate used by the update that advances `step` to step + 1.
  double lr() const { return hyper.lr0 * std::pow(hyper.gamma, static_cast<double>(step)); }
};

/// Decoupled-weight-decay Adam update over all parameters, reading each
/// parameter's accumulated grad (missing grad counts as zero).
template <typename Real>
void adamw_step(std::span<Parameter<Real>* const> params, OptimState<Real>& state) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->array.size(), Real(0));
      state.v.emplace_back(p->array.size(), Real(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state has a different parameter count");
  const auto& h = state.hyper;
  const double lr = state.lr();
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->array;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) throw ShapeError("adamw_step: moment buffer does not match parameter '" +
                                               params[i]->name + "'");
    if (!p.grad.empty() && p.grad.size() != p.size()) throw ShapeError("adamw_step: grad shape mismatch for '" +
                                                                       params[i]->name + "'");
    const double wd = params[i]->weight_decay ? h.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad.empty() ? 0.0 : static_cast<double>(p.grad[k]);
      double x = static_cast<double>(p.data[k]);
      x -= lr * wd * x;
      const double mk = h.beta1 * static_cast<double>(m[k]) + (1.0 - h.beta1) * g;
      const double vk = h.beta2 * static_cast<double>(v[k]) + (1.0 - h.beta2) * g * g;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      x -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + h.eps);
      p.data[k] = static_cast<Real>(x);
    }
  }
  ++state.step;
}

template <typename Real>
void zero_grads(std::span<Parameter<Real>* const> params) {
  for (auto* p : params) p->array.zero_grad();
}

/// Scales all gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm) {
  double sq = 0;
  for (auto* p : params)
    for (Real g : p->array.grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / (norm + 1e-12));
    for (auto* p : params)
      for (Real& g : p->array.grad) g *= s;
  }
  return norm;
}

}  // namespace zsflow::nd
