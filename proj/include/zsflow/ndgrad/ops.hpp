#pragma once

// Differentiable primitives over Tape/Var. Sequences are laid out time-major:
// a T x C array holds one C-channel frame per row.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "zsflow/ndgrad/kernels.hpp"
#include "zsflow/ndgrad/tape.hpp"

namespace zsflow::nd {

namespace detail {

enum class Bcast { same, scalar, row };

template <typename Real>
Bcast broadcast_kind(const Var<Real>& a, const Var<Real>& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::same;
  if (b.size() == 1) return Bcast::scalar;
  if (a.shape().size() == 2 && b.size() == a.cols() && (b.shape().size() == 1 || b.rows() == 1)) return Bcast::row;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
}

inline std::size_t bindex(Bcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Bcast::same: return i;
    case Bcast::scalar: return 0;
    default: return i % cols;
  }
}

// Elementwise binary op with partials fa = df/da, fb = df/db evaluated at (a, b).
template <typename Real, typename F, typename FA, typename FB>
Var<Real> binary(const Var<Real>& a, const Var<Real>& b, const char* op, F f, FA fa, FB fb) {
  auto kind = broadcast_kind(a, b, op);
  const std::size_t n = a.size(), cols = a.cols();
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[bindex(kind, i, cols)]);
  auto ai = a.id(), bi = b.id();
  return a.tape().result(a.shape(), std::move(out), op, {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& A = t.node(ai).value;
    const auto& B = t.node(bi).value;
    if (Real* ga = t.grad_target(ai))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * fa(A[i], B[bindex(kind, i, cols)]);
    if (Real* gb = t.grad_target(bi))
      for (std::size_t i = 0; i < n; ++i) {
        auto j = bindex(kind, i, cols);
        gb[j] += g[i] * fb(A[i], B[j]);
      }
  });
}

// Elementwise unary op; df(x, y) is the derivative given input x and output y.
template <typename Real, typename F, typename DF>
Var<Real> unary(const Var<Real>& x, const char* op, F f, DF df) {
  const auto& xv = x.value();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto xi = x.id();
  return x.tape().result(x.shape(), std::move(out), op, {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& X = t.node(xi).value;
    const auto& Y = t.node(self).value;
    Real* gx = t.grad_target(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(X[i], Y[i]);
  });
}

template <typename Real>
Real sigmoid_scalar(Real x) {
  return x >= 0 ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  return detail::binary(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; }, [](Real x, Real) { return x; });
}

template <typename Real>
Var<Real> operator+(const Var<Real>& a, const Var<Real>& b) { return add(a, b); }
template <typename Real>
Var<Real> operator-(const Var<Real>& a, const Var<Real>& b) { return sub(a, b); }
template <typename Real>
Var<Real> operator*(const Var<Real>& a, const Var<Real>& b) { return mul(a, b); }

template <typename Real>
Var<Real> scale(const Var<Real>& x, Real c) {
  return detail::unary(x, "scale", [c](Real v) { return c * v; }, [c](Real, Real) { return c; });
}

template <typename Real>
Var<Real> add_scalar(const Var<Real>& x, Real c) {
  return detail::unary(x, "add_scalar", [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Var<Real> tanh(const Var<Real>& x) {
  return detail::unary(x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real>& x) {
  return detail::unary(x, "sigmoid", [](Real v) { return detail::sigmoid_scalar(v); },
                       [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
Var<Real> softplus(const Var<Real>& x) {
  return detail::unary(
      x, "softplus", [](Real v) { return v > Real(20) ? v : std::log1p(std::exp(v)); },
      [](Real v, Real) { return detail::sigmoid_scalar(v); });
}

template <typename Real>
Var<Real> exp(const Var<Real>& x) {
  return detail::unary(x, "exp", [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
Var<Real> log(const Var<Real>& x) {
  return detail::unary(x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
Var<Real> sqrt(const Var<Real>& x) {
  return detail::unary(x, "sqrt", [](Real v) { return std::sqrt(v); },
                       [](Real, Real y) { return Real(0.5) / y; });
}

template <typename Real>
Var<Real> square(const Var<Real>& x) {
  return detail::unary(x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

template <typename Real>
Var<Real> abs(const Var<Real>& x) {
  return detail::unary(x, "abs", [](Real v) { return std::abs(v); },
                       [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

template <typename Real>
Var<Real> relu(const Var<Real>& x) {
  return detail::unary(x, "relu", [](Real v) { return v > 0 ? v : Real(0); },
                       [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

template <typename Real>
Var<Real> leaky_relu(const Var<Real>& x, Real slope = Real(0.1)) {
  return detail::unary(x, "leaky_relu", [slope](Real v) { return v > 0 ? v : slope * v; },
                       [slope](Real v, Real) { return v > 0 ? Real(1) : slope; });
}

/// Clamp to [lo, hi]; gradient is zero where the clamp is active.
template <typename Real>
Var<Real> clamp(const Var<Real>& x, Real lo, Real hi) {
  return detail::unary(x, "clamp", [lo, hi](Real v) { return std::clamp(v, lo, hi); },
                       [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------- reductions

template <typename Real>
Var<Real> sum(const Var<Real>& x) {
  const auto& v = x.value();
  Real s = std::accumulate(v.begin(), v.end(), Real(0));
  auto xi = x.id();
  return x.tape().result({1}, {s}, "sum", {x}, [xi](Tape<Real>& t, std::size_t self) {
    Real g = t.upstream(self)[0];
    Real* gx = t.grad_target(xi);
    for (std::size_t i = 0; i < t.node(xi).value.size(); ++i) gx[i] += g;
  });
}

template <typename Real>
Var<Real> mean(const Var<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.size()));
}

/// T x C -> 1 x C average over rows.
template <typename Real>
Var<Real> mean_rows(const Var<Real>& x) {
  const std::size_t R = x.rows(), C = x.cols();
  const auto& v = x.value();
  std::vector<Real> out(C, Real(0));
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c] += v[r * C + c];
  for (auto& o : out) o /= static_cast<Real>(R);
  auto xi = x.id();
  return x.tape().result({1, C}, std::move(out), "mean_rows", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c] / static_cast<Real>(R);
  });
}

// ---------------------------------------------------------------- linear algebra

/// (m x k) . (k x n)
template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<Real> out(m * n);
  kernels::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false, false, false);
  auto ai = a.id(), bi = b.id();
  return a.tape().result({m, n}, std::move(out), "matmul", {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const Real* g = t.upstream(self).data();
    if (Real* ga = t.grad_target(ai)) kernels::gemm(g, t.node(bi).value.data(), ga, m, n, k, false, true, true);
    if (Real* gb = t.grad_target(bi)) kernels::gemm(t.node(ai).value.data(), g, gb, k, m, n, true, false, true);
  });
}

/// a . B where B is a shared constant (e.g. a DFT basis) kept off the tape.
template <typename Real>
Var<Real> matmul_const(const Var<Real>& a, std::shared_ptr<const DiffArray<Real>> b) {
  if (a.shape().size() != 2 || b->shape.size() != 2 || a.cols() != b->shape[0])
    throw ShapeError("matmul_const: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b->shape));
  const std::size_t m = a.rows(), k = a.cols(), n = b->shape[1];
  std::vector<Real> out(m * n);
  kernels::gemm(a.value().data(), b->data.data(), out.data(), m, k, n, false, false, false);
  auto ai = a.id();
  return a.tape().result({m, n}, std::move(out), "matmul_const", {a}, [=](Tape<Real>& t, std::size_t self) {
    if (Real* ga = t.grad_target(ai)) kernels::gemm(t.upstream(self).data(), b->data.data(), ga, m, n, k, false, true, true);
  });
}

template <typename Real>
Var<Real> transpose(const Var<Real>& x) {
  const std::size_t R = x.rows(), C = x.cols();
  const auto& v = x.value();
  std::vector<Real> out(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = v[r * C + c];
  auto xi = x.id();
  return x.tape().result({C, R}, std::move(out), "transpose", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c * R + r];
  });
}

/// Same data, new shape.
template <typename Real>
Var<Real> reshape(const Var<Real>& x, Shape shape) {
  if (numel(shape) != x.size()) throw ShapeError("reshape: element count mismatch " + to_string(shape));
  auto xi = x.id();
  return x.tape().result(std::move(shape), x.value(), "reshape", {x}, [xi](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// "Same"-padded dilated 1-D convolution over time.
/// x: T x Cin, weight: (K*Cin) x Cout with row index k*Cin + c, bias: Cout (optional).
template <typename Real>
Var<Real> conv1d(const Var<Real>& x, const Var<Real>& weight, const Var<Real>* bias, std::size_t kernel,
                 std::size_t dilation = 1) {
  const std::size_t T = x.rows(), Cin = x.cols();
  if (kernel % 2 == 0) throw ShapeError("conv1d: kernel size must be odd");
  if (weight.rows() != kernel * Cin)
    throw ShapeError("conv1d: weight rows " + std::to_string(weight.rows()) + " != kernel*Cin " +
                     std::to_string(kernel * Cin));
  const std::size_t Cout = weight.cols();
  if (bias && bias->size() != Cout) throw ShapeError("conv1d: bias size mismatch");
  const long half = static_cast<long>(kernel / 2);
  const std::size_t KC = kernel * Cin;

  auto cols = std::make_shared<std::vector<Real>>(T * KC, Real(0));
  const auto& xv = x.value();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < kernel; ++k) {
      long src = static_cast<long>(t) + (static_cast<long>(k) - half) * static_cast<long>(dilation);
      if (src < 0 || src >= static_cast<long>(T)) continue;
      std::copy_n(&xv[static_cast<std::size_t>(src) * Cin], Cin, &(*cols)[t * KC + k * Cin]);
    }
  std::vector<Real> out(T * Cout, Real(0));
  if (bias) {
    const auto& bv = bias->value();
    for (std::size_t t = 0; t < T; ++t) std::copy_n(bv.data(), Cout, &out[t * Cout]);
  }
  kernels::gemm(cols->data(), weight.value().data(), out.data(), T, KC, Cout, false, false, bias != nullptr);

  auto xi = x.id(), wi = weight.id();
  const bool has_bias = bias != nullptr;
  const std::size_t bi = has_bias ? bias->id() : 0;
  std::vector<Var<Real>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape().result(
      {T, Cout}, std::move(out), "conv1d", std::span<const Var<Real>>(inputs), [=](Tape<Real>& t, std::size_t self) {
        const Real* g = t.upstream(self).data();
        if (Real* gw = t.grad_target(wi)) kernels::gemm(cols->data(), g, gw, KC, T, Cout, true, false, true);
        if (has_bias)
          if (Real* gb = t.grad_target(bi))
            for (std::size_t r = 0; r < T; ++r)
              for (std::size_t c = 0; c < Cout; ++c) gb[c] += g[r * Cout + c];
        if (Real* gx = t.grad_target(xi)) {
          std::vector<Real> gcols(T * KC, Real(0));
          kernels::gemm(g, t.node(wi).value.data(), gcols.data(), T, Cout, KC, false, true, false);
          for (std::size_t tt = 0; tt < T; ++tt)
            for (std::size_t k = 0; k < kernel; ++k) {
              long src = static_cast<long>(tt) + (static_cast<long>(k) - half) * static_cast<long>(dilation);
              if (src < 0 || src >= static_cast<long>(T)) continue;
              Real* dst = gx + static_cast<std::size_t>(src) * Cin;
              const Real* from = &gcols[tt * KC + k * Cin];
              for (std::size_t c = 0; c < Cin; ++c) dst[c] += from[c];
            }
        }
      });
}

// ---------------------------------------------------------------- gating / normalization

/// WaveNet gate: x is T x 2H; returns tanh(x[:, :H]) * sigmoid(x[:, H:]).
template <typename Real>
Var<Real> gated_unit(const Var<Real>& x) {
  const std::size_t T = x.rows(), C2 = x.cols();
  if (C2 % 2) throw ShapeError("gated_unit: channel count must be even");
  const std::size_t H = C2 / 2;
  const auto& v = x.value();
  std::vector<Real> th(T * H), sg(T * H), out(T * H);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < H; ++h) {
      th[t * H + h] = std::tanh(v[t * C2 + h]);
      sg[t * H + h] = detail::sigmoid_scalar(v[t * C2 + H + h]);
      out[t * H + h] = th[t * H + h] * sg[t * H + h];
    }
  auto xi = x.id();
  return x.tape().result({T, H}, std::move(out), "gated_unit", {x},
                         [=, th = std::move(th), sg = std::move(sg)](Tape<Real>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           Real* gx = t.grad_target(xi);
                           for (std::size_t r = 0; r < T; ++r)
                             for (std::size_t h = 0; h < H; ++h) {
                               const std::size_t i = r * H + h;
                               gx[r * C2 + h] += g[i] * sg[i] * (Real(1) - th[i] * th[i]);
                               gx[r * C2 + H + h] += g[i] * th[i] * sg[i] * (Real(1) - sg[i]);
                             }
                         });
}

/// Per-row layer normalization with gain and bias (each of size C).
template <typename Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps = Real(1e-5)) {
  const std::size_t R = x.rows(), C = x.cols();
  if (gamma.size() != C || beta.size() != C) throw ShapeError("layer_norm: gamma/beta size mismatch");
  const auto& v = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  std::vector<Real> xhat(R * C), inv_std(R), out(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    Real mu = 0, var = 0;
    for (std::size_t c = 0; c < C; ++c) mu += v[r * C + c];
    mu /= static_cast<Real>(C);
    for (std::size_t c = 0; c < C; ++c) var += (v[r * C + c] - mu) * (v[r * C + c] - mu);
    var /= static_cast<Real>(C);
    inv_std[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < C; ++c) {
      xhat[r * C + c] = (v[r * C + c] - mu) * inv_std[r];
      out[r * C + c] = xhat[r * C + c] * gv[c] + bv[c];
    }
  }
  auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  return x.tape().result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Real>& t, std::size_t self) {
        const auto& g = t.upstream(self);
        const auto& G = t.node(gi).value;
        if (Real* gg = t.grad_target(gi))
          for (std::size_t i = 0; i < R * C; ++i) gg[i % C] += g[i] * xhat[i];
        if (Real* gb = t.grad_target(bi))
          for (std::size_t i = 0; i < R * C; ++i) gb[i % C] += g[i];
        if (Real* gx = t.grad_target(xi))
          for (std::size_t r = 0; r < R; ++r) {
            Real s1 = 0, s2 = 0;
            for (std::size_t c = 0; c < C; ++c) {
              Real dxh = g[r * C + c] * G[c];
              s1 += dxh;
              s2 += dxh * xhat[r * C + c];
            }
            for (std::size_t c = 0; c < C; ++c) {
              Real dxh = g[r * C + c] * G[c];
              gx[r * C + c] += inv_std[r] / static_cast<Real>(C) *
                               (static_cast<Real>(C) * dxh - s1 - xhat[r * C + c] * s2);
            }
          }
      });
}

/// Row-wise softmax.
template <typename Real>
Var<Real> softmax(const Var<Real>& x) {
  const std::size_t R = x.rows(), C = x.cols();
  const auto& v = x.value();
  std::vector<Real> out(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    Real mx = *std::max_element(&v[r * C], &v[r * C] + C);
    Real s = 0;
    for (std::size_t c = 0; c < C; ++c) s += (out[r * C + c] = std::exp(v[r * C + c] - mx));
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] /= s;
  }
  auto xi = x.id();
  return x.tape().result(x.shape(), std::move(out), "softmax", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& y = t.node(self).value;
    Real* gx = t.grad_target(xi);
    for (std::size_t r = 0; r < R; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += y[r * C + c] * (g[r * C + c] - dot);
    }
  });
}

/// Row-wise log-softmax.
template <typename Real>
Var<Real> log_softmax(const Var<Real>& x) {
  const std::size_t R = x.rows(), C = x.cols();
  const auto& v = x.value();
  std::vector<Real> out(R * C);
  for (std::size_t r = 0; r < R; ++r) {
    Real mx = *std::max_element(&v[r * C], &v[r * C] + C);
    Real s = 0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(v[r * C + c] - mx);
    Real lse = mx + std::log(s);
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] = v[r * C + c] - lse;
  }
  auto xi = x.id();
  return x.tape().result(x.shape(), std::move(out), "log_softmax", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    const auto& y = t.node(self).value;
    Real* gx = t.grad_target(xi);
    for (std::size_t r = 0; r < R; ++r) {
      Real gs = 0;
      for (std::size_t c = 0; c < C; ++c) gs += g[r * C + c];
      for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[r * C + c] - std::exp(y[r * C + c]) * gs;
    }
  });
}

/// Cosine of the angle between two equally sized arrays (flattened). Zero vectors are an error.
template <typename Real>
Var<Real> cosine_similarity(const Var<Real>& a, const Var<Real>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: size mismatch");
  const auto& av = a.value();
  const auto& bv = b.value();
  Real ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (aa == Real(0) || bb == Real(0)) throw std::invalid_argument("cosine_similarity: zero vector");
  const Real na = std::sqrt(aa), nb = std::sqrt(bb);
  // sqrt(aa * bb) keeps cos(v, v) == 1 exactly.
  const Real cs = std::clamp(ab / std::sqrt(aa * bb), Real(-1), Real(1));
  auto ai = a.id(), bi = b.id();
  return a.tape().result({1}, {cs}, "cosine_similarity", {a, b}, [=](Tape<Real>& t, std::size_t self) {
    const Real g = t.upstream(self)[0];
    const auto& A = t.node(ai).value;
    const auto& B = t.node(bi).value;
    if (Real* ga = t.grad_target(ai))
      for (std::size_t i = 0; i < A.size(); ++i) ga[i] += g * (B[i] / (na * nb) - cs * A[i] / aa);
    if (Real* gb = t.grad_target(bi))
      for (std::size_t i = 0; i < B.size(); ++i) gb[i] += g * (A[i] / (na * nb) - cs * B[i] / bb);
  });
}

// ---------------------------------------------------------------- indexing

template <typename Real>
Var<Real> slice_rows(const Var<Real>& x, std::size_t start, std::size_t count) {
  const std::size_t C = x.cols();
  if (count == 0 || start + count > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  std::vector<Real> out(x.value().begin() + static_cast<long>(start * C),
                        x.value().begin() + static_cast<long>((start + count) * C));
  auto xi = x.id();
  Shape s = x.shape();
  if (s.empty()) s = {1};
  s[0] = count;
  return x.tape().result(std::move(s), std::move(out), "slice_rows", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi) + start * C;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename Real>
Var<Real> slice_cols(const Var<Real>& x, std::size_t start, std::size_t count) {
  const std::size_t R = x.rows(), C = x.cols();
  if (count == 0 || start + count > C) throw ShapeError("slice_cols: range out of bounds");
  std::vector<Real> out(R * count);
  const auto& v = x.value();
  for (std::size_t r = 0; r < R; ++r) std::copy_n(&v[r * C + start], count, &out[r * count]);
  auto xi = x.id();
  return x.tape().result({R, count}, std::move(out), "slice_cols", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * C + start + c] += g[r * count + c];
  });
}

template <typename Real>
Var<Real> concat_cols(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t R = parts[0].rows();
  std::vector<std::size_t> offs;
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) throw ShapeError("concat_cols: row count mismatch");
    offs.push_back(C);
    C += p.cols();
  }
  std::vector<Real> out(R * C);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t pc = parts[i].cols();
    const auto& v = parts[i].value();
    for (std::size_t r = 0; r < R; ++r) std::copy_n(&v[r * pc], pc, &out[r * C + offs[i]]);
  }
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts[0].tape().result({R, C}, std::move(out), "concat_cols", std::span<const Var<Real>>(parts),
                                [=](Tape<Real>& t, std::size_t self) {
                                  const auto& g = t.upstream(self);
                                  for (std::size_t i = 0; i < ids.size(); ++i)
                                    if (Real* gp = t.grad_target(ids[i]))
                                      for (std::size_t r = 0; r < R; ++r)
                                        for (std::size_t c = 0; c < widths[i]; ++c)
                                          gp[r * widths[i] + c] += g[r * C + offs[i] + c];
                                });
}

template <typename Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t C = parts[0].cols();
  std::size_t R = 0;
  std::vector<std::size_t> ids, offs;
  for (const auto& p : parts) {
    if (p.cols() != C) throw ShapeError("concat_rows: column count mismatch");
    ids.push_back(p.id());
    offs.push_back(R * C);
    R += p.rows();
  }
  std::vector<Real> out;
  out.reserve(R * C);
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  return parts[0].tape().result({R, C}, std::move(out), "concat_rows", std::span<const Var<Real>>(parts),
                                [=](Tape<Real>& t, std::size_t self) {
                                  const auto& g = t.upstream(self);
                                  for (std::size_t i = 0; i < ids.size(); ++i)
                                    if (Real* gp = t.grad_target(ids[i])) {
                                      const std::size_t n = t.node(ids[i]).value.size();
                                      for (std::size_t k = 0; k < n; ++k) gp[k] += g[offs[i] + k];
                                    }
                                });
}

/// out[i, :] = x[index[i], :]; backward scatter-adds. Used for embedding lookup and
/// repeating token statistics over frames.
template <typename Real>
Var<Real> gather_rows(const Var<Real>& x, std::vector<std::size_t> index) {
  const std::size_t R = x.rows(), C = x.cols();
  for (auto i : index)
    if (i >= R) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  std::vector<Real> out(index.size() * C);
  const auto& v = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) std::copy_n(&v[index[i] * C], C, &out[i * C]);
  auto xi = x.id();
  const std::size_t n = index.size();
  return x.tape().result({n, C}, std::move(out), "gather_rows", {x},
                         [=, index = std::move(index)](Tape<Real>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           Real* gx = t.grad_target(xi);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t c = 0; c < C; ++c) gx[index[i] * C + c] += g[i * C + c];
                         });
}

/// out[:, j] = x[:, perm[j]]
template <typename Real>
Var<Real> permute_cols(const Var<Real>& x, std::vector<std::size_t> perm) {
  const std::size_t R = x.rows(), C = x.cols();
  if (perm.size() != C) throw ShapeError("permute_cols: permutation size mismatch");
  std::vector<Real> out(R * C);
  const auto& v = x.value();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < C; ++j) out[r * C + j] = v[r * C + perm[j]];
  auto xi = x.id();
  return x.tape().result({R, C}, std::move(out), "permute_cols", {x},
                         [=, perm = std::move(perm)](Tape<Real>& t, std::size_t self) {
                           const auto& g = t.upstream(self);
                           Real* gx = t.grad_target(xi);
                           for (std::size_t r = 0; r < R; ++r)
                             for (std::size_t j = 0; j < C; ++j) gx[r * C + perm[j]] += g[r * C + j];
                         });
}

/// Split a 1-D signal of N samples into overlapping frames (F x frame_len), with
/// `pad_left` zeros before the signal and zero fill past its end.
template <typename Real>
Var<Real> frames(const Var<Real>& x, std::size_t frame_len, std::size_t hop, std::size_t pad_left,
                 std::size_t n_frames) {
  const std::size_t N = x.size();
  if (n_frames == 0) throw ShapeError("frames: zero frames");
  const auto& v = x.value();
  std::vector<Real> out(n_frames * frame_len, Real(0));
  for (std::size_t f = 0; f < n_frames; ++f)
    for (std::size_t k = 0; k < frame_len; ++k) {
      long src = static_cast<long>(f * hop + k) - static_cast<long>(pad_left);
      if (src >= 0 && src < static_cast<long>(N)) out[f * frame_len + k] = v[static_cast<std::size_t>(src)];
    }
  auto xi = x.id();
  return x.tape().result({n_frames, frame_len}, std::move(out), "frames", {x}, [=](Tape<Real>& t, std::size_t self) {
    const auto& g = t.upstream(self);
    Real* gx = t.grad_target(xi);
    for (std::size_t f = 0; f < n_frames; ++f)
      for (std::size_t k = 0; k < frame_len; ++k) {
        long src = static_cast<long>(f * hop + k) - static_cast<long>(pad_left);
        if (src >= 0 && src < static_cast<long>(N)) gx[static_cast<std::size_t>(src)] += g[f * frame_len + k];
      }
  });
}

}  // namespace zsflow::nd
