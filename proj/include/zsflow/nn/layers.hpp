#pragma once

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsflow/ndgrad/ops.hpp"
#include "zsflow/ndgrad/rng.hpp"

namespace zsflow::nn {

using nd::DiffArray;
using nd::Parameter;
using nd::Tape;
using nd::Var;

template <typename Real>
using ParamList = std::vector<Parameter<Real>*>;

/// Binds parameters onto a tape, either as trainable leaves or frozen constants.
/// Each parameter is copied onto the tape at most once per context.
template <typename Real>
class Context {
 public:
  explicit Context(Tape<Real>& tape, bool trainable = true) : tape_(tape), trainable_(trainable) {}

  Tape<Real>& tape() { return tape_; }
  bool trainable() const { return trainable_; }

  Var<Real> operator()(Parameter<Real>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var<Real> v = trainable_ ? tape_.param(p.array) : tape_.frozen(p.array);
    bound_.emplace(&p, v);
    return v;
  }

 private:
  Tape<Real>& tape_;
  bool trainable_;
  std::unordered_map<const void*, Var<Real>> bound_;
};

enum class Init { fan_in_uniform, zeros, ones, normal };

template <typename Real>
Parameter<Real> make_param(std::string name, nd::Shape shape, Init init, std::size_t fan_in, nd::RngStreams& rng,
                           double scale = 1.0) {
  Parameter<Real> p{std::move(name), DiffArray<Real>(std::move(shape)), true};
  auto& eng = rng.stream("init");
  switch (init) {
    case Init::zeros: break;
    case Init::ones: std::fill(p.array.data.begin(), p.array.data.end(), Real(1)); break;
    case Init::fan_in_uniform: {
      const double b = scale / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
      std::uniform_real_distribution<double> d(-b, b);
      for (auto& x : p.array.data) x = static_cast<Real>(d(eng));
      break;
    }
    case Init::normal: {
      std::normal_distribution<double> d(0.0, scale);
      for (auto& x : p.array.data) x = static_cast<Real>(d(eng));
      break;
    }
  }
  return p;
}

/// y = x W + b, x: R x in.
template <typename Real>
struct Linear {
  Parameter<Real> weight, bias;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, nd::RngStreams& rng, bool zero_init = false,
         bool with_bias = true)
      : weight(make_param<Real>(name + ".weight", {in, out}, zero_init ? Init::zeros : Init::fan_in_uniform, in, rng)),
        bias(make_param<Real>(name + ".bias", {out}, zero_init ? Init::zeros : Init::fan_in_uniform, in, rng)),
        has_bias(with_bias) {}

  std::size_t in() const { return weight.array.shape[0]; }
  std::size_t out() const { return weight.array.shape[1]; }

  Var<Real> operator()(Context<Real>& ctx, const Var<Real>& x) {
    auto y = nd::matmul(x, ctx(weight));
    return has_bias ? nd::add(y, ctx(bias)) : y;
  }

  void collect(ParamList<Real>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
  }
};

/// Same-padded 1-D convolution over time, x: T x Cin -> T x Cout.
template <typename Real>
struct Conv1d {
  Parameter<Real> weight, bias;
  std::size_t kernel = 1, dilation = 1;

  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t dil,
         nd::RngStreams& rng, bool zero_init = false)
      : weight(make_param<Real>(name + ".weight", {k * cin, cout}, zero_init ? Init::zeros : Init::fan_in_uniform,
                                k * cin, rng)),
        bias(make_param<Real>(name + ".bias", {cout}, zero_init ? Init::zeros : Init::fan_in_uniform, k * cin, rng)),
        kernel(k),
        dilation(dil) {}

  Var<Real> operator()(Context<Real>& ctx, const Var<Real>& x) {
    auto b = ctx(bias);
    return nd::conv1d(x, ctx(weight), &b, kernel, dilation);
  }

  void collect(ParamList<Real>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Non-causal WaveNet residual stack with gated activations and optional global
/// conditioning: a projection of the conditioning vector is added to every
/// block's pre-activation.
template <typename Real>
struct WaveNet {
  std::size_t hidden = 0;
  std::size_t cond_dim = 0;
  std::vector<Conv1d<Real>> in_layers;
  std::vector<Conv1d<Real>> res_skip;
  Linear<Real> cond;

  WaveNet() = default;
  WaveNet(const std::string& name, std::size_t hidden_ch, std::size_t kernel, const std::vector<std::size_t>& dilations,
          std::size_t cond_channels, nd::RngStreams& rng)
      : hidden(hidden_ch), cond_dim(cond_channels) {
    const std::size_t n = dilations.size();
    for (std::size_t i = 0; i < n; ++i) {
      in_layers.emplace_back(name + ".in." + std::to_string(i), hidden, 2 * hidden, kernel, dilations[i], rng);
      const std::size_t out = (i + 1 < n) ? 2 * hidden : hidden;
      res_skip.emplace_back(name + ".res_skip." + std::to_string(i), hidden, out, 1, 1, rng);
    }
    if (cond_dim > 0) cond = Linear<Real>(name + ".cond", cond_dim, 2 * hidden * n, rng);
  }

  std::size_t blocks() const { return in_layers.size(); }

  /// x: T x hidden, g: 1 x cond_dim (required iff cond_dim > 0). Returns the skip sum.
  Var<Real> operator()(Context<Real>& ctx, Var<Real> x, const Var<Real>* g) {
    if (x.cols() != hidden) throw nd::ShapeError("WaveNet: input channels " + std::to_string(x.cols()) + " != " +
                                                 std::to_string(hidden));
    Var<Real> gproj;
    if (cond_dim > 0) {
      if (!g) throw nd::ShapeError("WaveNet: conditioning vector required");
      if (g->size() != cond_dim) throw nd::ShapeError("WaveNet: conditioning size " + std::to_string(g->size()) +
                                                      " != " + std::to_string(cond_dim));
      gproj = cond(ctx, nd::reshape(*g, {1, cond_dim}));
    }
    Var<Real> skip;
    const std::size_t n = blocks();
    for (std::size_t i = 0; i < n; ++i) {
      auto pre = in_layers[i](ctx, x);
      if (cond_dim > 0) pre = nd::add(pre, nd::slice_cols(gproj, i * 2 * hidden, 2 * hidden));
      auto acts = nd::gated_unit(pre);
      auto rs = res_skip[i](ctx, acts);
      if (i + 1 < n) {
        x = nd::add(x, nd::slice_cols(rs, 0, hidden));
        auto s = nd::slice_cols(rs, hidden, hidden);
        skip = skip.valid() ? nd::add(skip, s) : s;
      } else {
        skip = skip.valid() ? nd::add(skip, rs) : rs;
      }
    }
    return skip;
  }

  void collect(ParamList<Real>& out) {
    for (auto& l : in_layers) l.collect(out);
    for (auto& l : res_skip) l.collect(out);
    if (cond_dim > 0) cond.collect(out);
  }
};

}  // namespace zsflow::nn
