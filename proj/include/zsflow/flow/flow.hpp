#pragma once

// Invertible decoder: coupling layers whose conditioners are speaker-
// conditioned WaveNet stacks, each followed by a channel flip.

#include <memory>
#include <string>
#include <vector>

#include "zsflow/nn/layers.hpp"

namespace zsflow::flow {

using nd::Var;
using nn::Context;

enum class Coupling { additive, affine };

inline const char* to_string(Coupling c) { return c == Coupling::affine ? "affine" : "additive"; }
inline Coupling coupling_from_string(const std::string& s) {
  if (s == "affine") return Coupling::affine;
  if (s == "additive") return Coupling::additive;
  throw std::invalid_argument("unknown coupling '" + s + "'");
}

struct FlowConfig {
  std::size_t d_z = 16;
  std::size_t hidden = 32;
  std::size_t n_layers = 4;
  std::vector<std::size_t> dilations{1, 2, 4, 8};
  std::size_t kernel = 3;
  std::size_t cond_dim = 32;
  Coupling coupling = Coupling::additive;
};

template <typename Real>
struct FlowResult {
  Var<Real> z;                      // output of the pass
  Var<Real> log_det;                // scalar, sum of frame_log_det
  Var<Real> frame_log_det;          // T x 1
  std::vector<Var<Real>> layer_log_dets;
};

template <typename Real>
struct CouplingLayer {
  std::size_t half = 0;
  Coupling coupling = Coupling::additive;
  nn::Linear<Real> pre;
  nn::WaveNet<Real> net;
  nn::Linear<Real> post;  // zero-initialized: identity at init

  CouplingLayer() = default;
  CouplingLayer(const std::string& name, const FlowConfig& c, nd::RngStreams& rng)
      : half(c.d_z / 2),
        coupling(c.coupling),
        pre(name + ".pre", c.d_z / 2, c.hidden, rng),
        net(name + ".wn", c.hidden, c.kernel, c.dilations, c.cond_dim, rng),
        post(name + ".post", c.hidden, (c.coupling == Coupling::affine ? 2 : 1) * (c.d_z / 2), rng, true) {}

  /// Returns (shift, log_scale or invalid) computed from the untouched half.
  std::pair<Var<Real>, Var<Real>> conditioner(Context<Real>& ctx, const Var<Real>& x0, const Var<Real>* g) {
    auto h = net(ctx, pre(ctx, x0), g);
    auto stats = post(ctx, h);
    if (coupling == Coupling::additive) return {stats, Var<Real>()};
    return {nd::slice_cols(stats, 0, half), nd::slice_cols(stats, half, half)};
  }

  FlowResult<Real> forward(Context<Real>& ctx, const Var<Real>& x, const Var<Real>* g) {
    auto x0 = nd::slice_cols(x, 0, half), x1 = nd::slice_cols(x, half, half);
    auto [m, logs] = conditioner(ctx, x0, g);
    FlowResult<Real> r;
    const std::size_t T = x.rows();
    if (coupling == Coupling::additive) {
      x1 = nd::add(x1, m);
      r.frame_log_det = ctx.tape().constant({T, 1}, std::vector<Real>(T, Real(0)));
      r.log_det = ctx.tape().scalar(Real(0));
    } else {
      x1 = nd::add(nd::mul(x1, nd::exp(logs)), m);
      auto ones = std::make_shared<const nd::DiffArray<Real>>(nd::Shape{half, 1}, Real(1));
      r.frame_log_det = nd::matmul_const(logs, ones);
      r.log_det = nd::sum(r.frame_log_det);
    }
    r.z = nd::concat_cols<Real>({x0, x1});
    return r;
  }

  Var<Real> inverse(Context<Real>& ctx, const Var<Real>& y, const Var<Real>* g) {
    auto y0 = nd::slice_cols(y, 0, half), y1 = nd::slice_cols(y, half, half);
    auto [m, logs] = conditioner(ctx, y0, g);
    y1 = nd::sub(y1, m);
    if (coupling == Coupling::affine) y1 = nd::mul(y1, nd::exp(nd::scale(logs, Real(-1))));
    return nd::concat_cols<Real>({y0, y1});
  }

  void collect(nn::ParamList<Real>& out) {
    pre.collect(out);
    net.collect(out);
    post.collect(out);
  }
};

/// Reverse channel order; its own inverse.
inline std::vector<std::size_t> flip_permutation(std::size_t d) {
  std::vector<std::size_t> p(d);
  for (std::size_t i = 0; i < d; ++i) p[i] = d - 1 - i;
  return p;
}

template <typename Real>
struct FlowStack {
  FlowConfig cfg;
  std::vector<CouplingLayer<Real>> layers;

  FlowStack() = default;
  FlowStack(const FlowConfig& c, nd::RngStreams& rng, const std::string& name = "flow") : cfg(c) {
    if (c.d_z % 2) throw nd::ShapeError("flow: d_z must be even, got " + std::to_string(c.d_z));
    for (std::size_t i = 0; i < c.n_layers; ++i) layers.emplace_back(name + ".layer" + std::to_string(i), c, rng);
  }

  void check(const Var<Real>& z, const Var<Real>* g) const {
    if (z.cols() != cfg.d_z)
      throw nd::ShapeError("flow: expected " + std::to_string(cfg.d_z) + " channels, got " + std::to_string(z.cols()));
    if (cfg.cond_dim && (!g || g->size() != cfg.cond_dim))
      throw nd::ShapeError("flow: speaker embedding must have " + std::to_string(cfg.cond_dim) + " entries");
  }

  /// z -> z_p with the summed log|det J|.
  FlowResult<Real> forward(Context<Real>& ctx, const Var<Real>& z, const Var<Real>* g) {
    check(z, g);
    FlowResult<Real> out;
    Var<Real> x = z;
    for (auto& l : layers) {
      auto r = l.forward(ctx, x, g);
      x = nd::permute_cols(r.z, flip_permutation(cfg.d_z));
      out.layer_log_dets.push_back(r.log_det);
      out.log_det = out.log_det.valid() ? nd::add(out.log_det, r.log_det) : r.log_det;
      out.frame_log_det = out.frame_log_det.valid() ? nd::add(out.frame_log_det, r.frame_log_det) : r.frame_log_det;
    }
    if (!out.log_det.valid()) {
      out.log_det = ctx.tape().scalar(Real(0));
      out.frame_log_det = ctx.tape().constant({z.rows(), 1}, std::vector<Real>(z.rows(), Real(0)));
    }
    out.z = x;
    return out;
  }

  /// z_p -> z, the exact algebraic inverse of forward.
  Var<Real> inverse(Context<Real>& ctx, const Var<Real>& z_p, const Var<Real>* g) {
    check(z_p, g);
    Var<Real> x = z_p;
    for (std::size_t i = layers.size(); i-- > 0;)
      x = layers[i].inverse(ctx, nd::permute_cols(x, flip_permutation(cfg.d_z)), g);
    return x;
  }

  void collect(nn::ParamList<Real>& out) {
    for (auto& l : layers) l.collect(out);
  }
};

}  // namespace zsflow::flow
