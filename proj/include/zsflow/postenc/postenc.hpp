#pragma once

// VAE posterior q(z | spectrogram, speaker) and the KL terms against the
// frame-expanded prior.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "zsflow/audio/stft.hpp"
#include "zsflow/nn/layers.hpp"

namespace zsflow::postenc {

using nd::Var;
using nn::Context;

inline constexpr double kLogSigmaMin = -9.0;
inline constexpr double kLogSigmaMax = 2.0;

struct PostEncConfig {
  std::size_t bins = 257;
  std::size_t hidden = 32;
  std::size_t d_z = 16;
  std::size_t kernel = 5;
  std::size_t n_blocks = 4;
  std::size_t cond_dim = 32;
};

template <typename Real>
struct PosteriorSample {
  Var<Real> z, mu, log_sigma;  // T x d_z
  std::vector<Real> epsilon;
};

/// Encoder input: log-compressed linear-frequency magnitudes, T x bins.
template <typename Real>
nd::DiffArray<Real> spectrogram_features(const audio::LinearSpectrogram& spec) {
  nd::DiffArray<Real> f({spec.frames, spec.bins});
  for (std::size_t i = 0; i < f.data.size(); ++i)
    f.data[i] = static_cast<Real>(0.2 * std::log(static_cast<double>(spec.magnitudes[i]) + 1e-4));
  return f;
}

template <typename Real>
struct PosteriorEncoder {
  PostEncConfig cfg;
  nn::Linear<Real> pre;
  nn::WaveNet<Real> net;
  nn::Linear<Real> proj;

  PosteriorEncoder() = default;
  PosteriorEncoder(const PostEncConfig& c, nd::RngStreams& rng)
      : cfg(c),
        pre("postenc.pre", c.bins, c.hidden, rng),
        net("postenc.wn", c.hidden, c.kernel, std::vector<std::size_t>(c.n_blocks, 1), c.cond_dim, rng),
        proj("postenc.proj", c.hidden, 2 * c.d_z, rng) {}

  /// features: T x bins; g: 1 x cond_dim. noise, when given, must hold T * d_z
  /// values; otherwise it is drawn from `rng` (standard normal).
  PosteriorSample<Real> operator()(Context<Real>& ctx, const Var<Real>& features, const Var<Real>* g,
                                   const std::vector<Real>* noise, nd::RngStreams* rng = nullptr,
                                   const std::string& stream = "posterior") {
    const std::size_t T = features.rows();
    if (T < 1 || features.cols() != cfg.bins)
      throw nd::ShapeError("posterior_encode: expected T x " + std::to_string(cfg.bins) + " features, got " +
                           nd::to_string(features.shape()));
    auto h = net(ctx, pre(ctx, features), g);
    auto stats = proj(ctx, h);
    PosteriorSample<Real> s;
    s.mu = nd::slice_cols(stats, 0, cfg.d_z);
    s.log_sigma = nd::clamp(nd::slice_cols(stats, cfg.d_z, cfg.d_z), Real(kLogSigmaMin), Real(kLogSigmaMax));
    if (noise) {
      if (noise->size() != T * cfg.d_z) throw nd::ShapeError("posterior_encode: noise has the wrong size");
      s.epsilon = *noise;
    } else if (rng) {
      s.epsilon = rng->normals<Real>(stream, T * cfg.d_z);
    } else {
      s.epsilon.assign(T * cfg.d_z, Real(0));
    }
    auto eps = ctx.tape().constant({T, cfg.d_z}, s.epsilon);
    s.z = nd::add(s.mu, nd::mul(nd::exp(s.log_sigma), eps));
    return s;
  }

  void collect(nn::ParamList<Real>& out) {
    pre.collect(out);
    net.collect(out);
    proj.collect(out);
  }
};

/// Mean over elements of KL(N(mu_q, sigma_q) || N(mu_p, sigma_p)):
/// log(sigma_p / sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2.
template <typename Real>
Var<Real> kl_aligned(const Var<Real>& mu_q, const Var<Real>& logs_q, const Var<Real>& mu_p, const Var<Real>& logs_p) {
  for (const auto* v : {&logs_q, &mu_p, &logs_p})
    if (v->shape() != mu_q.shape())
      throw nd::ShapeError("kl_aligned: shape mismatch " + nd::to_string(mu_q.shape()) + " vs " +
                           nd::to_string(v->shape()));
  auto inv_var_p = nd::exp(nd::scale(logs_p, Real(-2)));
  auto quad = nd::add(nd::exp(nd::scale(logs_q, Real(2))), nd::square(nd::sub(mu_q, mu_p)));
  auto kl = nd::add(nd::sub(logs_p, logs_q), nd::scale(nd::mul(quad, inv_var_p), Real(0.5)));
  return nd::add_scalar(nd::mean(kl), Real(-0.5));
}

/// Training form of the latent KL: with z ~ q and z_p = f(z),
///   E_q[log q(z) - log N(z_p; mu_p, sigma_p) - log|det df/dz|]
/// up to the shared log(2 pi) terms, where the posterior entropy is taken in
/// closed form (E[eps^2] = 1) and the prior term is evaluated at the sample:
///   logs_p - logs_q - 1/2 + (z_p - mu_p)^2 exp(-2 logs_p) / 2, averaged, minus
///   log_det / (T d_z).
template <typename Real>
Var<Real> kl_flow_sample(const Var<Real>& z_p, const Var<Real>& logs_q, const Var<Real>& mu_p,
                         const Var<Real>& logs_p, const Var<Real>& log_det) {
  for (const auto* v : {&logs_q, &mu_p, &logs_p})
    if (v->shape() != z_p.shape()) throw nd::ShapeError("kl_flow_sample: shape mismatch");
  auto sq = nd::mul(nd::square(nd::sub(z_p, mu_p)), nd::exp(nd::scale(logs_p, Real(-2))));
  auto kl = nd::add(nd::sub(logs_p, logs_q), nd::scale(sq, Real(0.5)));
  auto mean_kl = nd::add_scalar(nd::mean(kl), Real(-0.5));
  return nd::sub(mean_kl, nd::scale(log_det, Real(1) / static_cast<Real>(z_p.size())));
}

}  // namespace zsflow::postenc
