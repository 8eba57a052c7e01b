#pragma once

// Monotonic alignment search and the stochastic duration predictor: an
// exact-likelihood conditional affine flow over per-token log-durations.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsflow/nn/layers.hpp"
#include "zsflow/textenc/textenc.hpp"

namespace zsflow::duration {

using nd::Var;
using nn::Context;

struct DurationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Durations = std::vector<std::size_t>;

/// Throws unless every duration is >= 1 and (when frames > 0) they sum to frames.
inline void check_durations(const Durations& d, std::size_t frames = 0) {
  if (d.empty()) throw DurationError("durations: empty");
  std::size_t s = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 1) throw DurationError("durations: token " + std::to_string(i) + " has zero frames");
    s += d[i];
  }
  if (frames && s != frames)
    throw DurationError("durations sum to " + std::to_string(s) + ", expected " + std::to_string(frames));
}

/// Frame -> token map of an alignment.
inline std::vector<std::size_t> frame_tokens(const Durations& d) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < d.size(); ++j) idx.insert(idx.end(), d[j], j);
  return idx;
}

/// Exact DP over monotonic surjective alignments of L tokens to T frames,
/// log_lik row-major L x T. Ties go to the earlier advance: while backtracking
/// a frame stays on the current token whenever that is still optimal, so each
/// token starts as early as possible (last token first).
inline Durations mas(const std::vector<double>& log_lik, std::size_t L, std::size_t T) {
  if (L == 0) throw DurationError("mas: no tokens");
  if (L > T) throw DurationError("mas: " + std::to_string(L) + " tokens cannot cover " + std::to_string(T) + " frames");
  if (log_lik.size() != L * T) throw DurationError("mas: log_lik must have L*T entries");
  const double ninf = -std::numeric_limits<double>::infinity();
  // Q[j*T+t]: best score of frames 0..t with frame t on token j.
  std::vector<double> Q(L * T, ninf);
  Q[0] = log_lik[0];
  for (std::size_t t = 1; t < T; ++t) {
    const std::size_t jmax = std::min(L - 1, t), jmin = (L - 1 > T - 1 - t) ? L - 1 - (T - 1 - t) : 0;
    for (std::size_t j = jmin; j <= jmax; ++j) {
      const double stay = Q[j * T + t - 1];
      const double adv = j ? Q[(j - 1) * T + t - 1] : ninf;
      Q[j * T + t] = std::max(stay, adv) + log_lik[j * T + t];
    }
  }
  Durations d(L, 0);
  std::size_t j = L - 1;
  for (std::size_t t = T - 1;; --t) {
    ++d[j];
    if (t == 0) break;
    if (j > 0) {
      const double stay = j <= t - 1 ? Q[j * T + t - 1] : ninf;
      if (!(stay >= Q[(j - 1) * T + t - 1])) --j;
    }
  }
  return d;
}

/// Diagonal-Gaussian log-likelihood of every frame under every token,
/// summed over channels: result[j*T + t] = log N(z_p[t]; mu[j], exp(logs[j])).
template <typename Real>
std::vector<double> gaussian_log_lik(const nd::DiffArray<Real>& z_p, const nd::DiffArray<Real>& mu,
                                     const nd::DiffArray<Real>& logs) {
  const std::size_t T = z_p.shape[0], L = mu.shape[0], D = mu.shape[1];
  if (z_p.shape[1] != D || logs.shape != mu.shape) throw nd::ShapeError("gaussian_log_lik: shape mismatch");
  const double c = 0.5 * std::log(2 * std::numbers::pi);
  std::vector<double> out(L * T);
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0;
      for (std::size_t k = 0; k < D; ++k) {
        const double ls = logs.data[j * D + k];
        const double r = (z_p.data[t * D + k] - mu.data[j * D + k]) * std::exp(-ls);
        s += -ls - c - 0.5 * r * r;
      }
      out[j * T + t] = s;
    }
  return out;
}

/// Token-level prior repeated along the alignment: T x d_z.
template <typename Real>
textenc::PriorStats<Real> expand_prior(const textenc::PriorStats<Real>& prior, const Durations& d) {
  if (d.size() != prior.mu.rows())
    throw DurationError("expand_prior: " + std::to_string(d.size()) + " durations for " +
                        std::to_string(prior.mu.rows()) + " tokens");
  check_durations(d);
  const auto idx = frame_tokens(d);
  return {nd::gather_rows(prior.mu, idx), nd::gather_rows(prior.log_sigma, idx)};
}

struct DurationConfig {
  std::size_t d_h = 64;       // text hidden width
  std::size_t spk_dim = 32;
  std::size_t lang_dim = textenc::kLanguageDim;
  std::size_t cond = 32;
  std::size_t filter = 32;
  std::size_t n_couplings = 4;
  std::size_t kernel = 3;
};

/// Checkerboard coupling along the token axis: positions of one parity pass
/// through and condition the affine map of the others.
template <typename Real>
struct TokenCoupling {
  std::size_t parity = 0;
  nn::Conv1d<Real> c1, c2;
  nn::Linear<Real> out;

  TokenCoupling() = default;
  TokenCoupling(const std::string& name, std::size_t parity_, const DurationConfig& c, nd::RngStreams& rng)
      : parity(parity_),
        c1(name + ".c1", 1 + c.cond + c.lang_dim, c.filter, c.kernel, 1, rng),
        c2(name + ".c2", c.filter, c.filter, c.kernel, 2, rng),
        out(name + ".out", c.filter, 2, rng, true) {}

  Var<Real> keep_mask(Context<Real>& ctx, std::size_t L) const {
    std::vector<Real> m(L);
    for (std::size_t j = 0; j < L; ++j) m[j] = (j % 2 == parity) ? Real(1) : Real(0);
    return ctx.tape().constant({L, 1}, std::move(m));
  }

  // (shift, log_scale), zeroed on kept positions.
  std::pair<Var<Real>, Var<Real>> params(Context<Real>& ctx, const Var<Real>& x_kept, const Var<Real>& cond,
                                         const Var<Real>& keep) {
    auto h = nd::tanh(c1(ctx, nd::concat_cols<Real>({x_kept, cond})));
    h = nd::tanh(c2(ctx, h));
    auto st = out(ctx, h);
    auto move = nd::add_scalar(nd::scale(keep, Real(-1)), Real(1));
    return {nd::mul(nd::slice_cols(st, 0, 1), move), nd::mul(nd::slice_cols(st, 1, 1), move)};
  }

  std::pair<Var<Real>, Var<Real>> forward(Context<Real>& ctx, const Var<Real>& x, const Var<Real>& cond) {
    auto keep = keep_mask(ctx, x.rows());
    auto [m, logs] = params(ctx, nd::mul(x, keep), cond, keep);
    // logs and m vanish on kept positions, so this is the identity there.
    return {nd::add(nd::mul(x, nd::exp(logs)), m), nd::sum(logs)};
  }

  Var<Real> inverse(Context<Real>& ctx, const Var<Real>& y, const Var<Real>& cond) {
    auto keep = keep_mask(ctx, y.rows());
    auto [m, logs] = params(ctx, nd::mul(y, keep), cond, keep);
    return nd::mul(nd::sub(y, m), nd::exp(nd::scale(logs, Real(-1))));
  }

  void collect(nn::ParamList<Real>& o) {
    c1.collect(o);
    c2.collect(o);
    out.collect(o);
  }
};

/// Maps x = log(d + 0.5) (L x 1) to u ~ N(0, I) given per-token conditioning
/// built from text hidden states, the speaker embedding and the language vector.
template <typename Real>
struct DurationPredictor {
  DurationConfig cfg;
  nn::Linear<Real> cond_h, cond_s;
  nn::Linear<Real> affine;  // conditional elementwise affine, zero-init
  std::vector<TokenCoupling<Real>> couplings;

  DurationPredictor() = default;
  DurationPredictor(const DurationConfig& c, nd::RngStreams& rng)
      : cfg(c),
        cond_h("dur.cond_h", c.d_h, c.cond, rng),
        cond_s("dur.cond_s", c.spk_dim, c.cond, rng),
        affine("dur.affine", c.cond + c.lang_dim, 2, rng, true) {
    for (std::size_t i = 0; i < c.n_couplings; ++i)
      couplings.emplace_back("dur.coupling" + std::to_string(i), i % 2, c, rng);
  }

  /// L x (cond + lang_dim); spk 1 x spk_dim, lang 1 x lang_dim.
  Var<Real> condition(Context<Real>& ctx, const Var<Real>& hidden, const Var<Real>& spk, const Var<Real>& lang) {
    if (hidden.cols() != cfg.d_h || spk.size() != cfg.spk_dim || lang.size() != cfg.lang_dim)
      throw nd::ShapeError("duration: conditioning shapes " + nd::to_string(hidden.shape()) + ", " +
                           nd::to_string(spk.shape()) + ", " + nd::to_string(lang.shape()));
    const std::size_t L = hidden.rows();
    auto s = nd::reshape(spk, {1, cfg.spk_dim});
    auto c = nd::tanh(nd::add(cond_h(ctx, hidden), cond_s(ctx, s)));
    auto l = nd::gather_rows(nd::reshape(lang, {1, cfg.lang_dim}), std::vector<std::size_t>(L, 0));
    return nd::concat_cols<Real>({c, l});
  }

  std::pair<Var<Real>, Var<Real>> forward(Context<Real>& ctx, const Var<Real>& x, const Var<Real>& cond) {
    auto st = affine(ctx, cond);
    auto m = nd::slice_cols(st, 0, 1), logs = nd::slice_cols(st, 1, 1);
    Var<Real> y = nd::add(nd::mul(x, nd::exp(logs)), m);
    Var<Real> ld = nd::sum(logs);
    for (auto& c : couplings) {
      auto [y2, l2] = c.forward(ctx, y, cond);
      y = y2;
      ld = nd::add(ld, l2);
    }
    return {y, ld};
  }

  Var<Real> inverse(Context<Real>& ctx, const Var<Real>& u, const Var<Real>& cond) {
    Var<Real> x = u;
    for (std::size_t i = couplings.size(); i-- > 0;) x = couplings[i].inverse(ctx, x, cond);
    auto st = affine(ctx, cond);
    auto m = nd::slice_cols(st, 0, 1), logs = nd::slice_cols(st, 1, 1);
    return nd::mul(nd::sub(x, m), nd::exp(nd::scale(logs, Real(-1))));
  }

  void collect(nn::ParamList<Real>& o) {
    cond_h.collect(o);
    cond_s.collect(o);
    affine.collect(o);
    for (auto& c : couplings) c.collect(o);
  }
};

template <typename Real>
Var<Real> log_durations(nd::Tape<Real>& t, const Durations& d) {
  check_durations(d);
  std::vector<Real> x(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) x[j] = static_cast<Real>(std::log(static_cast<double>(d[j]) + 0.5));
  return t.constant({d.size(), 1}, std::move(x));
}

/// -[log N(u; 0, I) + log_det] / L with u = flow(log(d + 0.5)), i.e. the NLL
/// per token.
template <typename Real>
Var<Real> duration_nll(Context<Real>& ctx, DurationPredictor<Real>& dp, const Durations& d, const Var<Real>& hidden,
                       const Var<Real>& spk, const Var<Real>& lang) {
  if (d.size() != hidden.rows())
    throw DurationError("duration_nll: " + std::to_string(d.size()) + " durations for " +
                        std::to_string(hidden.rows()) + " tokens");
  auto x = log_durations(ctx.tape(), d);
  auto [u, ld] = dp.forward(ctx, x, dp.condition(ctx, hidden, spk, lang));
  const Real L = static_cast<Real>(d.size());
  const Real c = static_cast<Real>(0.5 * std::log(2 * std::numbers::pi));
  auto nll = nd::sub(nd::add_scalar(nd::scale(nd::sum(nd::square(u)), Real(0.5)), c * L), ld);
  return nd::scale(nll, Real(1) / L);
}

inline constexpr double kMaxDuration = 1e6;  // guards the size_t conversion

inline Durations integerize(const std::vector<double>& log_d) {
  Durations d(log_d.size());
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double v = std::ceil(std::exp(log_d[j]) - 0.5);
    d[j] = v < 1 ? 1 : static_cast<std::size_t>(std::min(v, kMaxDuration));
  }
  return d;
}

/// d = max(1, ceil(exp(flow^-1(noise_scale * eps)) - 0.5)), capped at
/// kMaxDuration. eps has L entries;
/// pass all zeros for the deterministic mode.
template <typename Real>
Durations sample_durations(DurationPredictor<Real>& dp, const Var<Real>& hidden, const Var<Real>& spk,
                           const Var<Real>& lang, double noise_scale, const std::vector<Real>& eps) {
  if (noise_scale < 0) throw DurationError("sample_durations: noise_scale must be >= 0");
  const std::size_t L = hidden.rows();
  if (eps.size() != L) throw DurationError("sample_durations: need one noise value per token");
  nd::Tape<Real> t;
  Context<Real> ctx(t, false);
  auto h = t.constant(hidden.shape(), hidden.value()), s = t.constant(spk.shape(), spk.value());
  auto l = t.constant(lang.shape(), lang.value());
  std::vector<Real> u(L);
  for (std::size_t j = 0; j < L; ++j) u[j] = static_cast<Real>(noise_scale) * eps[j];
  auto x = dp.inverse(ctx, t.constant({L, 1}, std::move(u)), dp.condition(ctx, h, s, l));
  std::vector<double> xd(x.value().begin(), x.value().end());
  return integerize(xd);
}

}  // namespace zsflow::duration
