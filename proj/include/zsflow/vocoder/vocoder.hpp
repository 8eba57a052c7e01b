#pragma once

// Latent-to-waveform generator and its reconstruction loss. Adversarial
// training is not implemented; Discriminator is the hook for it.

#include <random>
#include <string>
#include <vector>

#include "zsflow/audio/stft.hpp"
#include "zsflow/nn/layers.hpp"

namespace zsflow::vocoder {

using nd::Var;
using nn::Context;

struct VocoderError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct VocoderConfig {
  std::size_t d_z = 16;
  std::size_t spk_dim = 32;
  std::size_t channels = 64;
  std::vector<std::size_t> upsample{8, 4, 4};
  std::vector<std::size_t> res_dilations{1, 3};
  std::size_t hop = 128;

  void check() const {
    std::size_t p = 1;
    for (auto r : upsample) p *= r;
    if (p != hop)
      throw VocoderError("vocoder: upsampling factors multiply to " + std::to_string(p) + ", hop is " +
                         std::to_string(hop));
    if (channels >> upsample.size() == 0) throw VocoderError("vocoder: too few channels for the stack");
  }
};

/// Transposed convolution with kernel == stride: each frame expands to `rate`
/// output frames independently, so it is a matmul followed by a reshape.
template <typename Real>
struct Upsample {
  std::size_t rate = 1, cout = 1;
  nn::Linear<Real> lin;

  Upsample() = default;
  Upsample(const std::string& name, std::size_t cin, std::size_t cout_, std::size_t rate_, nd::RngStreams& rng)
      : rate(rate_), cout(cout_), lin(name, cin, rate_ * cout_, rng) {}

  Var<Real> operator()(Context<Real>& ctx, const Var<Real>& x) {
    return nd::reshape(lin(ctx, x), {x.rows() * rate, cout});
  }
  void collect(nn::ParamList<Real>& o) { lin.collect(o); }
};

template <typename Real>
struct Vocoder {
  VocoderConfig cfg;
  nn::Conv1d<Real> pre;
  nn::Linear<Real> spk_proj;
  std::vector<Upsample<Real>> ups;
  std::vector<std::vector<nn::Conv1d<Real>>> res;
  nn::Conv1d<Real> post;

  Vocoder() = default;
  Vocoder(const VocoderConfig& c, nd::RngStreams& rng)
      : cfg(c),
        pre("voc.pre", c.d_z, c.channels, 7, 1, rng),
        spk_proj("voc.spk", c.spk_dim, c.channels, rng) {
    c.check();
    std::size_t ch = c.channels;
    for (std::size_t i = 0; i < c.upsample.size(); ++i) {
      const std::string n = "voc.up" + std::to_string(i);
      ups.emplace_back(n, ch, ch / 2, c.upsample[i], rng);
      ch /= 2;
      res.emplace_back();
      for (std::size_t k = 0; k < c.res_dilations.size(); ++k)
        res.back().emplace_back(n + ".res" + std::to_string(k), ch, ch, 3, c.res_dilations[k], rng);
    }
    post = nn::Conv1d<Real>("voc.post", ch, 1, 7, 1, rng);
  }

  /// z: S x d_z, spk: 1 x spk_dim -> S * hop samples in (-1, 1).
  Var<Real> operator()(Context<Real>& ctx, const Var<Real>& z, const Var<Real>& spk) {
    if (z.rows() < 1 || z.cols() != cfg.d_z)
      throw nd::ShapeError("vocode: expected S x " + std::to_string(cfg.d_z) + " latents, got " +
                           nd::to_string(z.shape()));
    if (spk.size() != cfg.spk_dim)
      throw nd::ShapeError("vocode: speaker embedding must have " + std::to_string(cfg.spk_dim) + " entries");
    const std::size_t S = z.rows();
    auto x = nd::add(pre(ctx, z), spk_proj(ctx, nd::reshape(spk, {1, cfg.spk_dim})));
    for (std::size_t i = 0; i < ups.size(); ++i) {
      x = ups[i](ctx, nd::leaky_relu(x));
      for (auto& conv : res[i]) x = nd::add(x, conv(ctx, nd::leaky_relu(x)));
    }
    auto y = nd::tanh(post(ctx, nd::leaky_relu(x)));
    return nd::reshape(y, {S * cfg.hop});
  }

  void collect(nn::ParamList<Real>& o) {
    pre.collect(o);
    spk_proj.collect(o);
    for (std::size_t i = 0; i < ups.size(); ++i) {
      ups[i].collect(o);
      for (auto& c : res[i]) c.collect(o);
    }
    post.collect(o);
  }
};

/// Adversarial hook: scores for a waveform, to be combined by a future GAN
/// loss. Nothing in the current training path calls it.
template <typename Real>
struct Discriminator {
  virtual ~Discriminator() = default;
  virtual std::vector<Var<Real>> operator()(Context<Real>& ctx, const Var<Real>& wav) = 0;
};

template <typename Real>
struct Segment {
  Var<Real> z;               // seg_frames x d_z
  std::vector<Real> wav;     // seg_frames * hop samples
  std::size_t start = 0;     // in frames
};

/// Uniform random window of seg_frames latent frames and the matching samples.
template <typename Real, typename Engine>
Segment<Real> slice_segments(const Var<Real>& z, const std::vector<Real>& wav, std::size_t seg_frames,
                             std::size_t hop, Engine& eng) {
  const std::size_t T = z.rows();
  if (seg_frames < 1 || T < seg_frames)
    throw VocoderError("slice_segments: utterance has " + std::to_string(T) + " frames, segment needs " +
                       std::to_string(seg_frames));
  if (wav.size() < T * hop)
    throw VocoderError("slice_segments: waveform has " + std::to_string(wav.size()) + " samples for " +
                       std::to_string(T) + " frames");
  std::uniform_int_distribution<std::size_t> d(0, T - seg_frames);
  Segment<Real> s;
  s.start = d(eng);
  s.z = nd::slice_rows(z, s.start, seg_frames);
  s.wav.assign(wav.begin() + s.start * hop, wav.begin() + (s.start + seg_frames) * hop);
  return s;
}

struct Resolution {
  std::size_t n_fft, hop;
};

inline const std::vector<Resolution>& default_resolutions() {
  static const std::vector<Resolution> r{{512, 128}, {256, 64}, {1024, 256}};
  return r;
}

inline constexpr double kLogFloor = 1e-5;

/// Sum over resolutions of mean |log|X_hat| - log|X||, plus mean |wav_hat - wav|.
/// Log magnitudes are taken as 0.5 * log(power + floor).
template <typename Real>
Var<Real> spectral_loss(const Var<Real>& wav_hat, const Var<Real>& wav,
                        const std::vector<Resolution>& res = default_resolutions()) {
  if (wav_hat.size() != wav.size())
    throw VocoderError("spectral_loss: lengths differ (" + std::to_string(wav_hat.size()) + " vs " +
                       std::to_string(wav.size()) + ")");
  auto a = nd::reshape(wav_hat, {wav_hat.size()}), b = nd::reshape(wav, {wav.size()});
  Var<Real> loss = nd::mean(nd::abs(nd::sub(a, b)));
  for (const auto& r : res) {
    audio::StftConfig sc;
    sc.n_fft = r.n_fft;
    sc.hop = r.hop;
    auto la = nd::log(nd::add_scalar(audio::stft_power(a, sc), Real(kLogFloor)));
    auto lb = nd::log(nd::add_scalar(audio::stft_power(b, sc), Real(kLogFloor)));
    loss = nd::add(loss, nd::scale(nd::mean(nd::abs(nd::sub(la, lb))), Real(0.5)));
  }
  return loss;
}

}  // namespace zsflow::vocoder
