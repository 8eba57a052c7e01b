#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "zsflow/audio/waveform.hpp"
#include "zsflow/ndgrad/ops.hpp"

namespace zsflow::audio {

/// `center` zero-pads (n_fft - hop) / 2 samples on both sides so that a signal of
/// T * hop samples yields exactly T frames; `none` uses no padding.
enum class Padding { none, center };

inline const char* to_string(Padding p) { return p == Padding::center ? "center" : "none"; }
inline Padding padding_from_string(const std::string& s) {
  if (s == "center") return Padding::center;
  if (s == "none") return Padding::none;
  throw AudioError("unknown STFT padding '" + s + "'");
}

struct StftConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 128;
  Padding padding = Padding::center;

  std::size_t bins() const { return n_fft / 2 + 1; }
  std::size_t pad() const { return padding == Padding::center ? (n_fft - hop) / 2 : 0; }
  /// 1 + floor((len + 2 * pad - n_fft) / hop)
  std::size_t frames(std::size_t len) const {
    const std::size_t padded = len + 2 * pad();
    return padded < n_fft ? 0 : 1 + (padded - n_fft) / hop;
  }
};

struct LinearSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<float> magnitudes;  // frames x bins, row-major
  StftConfig config;
  int sample_rate = kDefaultSampleRate;

  float at(std::size_t t, std::size_t b) const { return magnitudes[t * bins + b]; }
};

/// Windowed one-sided DFT basis, n_fft x (2 * bins): [w cos | -w sin] with a
/// periodic Hann window. Shared per (type, n_fft).
template <typename Real>
std::shared_ptr<const nd::DiffArray<Real>> dft_basis(std::size_t n_fft) {
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const nd::DiffArray<Real>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n_fft];
  if (!slot) {
    const std::size_t bins = n_fft / 2 + 1;
    auto basis = std::make_shared<nd::DiffArray<Real>>(nd::Shape{n_fft, 2 * bins});
    for (std::size_t n = 0; n < n_fft; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(n_fft));
      for (std::size_t k = 0; k < bins; ++k) {
        const double ang = 2.0 * M_PI * static_cast<double>((k * n) % n_fft) / static_cast<double>(n_fft);
        (*basis)(n, k) = static_cast<Real>(w * std::cos(ang));
        (*basis)(n, bins + k) = static_cast<Real>(-w * std::sin(ang));
      }
    }
    slot = std::move(basis);
  }
  return slot;
}

/// Magnitude STFT with a Hann window.
inline LinearSpectrogram stft_linear(const Waveform& wav, const StftConfig& cfg = {}) {
  if (wav.size() < cfg.n_fft)
    throw AudioError("stft_linear: waveform of " + std::to_string(wav.size()) + " samples is shorter than one frame (" +
                     std::to_string(cfg.n_fft) + ")");
  const std::size_t F = cfg.frames(wav.size()), N = cfg.n_fft, B = cfg.bins(), pad = cfg.pad();
  std::vector<double> framed(F * N, 0.0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t k = 0; k < N; ++k) {
      const long src = static_cast<long>(f * cfg.hop + k) - static_cast<long>(pad);
      if (src >= 0 && src < static_cast<long>(wav.size())) framed[f * N + k] = wav.samples[static_cast<std::size_t>(src)];
    }
  auto basis = dft_basis<double>(N);
  std::vector<double> spec(F * 2 * B);
  nd::kernels::gemm(framed.data(), basis->data.data(), spec.data(), F, N, 2 * B, false, false, false);
  LinearSpectrogram out;
  out.frames = F;
  out.bins = B;
  out.config = cfg;
  out.sample_rate = wav.sample_rate;
  out.magnitudes.resize(F * B);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t b = 0; b < B; ++b) {
      const double re = spec[f * 2 * B + b], im = spec[f * 2 * B + B + b];
      out.magnitudes[f * B + b] = static_cast<float>(std::sqrt(re * re + im * im));
    }
  return out;
}

/// Differentiable power spectrum |STFT|^2 (frames x bins) of a 1-D signal on the
/// tape. Signals shorter than one frame are zero-extended to n_fft samples.
template <typename Real>
nd::Var<Real> stft_power(const nd::Var<Real>& wav, const StftConfig& cfg) {
  const std::size_t len = std::max(wav.size(), cfg.n_fft);
  std::size_t F = cfg.frames(len);
  if (F == 0) F = 1;
  const std::size_t B = cfg.bins();
  auto fr = nd::frames(wav, cfg.n_fft, cfg.hop, cfg.pad(), F);
  auto spec = nd::matmul_const(fr, dft_basis<Real>(cfg.n_fft));
  auto re = nd::slice_cols(spec, 0, B);
  auto im = nd::slice_cols(spec, B, B);
  return nd::add(nd::square(re), nd::square(im));
}

}  // namespace zsflow::audio
