#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace zsflow::audio {

inline constexpr int kDefaultSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double rms(const float* x, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

inline double rms(const Waveform& w) { return rms(w.samples.data(), w.samples.size()); }

/// RMS level in dB relative to full scale (a full-scale constant has 0 dBFS).
inline double rms_dbfs(const Waveform& w) { return 20.0 * std::log10(rms(w)); }

struct NormalizeResult {
  Waveform wav;
  double gain_db = 0;
  std::size_t clipped = 0;  // samples clipped to [-1, 1]
};

/// Scales the waveform so its RMS sits at target_db dBFS.
inline NormalizeResult rms_normalize(const Waveform& wav, double target_db = -27.0) {
  const double r = rms(wav);
  if (!(r > 0.0)) throw AudioError("rms_normalize: silent input (zero RMS)");
  const double gain = std::pow(10.0, target_db / 20.0) / r;
  NormalizeResult out;
  out.wav.sample_rate = wav.sample_rate;
  out.wav.samples.resize(wav.size());
  out.gain_db = 20.0 * std::log10(gain);
  for (std::size_t i = 0; i < wav.size(); ++i) {
    double v = gain * wav.samples[i];
    if (v > 1.0 || v < -1.0) {
      ++out.clipped;
      v = std::clamp(v, -1.0, 1.0);
    }
    out.wav.samples[i] = static_cast<float>(v);
  }
  return out;
}

/// Energy VAD: drops leading and trailing frames whose RMS is below
/// threshold_db. Frames are aligned to the start of the signal; the interior is
/// never touched.
inline Waveform trim_silence(const Waveform& wav, double frame_ms = 30.0, double threshold_db = -45.0) {
  const auto frame = static_cast<std::size_t>(std::lround(frame_ms * wav.sample_rate / 1000.0));
  if (frame == 0) throw AudioError("trim_silence: frame length rounds to zero");
  const std::size_t n = wav.size();
  const std::size_t n_frames = (n + frame - 1) / frame;
  const double thr = std::pow(10.0, threshold_db / 20.0);
  auto loud = [&](std::size_t f) {
    const std::size_t b = f * frame, e = std::min(n, b + frame);
    return rms(wav.samples.data() + b, e - b) >= thr;
  };
  std::size_t first = 0;
  while (first < n_frames && !loud(first)) ++first;
  if (first == n_frames) throw AudioError("all-silent");
  std::size_t last = n_frames - 1;
  while (!loud(last)) --last;
  Waveform out;
  out.sample_rate = wav.sample_rate;
  out.samples.assign(wav.samples.begin() + static_cast<long>(first * frame),
                     wav.samples.begin() + static_cast<long>(std::min(n, (last + 1) * frame)));
  return out;
}

/// Integer-factor decimation with a windowed-sinc low-pass at the new Nyquist.
inline Waveform decimate(const Waveform& wav, int factor) {
  if (factor < 1) throw AudioError("decimate: factor must be >= 1");
  if (factor == 1) return wav;
  const int taps = 16 * factor + 1;
  const int half = taps / 2;
  const double fc = 0.5 / factor;
  std::vector<double> h(taps);
  double hs = 0;
  for (int i = 0; i < taps; ++i) {
    const double m = i - half;
    const double sinc = m == 0 ? 2 * fc : std::sin(2 * M_PI * fc * m) / (M_PI * m);
    const double win = 0.5 - 0.5 * std::cos(2 * M_PI * i / (taps - 1));
    hs += (h[i] = sinc * win);
  }
  for (auto& v : h) v /= hs;
  Waveform out;
  out.sample_rate = wav.sample_rate / factor;
  const long n = static_cast<long>(wav.size());
  for (long c = 0; c < n; c += factor) {
    double acc = 0;
    for (int i = 0; i < taps; ++i) {
      const long src = c + i - half;
      if (src >= 0 && src < n) acc += h[i] * wav.samples[static_cast<std::size_t>(src)];
    }
    out.samples.push_back(static_cast<float>(std::clamp(acc, -1.0, 1.0)));
  }
  return out;
}

}  // namespace zsflow::audio
