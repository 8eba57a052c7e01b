#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "zsflow/audio/corpus.hpp"
#include "zsflow/audio/stft.hpp"
#include "zsflow/audio/wav_io.hpp"
#include "zsflow/audio/waveform.hpp"

using namespace zsflow;
using namespace zsflow::audio;

namespace {

Waveform tone(std::size_t n, double freq, double amp = 0.5, int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(amp * std::sin(2 * M_PI * freq * i / sr)));
  return w;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("zsflow_test_audio_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Stft, FrameCountFollowsPaddingConvention) {
  StftConfig none{512, 128, Padding::none};
  EXPECT_EQ(none.frames(512), 1u);
  EXPECT_EQ(none.frames(1000), 1u + (1000 - 512) / 128);
  StftConfig centre{512, 128, Padding::center};
  EXPECT_EQ(centre.frames(40 * 128), 40u);
  auto spec = stft_linear(tone(40 * 128, 440), centre);
  EXPECT_EQ(spec.frames, 40u);
  EXPECT_EQ(spec.bins, 257u);
}

TEST(Stft, BinCentreSinusoidPeaksAtItsBin) {
  const int sr = 16000;
  for (std::size_t bin : {5u, 17u, 64u, 200u}) {
    const double f = static_cast<double>(bin) * sr / 512.0;
    auto spec = stft_linear(tone(4096, f), {512, 128, Padding::none});
    for (std::size_t t = 0; t < spec.frames; ++t) {
      std::size_t arg = 0;
      for (std::size_t b = 1; b < spec.bins; ++b)
        if (spec.at(t, b) > spec.at(t, arg)) arg = b;
      EXPECT_EQ(arg, bin) << "frame " << t;
    }
  }
}

TEST(Stft, ZerosGiveZeroMagnitudes) {
  Waveform w;
  w.samples.assign(2048, 0.0f);
  auto spec = stft_linear(w);
  for (float m : spec.magnitudes) EXPECT_EQ(m, 0.0f);
}

TEST(Stft, ParsevalPerFrame) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Waveform w;
  for (int i = 0; i < 3000; ++i) w.samples.push_back(u(eng));
  const StftConfig cfg{512, 128, Padding::none};
  auto spec = stft_linear(w, cfg);
  const std::size_t N = cfg.n_fft;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    // Direct time-domain energy of the Hann-windowed frame.
    double time_energy = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const double win = 0.5 - 0.5 * std::cos(2 * M_PI * n / N);
      const double x = win * w.samples[t * cfg.hop + n];
      time_energy += x * x;
    }
    // One-sided spectrum: interior bins count twice.
    double freq_energy = 0;
    for (std::size_t b = 0; b < spec.bins; ++b) {
      const double m2 = static_cast<double>(spec.at(t, b)) * spec.at(t, b);
      freq_energy += (b == 0 || b == spec.bins - 1) ? m2 : 2 * m2;
    }
    freq_energy /= static_cast<double>(N);
    EXPECT_NEAR(freq_energy / time_energy, 1.0, 0.01);
  }
}

TEST(Stft, ShortInputRejected) {
  EXPECT_THROW(stft_linear(tone(100, 440)), AudioError);
}

TEST(Stft, TrailingZerosBelowHopOnlyAffectFinalFrame) {
  auto w = tone(5000, 311);
  auto base = stft_linear(w);
  for (std::size_t extra : {1u, 50u, 127u}) {
    auto w2 = w;
    w2.samples.resize(w.size() + extra, 0.0f);
    auto s2 = stft_linear(w2);
    ASSERT_GE(s2.frames, base.frames);
    ASSERT_LE(s2.frames, base.frames + 1);
    const std::size_t common = base.frames - 1;
    for (std::size_t t = 0; t < common; ++t)
      for (std::size_t b = 0; b < base.bins; ++b) ASSERT_EQ(base.at(t, b), s2.at(t, b)) << t << "," << b;
  }
}

TEST(Stft, DifferentiablePowerMatchesMagnitudeSquared) {
  auto w = tone(2048, 523, 0.3);
  auto ref = stft_linear(w);
  nd::Tape<double> tape;
  std::vector<double> x(w.samples.begin(), w.samples.end());
  auto p = stft_power(tape.constant({x.size()}, x), ref.config);
  ASSERT_EQ(p.rows(), ref.frames);
  ASSERT_EQ(p.cols(), ref.bins);
  for (std::size_t t = 0; t < ref.frames; ++t)
    for (std::size_t b = 0; b < ref.bins; ++b)
      EXPECT_NEAR(std::sqrt(p.at(t, b)), ref.at(t, b), 1e-4 * (1 + ref.at(t, b)));
}

TEST(Normalize, HitsTargetOnRandomSignals) {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> amp(1e-3, 0.9);
  for (int k = 0; k < 50; ++k) {
    auto w = tone(4000, 100 + 37 * k, amp(eng));
    auto r = rms_normalize(w);
    EXPECT_NEAR(rms_dbfs(r.wav), -27.0, 0.1);
    EXPECT_EQ(r.clipped, 0u);
  }
}

TEST(Normalize, AlreadyAtTargetIsUnityGain) {
  auto w = rms_normalize(tone(4000, 250)).wav;
  auto r = rms_normalize(w);
  EXPECT_NEAR(r.gain_db, 0.0, 0.1);
}

TEST(Normalize, ScaleInvariantAndIdempotent) {
  auto w = tone(4000, 330, 0.4);
  auto half = w;
  for (auto& s : half.samples) s *= 0.5f;
  auto a = rms_normalize(w).wav, b = rms_normalize(half).wav, c = rms_normalize(a).wav;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.samples[i], b.samples[i], 1e-6);
    EXPECT_NEAR(a.samples[i], c.samples[i], 1e-6);
  }
}

TEST(Normalize, SilentInputRejected) {
  Waveform w;
  w.samples.assign(100, 0.0f);
  EXPECT_THROW(rms_normalize(w), AudioError);
}

TEST(Normalize, ClippingReported) {
  Waveform w;
  w.samples.assign(10000, 0.0f);
  w.samples[0] = 1.0f;  // one spike: RMS is tiny, so the gain pushes it past full scale
  auto r = rms_normalize(w);
  EXPECT_EQ(r.clipped, 1u);
  for (float s : r.wav.samples) EXPECT_LE(std::abs(s), 1.0f);
}

TEST(Trim, RecoversToneBoundaries) {
  const int sr = 16000;
  const std::size_t frame = 480;  // 30 ms
  for (std::size_t lead : {0u, 1000u, 4800u, 7777u}) {
    const std::size_t len = 9000, tail = 3333;
    Waveform w;
    w.samples.assign(lead, 0.0f);
    auto t = tone(len, 440, 0.5, sr);
    w.samples.insert(w.samples.end(), t.samples.begin(), t.samples.end());
    w.samples.resize(w.samples.size() + tail, 0.0f);
    auto out = trim_silence(w);
    // Locate the kept range inside w by the first kept sample offset.
    const std::size_t start = (lead / frame) * frame;
    EXPECT_LE(static_cast<long>(lead) - static_cast<long>(start), static_cast<long>(frame));
    EXPECT_NEAR(static_cast<double>(out.size()), static_cast<double>(len), 2.0 * frame);
    EXPECT_EQ(out.samples[lead - start], w.samples[lead]);
    const std::size_t end = start + out.size();
    EXPECT_LE(std::abs(static_cast<long>(end) - static_cast<long>(lead + len)), static_cast<long>(frame));
  }
}

TEST(Trim, NoSilenceIsIdentityAndIdempotent) {
  auto w = tone(8000, 200);
  auto out = trim_silence(w);
  EXPECT_EQ(out.samples, w.samples);
  Waveform padded;
  padded.samples.assign(2000, 0.0f);
  padded.samples.insert(padded.samples.end(), w.samples.begin(), w.samples.end());
  padded.samples.resize(padded.size() + 1500, 0.0f);
  auto once = trim_silence(padded);
  EXPECT_EQ(trim_silence(once).samples, once.samples);
}

TEST(Trim, AllSilentRaises) {
  Waveform w;
  w.samples.assign(5000, 1e-5f);
  try {
    trim_silence(w);
    FAIL() << "expected all-silent error";
  } catch (const AudioError& e) {
    EXPECT_STREQ(e.what(), "all-silent");
  }
}

TEST(Decimate, HalvesRateAndKeepsLowTone) {
  auto w = tone(8000, 300);
  auto d = decimate(w, 2);
  EXPECT_EQ(d.sample_rate, 8000);
  EXPECT_EQ(d.size(), 4000u);
  EXPECT_NEAR(rms(d), rms(w), 0.02);
  auto hi = decimate(tone(8000, 7000), 2);
  EXPECT_LT(rms(hi), 0.05 * rms(w));
}

TEST(Wav, RoundTrip) {
  auto dir = scratch("wav");
  auto w = tone(1234, 440, 0.7);
  write_wav(dir / "a.wav", w);
  auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate, 16000);
  ASSERT_EQ(r.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32767);
  EXPECT_FALSE(std::filesystem::exists(dir / "a.wav.tmp"));
  std::ofstream(dir / "bad.wav") << "nope";
  EXPECT_THROW(read_wav(dir / "bad.wav"), AudioError);
}

TEST(Corpus, CountsAndIdRanges) {
  auto dir = scratch("corpus_counts");
  CorpusConfig cfg;
  cfg.n_speakers = 3;
  cfg.n_languages = 2;
  cfg.utterances_per_speaker = 40;
  auto m = synth_corpus(cfg, dir);
  EXPECT_EQ(m.entries.size(), 120u);
  EXPECT_EQ(m.speakers(), (std::set<int>{0, 1, 2}));
  EXPECT_EQ(m.languages(), (std::set<int>{0, 1}));
  auto again = read_manifest(dir / "manifest.jsonl");
  EXPECT_EQ(again.entries, m.entries);
  for (const auto& e : m.entries) {
    for (char c : e.text) EXPECT_NE(cfg.vocab.find(c), std::string::npos);
    auto w = read_wav(dir / e.wav_path);
    int frames = 0;
    for (int d : e.durations) frames += d;
    EXPECT_EQ(w.size(), static_cast<std::size_t>(frames) * cfg.hop);
    EXPECT_EQ(StftConfig{}.frames(w.size()), static_cast<std::size_t>(frames));
  }
}

TEST(Corpus, DeterministicBitIdenticalFiles) {
  CorpusConfig cfg;
  cfg.utterances_per_speaker = 4;
  cfg.seed = 42;
  auto a = scratch("det_a"), b = scratch("det_b");
  auto ma = synth_corpus(cfg, a);
  synth_corpus(cfg, b);
  for (const auto& e : ma.entries) EXPECT_EQ(slurp(a / e.wav_path), slurp(b / e.wav_path));
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
}

TEST(Corpus, LanguagesDifferInRhythm) {
  CorpusConfig cfg;
  cfg.n_speakers = 2;
  cfg.utterances_per_speaker = 60;
  auto utts = generate_corpus(cfg);
  double sum[2] = {0, 0};
  int n[2] = {0, 0};
  for (const auto& u : utts)
    for (int d : u.durations) {
      sum[u.language_id] += d;
      ++n[u.language_id];
    }
  EXPECT_NEAR(sum[0] / n[0], 6.0, 1.0);
  EXPECT_NEAR(sum[1] / n[1], 4.0, 1.0);
  for (const auto& u : utts) EXPECT_NEAR(rms_dbfs(u.wav), -27.0, 0.1);
}

TEST(Corpus, SpeakersSharedAcrossCorpusSizes) {
  for (int id = 0; id < 4; ++id) {
    auto a = speaker_voice(7, id), b = speaker_voice(7, id);
    EXPECT_EQ(a.f0, b.f0);
    EXPECT_EQ(a.formant2, b.formant2);
  }
  EXPECT_NE(speaker_voice(7, 0).f0, speaker_voice(7, 1).f0);
}

TEST(Corpus, RejectsBadConfig) {
  CorpusConfig cfg;
  cfg.vocab.clear();
  EXPECT_THROW(generate_corpus(cfg), AudioError);
  CorpusConfig one;
  one.n_speakers = 1;
  EXPECT_THROW(synth_corpus(one, scratch("bad")), AudioError);
}
