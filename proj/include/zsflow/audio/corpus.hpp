#pragma once

// Deterministic synthetic multi-speaker, multi-language corpus.
//
// A speaker is a harmonic source (base F0, spectral tilt) shaped by two
// resonances and an amplitude-envelope style. A language maps every symbol of
// its alphabet to (duration in frames, pitch offset, formant shift), so
// languages differ in rhythm as well as in alphabet. Each character renders one
// harmonic segment of duration * hop samples, so the ground-truth durations sum
// exactly to the spectrogram frame count.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsflow/audio/stft.hpp"
#include "zsflow/audio/wav_io.hpp"
#include "zsflow/audio/waveform.hpp"
#include "zsflow/ndgrad/rng.hpp"

namespace zsflow::audio {

struct ManifestEntry {
  std::string wav_path;
  int speaker_id = 0;
  int language_id = 0;
  std::string text;
  std::vector<int> durations;  // frames per character, when known

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  std::set<int> languages() const {
    std::set<int> s;
    for (const auto& e : entries) s.insert(e.language_id);
    return s;
  }
  std::set<int> speakers() const {
    std::set<int> s;
    for (const auto& e : entries) s.insert(e.speaker_id);
    return s;
  }
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j{{"wav_path", e.wav_path}, {"speaker_id", e.speaker_id}, {"language_id", e.language_id}, {"text", e.text}};
  if (!e.durations.empty()) j["durations"] = e.durations;
  return j;
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.wav_path = j.at("wav_path").get<std::string>();
  e.speaker_id = j.at("speaker_id").get<int>();
  e.language_id = j.at("language_id").get<int>();
  e.text = j.at("text").get<std::string>();
  if (j.contains("durations")) e.durations = j.at("durations").get<std::vector<int>>();
  return e;
}

inline void write_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  io::write_atomic(path, [&](std::ostream& os) {
    for (const auto& e : m.entries) os << to_json(e).dump() << '\n';
  });
}

inline CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw AudioError("cannot open manifest " + path.string());
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.entries.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw AudioError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

struct VoiceParams {
  double f0 = 120;        // Hz
  double formant1 = 500;  // Hz
  double formant2 = 1500;
  double bandwidth1 = 120;
  double bandwidth2 = 200;
  double tilt = 0.85;     // per-harmonic amplitude ratio
  double attack = 0.2;    // fraction of a segment spent ramping up
};

struct SymbolRender {
  int frames = 6;
  double pitch_semitones = 0;
  double formant_shift = 0;  // relative
};

struct LanguageParams {
  std::string alphabet;
  double mean_frames = 6;
  std::map<char, SymbolRender> symbols;
};

struct CorpusConfig {
  int n_speakers = 3;
  int n_languages = 2;
  int utterances_per_speaker = 40;
  std::string vocab = "abcdefghijklmnopqrstuvwxyz";
  std::uint64_t seed = 0;
  int sample_rate = kDefaultSampleRate;
  std::size_t hop = 128;
  int min_chars = 6;
  int max_chars = 10;
  double duration_jitter = 0.3;  // probability of a +-1 frame change per occurrence
};

struct Utterance {
  Waveform wav;
  int speaker_id = 0;
  int language_id = 0;
  std::string text;
  std::vector<int> durations;
};

/// Voice of speaker `id`; depends only on (seed, id) so corpora of different
/// sizes generated with the same seed share their speakers. Golden-ratio
/// sequences spread F0 and formants evenly.
inline VoiceParams speaker_voice(std::uint64_t seed, int id) {
  auto eng = nd::RngStreams::make_engine(seed, "voice." + std::to_string(id));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto frac = [](double x) { return x - std::floor(x); };
  const double g = 0.6180339887498949;
  const double offset = frac(static_cast<double>(seed % 1000) * 0.1234567);
  VoiceParams v;
  v.f0 = 85.0 * std::pow(3.0, frac(offset + g * id));                          // 85 .. 255 Hz
  v.formant1 = 350.0 + 550.0 * frac(offset + 0.7548776662 * id + 0.3);          // 350 .. 900 Hz
  v.formant2 = 1100.0 + 1500.0 * frac(offset + 0.5698402910 * id + 0.6);        // 1100 .. 2600 Hz
  v.bandwidth1 = 80.0 + 80.0 * u(eng);
  v.bandwidth2 = 120.0 + 160.0 * u(eng);
  v.tilt = 0.75 + 0.2 * u(eng);
  v.attack = 0.05 + 0.35 * u(eng);
  return v;
}

/// Mean durations for languages 0, 1, 2, ... are 6, 4, 8, 5, 7 frames/token (then cycling).
inline LanguageParams language_params(const CorpusConfig& cfg, int id) {
  static constexpr double kMeans[] = {6, 4, 8, 5, 7};
  LanguageParams lp;
  lp.mean_frames = kMeans[id % 5];
  const std::size_t V = cfg.vocab.size();
  const std::size_t width = std::max<std::size_t>(1, cfg.n_languages == 1 ? V : (2 * V + 2) / 3);
  const std::size_t start = cfg.n_languages <= 1 ? 0 : (V - width) * static_cast<std::size_t>(id) /
                                                            static_cast<std::size_t>(std::max(1, cfg.n_languages - 1));
  lp.alphabet = cfg.vocab.substr(start, width);
  auto eng = nd::RngStreams::make_engine(cfg.seed, "language." + std::to_string(id));
  std::uniform_int_distribution<int> dur(-2, 2);
  std::uniform_real_distribution<double> pitch(-3.0, 3.0), shift(-0.08, 0.08);
  for (char c : lp.alphabet) {
    SymbolRender r;
    r.frames = std::max(1, static_cast<int>(lp.mean_frames) + dur(eng));
    r.pitch_semitones = pitch(eng);
    r.formant_shift = shift(eng);
    lp.symbols[c] = r;
  }
  return lp;
}

inline Waveform render_utterance(const VoiceParams& voice, const LanguageParams& lang, const std::string& text,
                                 const std::vector<int>& durations, double f0_scale, int sample_rate,
                                 std::size_t hop) {
  Waveform w;
  w.sample_rate = sample_rate;
  const double nyq = 0.45 * sample_rate;
  std::vector<double> phase(64, 0.0);
  double prev_f0 = voice.f0 * f0_scale;
  auto resonance = [](double f, double centre, double bw) {
    const double d = (f - centre) / bw;
    return 1.0 / (1.0 + d * d);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& sym = lang.symbols.at(text[i]);
    const std::size_t n = static_cast<std::size_t>(durations[i]) * hop;
    const double target_f0 = voice.f0 * f0_scale * std::pow(2.0, sym.pitch_semitones / 12.0);
    const double f1 = voice.formant1 * (1.0 + sym.formant_shift), f2 = voice.formant2 * (1.0 + sym.formant_shift);
    const std::size_t glide = n / 5;
    const std::size_t attack = std::max<std::size_t>(1, static_cast<std::size_t>(voice.attack * static_cast<double>(n)));
    for (std::size_t s = 0; s < n; ++s) {
      const double f0 = s < glide ? prev_f0 + (target_f0 - prev_f0) * static_cast<double>(s) / static_cast<double>(glide)
                                  : target_f0;
      const double env = s < attack ? 0.3 + 0.7 * static_cast<double>(s) / static_cast<double>(attack)
                                    : 1.0 - 0.3 * static_cast<double>(s - attack) / static_cast<double>(n);
      double acc = 0;
      double amp_k = 1.0;
      for (std::size_t k = 1; k <= phase.size(); ++k) {
        const double fk = f0 * static_cast<double>(k);
        if (fk >= nyq) break;
        phase[k - 1] += 2.0 * M_PI * fk / sample_rate;
        if (phase[k - 1] > 2.0 * M_PI) phase[k - 1] -= 2.0 * M_PI;
        const double shape = 0.05 + resonance(fk, f1, voice.bandwidth1) + 0.7 * resonance(fk, f2, voice.bandwidth2);
        acc += amp_k * shape * std::sin(phase[k - 1]);
        amp_k *= voice.tilt;
      }
      w.samples.push_back(static_cast<float>(env * acc));
    }
    prev_f0 = target_f0;
  }
  return w;
}

/// In-memory corpus; utterance i of speaker s uses language i % n_languages.
inline std::vector<Utterance> generate_corpus(const CorpusConfig& cfg) {
  if (cfg.vocab.empty()) throw AudioError("synth_corpus: empty vocab");
  if (cfg.n_speakers < 1 || cfg.n_languages < 1) throw AudioError("synth_corpus: need n_speakers >= 1 and n_languages >= 1");
  std::vector<LanguageParams> langs;
  for (int l = 0; l < cfg.n_languages; ++l) langs.push_back(language_params(cfg, l));
  std::vector<Utterance> out;
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const auto voice = speaker_voice(cfg.seed, s);
    auto eng = nd::RngStreams::make_engine(cfg.seed, "utterances." + std::to_string(s));
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      const int l = u % cfg.n_languages;
      const auto& lang = langs[static_cast<std::size_t>(l)];
      std::uniform_int_distribution<int> len(cfg.min_chars, cfg.max_chars);
      std::uniform_int_distribution<std::size_t> pick(0, lang.alphabet.size() - 1);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Utterance utt;
      utt.speaker_id = s;
      utt.language_id = l;
      const int n = len(eng);
      for (int i = 0; i < n; ++i) {
        const char c = lang.alphabet[pick(eng)];
        utt.text.push_back(c);
        int d = lang.symbols.at(c).frames;
        if (unit(eng) < cfg.duration_jitter) d += unit(eng) < 0.5 ? -1 : 1;
        utt.durations.push_back(std::max(1, d));
      }
      const double f0_scale = 1.0 + 0.04 * (unit(eng) - 0.5);
      auto raw = render_utterance(voice, lang, utt.text, utt.durations, f0_scale, cfg.sample_rate, cfg.hop);
      utt.wav = rms_normalize(raw, -27.0).wav;
      out.push_back(std::move(utt));
    }
  }
  return out;
}

/// Writes WAVs plus manifest.jsonl into `dir`.
inline CorpusManifest synth_corpus(const CorpusConfig& cfg, const std::filesystem::path& dir) {
  if (cfg.n_speakers < 2) throw AudioError("synth_corpus: need at least 2 speakers");
  auto utts = generate_corpus(cfg);
  std::filesystem::create_directories(dir / "wavs");
  CorpusManifest m;
  std::map<int, int> counter;
  for (const auto& u : utts) {
    const std::string name = "spk" + std::to_string(u.speaker_id) + "_" + std::to_string(counter[u.speaker_id]++) + ".wav";
    write_wav(dir / "wavs" / name, u.wav);
    m.entries.push_back({"wavs/" + name, u.speaker_id, u.language_id, u.text, u.durations});
  }
  write_manifest(dir / "manifest.jsonl", m);
  return m;
}

}  // namespace zsflow::audio
