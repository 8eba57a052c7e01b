#pragma once

// Training items: tokenized text, hop-aligned audio, posterior features and
// the utterance's own speaker embedding.

#include <filesystem>
#include <string>
#include <vector>

#include "zsflow/audio/corpus.hpp"
#include "zsflow/audio/wav_io.hpp"
#include "zsflow/train/model.hpp"
#include "zsflow/train/sampler.hpp"

namespace zsflow::train {

struct TrainItem {
  std::string text;
  std::vector<std::size_t> tokens;
  int speaker_id = 0;
  int language_id = 0;
  std::vector<float> wav;           // frames * hop samples
  nd::DiffArray<float> features;    // frames x bins
  std::vector<float> spk;           // d_spk
  std::size_t frames() const { return features.rows(); }
};

/// Cuts the waveform to a whole number of hops and derives everything else.
template <typename Real>
TrainItem make_item(const audio::Waveform& wav, const std::string& text, int speaker_id, int language_id,
                    const ModelConfig& cfg, spkenc::SpeakerEncoder<Real>& enc) {
  if (language_id < 0 || static_cast<std::size_t>(language_id) >= cfg.n_languages)
    throw textenc::TextError("unknown language id " + std::to_string(language_id));
  TrainItem it;
  it.text = text;
  it.tokens = cfg.vocabulary().encode(text);
  it.speaker_id = speaker_id;
  it.language_id = language_id;
  const std::size_t hop = cfg.stft.hop, T = wav.samples.size() / hop;
  if (T * hop < cfg.stft.n_fft || T < it.tokens.size())
    throw audio::AudioError("utterance '" + text + "' is too short (" + std::to_string(wav.samples.size()) + " samples)");
  audio::Waveform cut = wav;
  cut.samples.resize(T * hop);
  it.wav = cut.samples;
  auto spec = audio::stft_linear(cut, cfg.stft);
  it.features = postenc::spectrogram_features<float>(spec);
  it.spk = spkenc::embed(enc, spec).vector;
  return it;
}

template <typename Real>
std::vector<TrainItem> items_from_utterances(const std::vector<audio::Utterance>& utts, const ModelConfig& cfg,
                                             spkenc::SpeakerEncoder<Real>& enc) {
  std::vector<TrainItem> out;
  for (const auto& u : utts) out.push_back(make_item(u.wav, u.text, u.speaker_id, u.language_id, cfg, enc));
  return out;
}

/// Manifest wav paths are resolved relative to the manifest's directory.
template <typename Real>
std::vector<TrainItem> items_from_manifest(const std::filesystem::path& manifest, const ModelConfig& cfg,
                                           spkenc::SpeakerEncoder<Real>& enc) {
  const auto m = audio::read_manifest(manifest);
  std::vector<TrainItem> out;
  for (const auto& e : m.entries) {
    std::filesystem::path p = e.wav_path;
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back(make_item(audio::read_wav(p), e.text, e.speaker_id, e.language_id, cfg, enc));
  }
  return out;
}

inline std::vector<ItemKey> keys_of(const std::vector<TrainItem>& items) {
  std::vector<ItemKey> k;
  for (const auto& i : items) k.push_back({i.speaker_id, i.language_id});
  return k;
}

}  // namespace zsflow::train
