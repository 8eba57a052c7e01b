#pragma once

// The full synthesis model: text encoder, posterior encoder, flow, duration
// predictor and vocoder, plus the config snapshot stored in checkpoints.

#include <string>
#include <vector>

#include "json.hpp"
#include "zsflow/audio/stft.hpp"
#include "zsflow/audio/waveform.hpp"
#include "zsflow/duration/duration.hpp"
#include "zsflow/flow/flow.hpp"
#include "zsflow/postenc/postenc.hpp"
#include "zsflow/spkenc/spkenc.hpp"
#include "zsflow/textenc/textenc.hpp"
#include "zsflow/textenc/vocab.hpp"
#include "zsflow/vocoder/vocoder.hpp"

namespace zsflow::train {

struct ModelConfig {
  int sample_rate = audio::kDefaultSampleRate;
  audio::StftConfig stft{};
  std::vector<std::string> vocab;  // symbol table, index = token id
  std::size_t n_languages = 2;
  std::size_t d_z = 16;
  std::size_t d_spk = 32;
  textenc::TextEncConfig text{};
  postenc::PostEncConfig post{};
  flow::FlowConfig flow{};
  duration::DurationConfig dur{};
  vocoder::VocoderConfig voc{};
  spkenc::SpkEncConfig spk{};

  /// Propagates the shared sizes (vocab, languages, d_z, d_spk, hop) into the
  /// sub-configs.
  void sync() {
    text.vocab_size = vocab.size();
    text.n_languages = n_languages;
    text.d_z = d_z;
    post.bins = stft.bins();
    post.d_z = d_z;
    post.cond_dim = d_spk;
    flow.d_z = d_z;
    flow.cond_dim = d_spk;
    dur.d_h = text.d_h;
    dur.spk_dim = d_spk;
    voc.d_z = d_z;
    voc.spk_dim = d_spk;
    voc.hop = stft.hop;
    spk.n_fft = stft.n_fft;
    spk.hop = stft.hop;
    spk.d_spk = d_spk;
  }

  textenc::Vocabulary vocabulary() const { return textenc::Vocabulary(vocab); }

  /// Desk-scale defaults for a vocabulary and language count.
  static ModelConfig desk(const textenc::Vocabulary& v, std::size_t n_languages) {
    ModelConfig c;
    c.vocab = v.symbols();
    c.n_languages = n_languages;
    c.text.d_h = 48;
    c.text.ffn = 96;
    c.dur.cond = 24;
    c.dur.filter = 24;
    c.sync();
    return c;
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  using nlohmann::json;
  return json{
      {"sample_rate", c.sample_rate},
      {"stft", {{"n_fft", c.stft.n_fft}, {"hop", c.stft.hop}, {"padding", audio::to_string(c.stft.padding)}}},
      {"vocab", c.vocab},
      {"n_languages", c.n_languages},
      {"d_z", c.d_z},
      {"d_spk", c.d_spk},
      {"text",
       {{"d_h", c.text.d_h}, {"n_blocks", c.text.n_blocks}, {"n_heads", c.text.n_heads}, {"ffn", c.text.ffn},
        {"mean_only", c.text.mean_only}}},
      {"post", {{"hidden", c.post.hidden}, {"kernel", c.post.kernel}, {"n_blocks", c.post.n_blocks}}},
      {"flow",
       {{"hidden", c.flow.hidden},
        {"n_layers", c.flow.n_layers},
        {"dilations", c.flow.dilations},
        {"kernel", c.flow.kernel},
        {"coupling", flow::to_string(c.flow.coupling)}}},
      {"dur",
       {{"cond", c.dur.cond}, {"filter", c.dur.filter}, {"n_couplings", c.dur.n_couplings}, {"kernel", c.dur.kernel}}},
      {"voc", {{"channels", c.voc.channels}, {"upsample", c.voc.upsample}, {"res_dilations", c.voc.res_dilations}}},
      {"spk", {{"hidden", c.spk.hidden}, {"min_frames", c.spk.min_frames}}},
  };
}

/// Missing keys keep their defaults, so partial config files work.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [](const nlohmann::json& o, const char* k, auto& dst) {
    if (o.contains(k)) o.at(k).get_to(dst);
  };
  get(j, "sample_rate", c.sample_rate);
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    get(s, "n_fft", c.stft.n_fft);
    get(s, "hop", c.stft.hop);
    if (s.contains("padding")) c.stft.padding = audio::padding_from_string(s.at("padding").get<std::string>());
  }
  get(j, "vocab", c.vocab);
  get(j, "n_languages", c.n_languages);
  get(j, "d_z", c.d_z);
  get(j, "d_spk", c.d_spk);
  if (j.contains("text")) {
    const auto& t = j.at("text");
    get(t, "d_h", c.text.d_h);
    get(t, "n_blocks", c.text.n_blocks);
    get(t, "n_heads", c.text.n_heads);
    get(t, "ffn", c.text.ffn);
    get(t, "mean_only", c.text.mean_only);
  }
  if (j.contains("post")) {
    const auto& p = j.at("post");
    get(p, "hidden", c.post.hidden);
    get(p, "kernel", c.post.kernel);
    get(p, "n_blocks", c.post.n_blocks);
  }
  if (j.contains("flow")) {
    const auto& f = j.at("flow");
    get(f, "hidden", c.flow.hidden);
    get(f, "n_layers", c.flow.n_layers);
    get(f, "dilations", c.flow.dilations);
    get(f, "kernel", c.flow.kernel);
    if (f.contains("coupling")) c.flow.coupling = flow::coupling_from_string(f.at("coupling").get<std::string>());
  }
  if (j.contains("dur")) {
    const auto& d = j.at("dur");
    get(d, "cond", c.dur.cond);
    get(d, "filter", c.dur.filter);
    get(d, "n_couplings", c.dur.n_couplings);
    get(d, "kernel", c.dur.kernel);
  }
  if (j.contains("voc")) {
    const auto& v = j.at("voc");
    get(v, "channels", c.voc.channels);
    get(v, "upsample", c.voc.upsample);
    get(v, "res_dilations", c.voc.res_dilations);
  }
  if (j.contains("spk")) {
    const auto& s = j.at("spk");
    get(s, "hidden", c.spk.hidden);
    get(s, "min_frames", c.spk.min_frames);
  }
  c.sync();
  return c;
}

template <typename Real>
struct Model {
  ModelConfig cfg;
  textenc::TextEncoder<Real> text;
  postenc::PosteriorEncoder<Real> post;
  flow::FlowStack<Real> flow;
  duration::DurationPredictor<Real> dur;
  vocoder::Vocoder<Real> voc;

  Model(const ModelConfig& c, std::uint64_t seed) : Model(c, seed, nd::RngStreams(seed)) {}

  nn::ParamList<Real> params() {
    nn::ParamList<Real> ps;
    text.collect(ps);
    post.collect(ps);
    flow.collect(ps);
    dur.collect(ps);
    voc.collect(ps);
    return ps;
  }

 private:
  Model(const ModelConfig& c, std::uint64_t, nd::RngStreams rng)
      : cfg(c), text(c.text, rng), post(c.post, rng), flow(c.flow, rng), dur(c.dur, rng), voc(c.voc, rng) {}
};

}  // namespace zsflow::train
