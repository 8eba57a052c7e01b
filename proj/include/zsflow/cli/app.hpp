#pragma once

// The zsflow command line. Lives in a header so tests can drive it in-process.
// Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric fault.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zsflow/audio/corpus.hpp"
#include "zsflow/audio/wav_io.hpp"
#include "zsflow/cli/stats.hpp"
#include "zsflow/infer/infer.hpp"
#include "zsflow/train/loop.hpp"

namespace zsflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- files

inline json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void write_text_atomic(const fs::path& p, const std::string& s) {
  io::write_atomic(p, [&](std::ostream& os) { os << s; });
}

inline void write_wav_atomic(const fs::path& p, const audio::Waveform& w) {
  io::write_atomic(p, [&](std::ostream& os) { audio::write_wav(os, w); });
}

inline audio::Waveform read_wav_at(const fs::path& p, int sample_rate) {
  auto w = audio::read_wav(p);
  if (w.sample_rate != sample_rate)
    throw DataError(p.string() + ": sample rate " + std::to_string(w.sample_rate) + ", model expects " +
                    std::to_string(sample_rate));
  return w;
}

inline std::vector<audio::Utterance> utterances_from_manifest(const fs::path& manifest) {
  std::vector<audio::Utterance> out;
  for (const auto& e : audio::read_manifest(manifest).entries) {
    fs::path p = e.wav_path;
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.push_back({audio::read_wav(p), e.speaker_id, e.language_id, e.text, e.durations});
  }
  return out;
}

// ---------------------------------------------------------------- checkpoints

inline json spkenc_snapshot(const spkenc::SpkEncConfig& c) {
  return {{"kind", "spkenc"},
          {"spk",
           {{"n_fft", c.n_fft}, {"hop", c.hop}, {"hidden", c.hidden}, {"d_spk", c.d_spk}, {"min_frames", c.min_frames}}}};
}

inline void save_spkenc(const fs::path& p, spkenc::SpeakerEncoder<float>& enc) {
  nn::ParamList<float> ps;
  enc.collect(ps);
  train::save_checkpoint(p, train::make_checkpoint(ps, spkenc_snapshot(enc.cfg), 0));
}

inline const json& expect_kind(const train::Checkpoint& c, const std::string& kind, const fs::path& p) {
  if (!c.config.contains("kind") || c.config.at("kind") != kind)
    throw DataError(p.string() + ": not a " + kind + " checkpoint");
  return c.config;
}

inline spkenc::SpeakerEncoder<float> load_spkenc(const fs::path& p) {
  auto c = train::load_checkpoint(p);
  const auto& s = expect_kind(c, "spkenc", p).at("spk");
  spkenc::SpkEncConfig cfg;
  cfg.n_fft = s.at("n_fft");
  cfg.hop = s.at("hop");
  cfg.hidden = s.at("hidden");
  cfg.d_spk = s.at("d_spk");
  cfg.min_frames = s.at("min_frames");
  nd::RngStreams rng(0);
  spkenc::SpeakerEncoder<float> enc(cfg, rng);
  nn::ParamList<float> ps;
  enc.collect(ps);
  train::load_exact(c, ps);
  return enc;
}

inline std::unique_ptr<train::Model<float>> load_model(const fs::path& p) {
  auto c = train::load_checkpoint(p);
  auto cfg = train::model_config_from_json(expect_kind(c, "tts", p).at("model"));
  auto m = std::make_unique<train::Model<float>>(cfg, 0);
  train::load_exact(c, m->params());
  return m;
}

inline void check_compatible(const train::ModelConfig& m, const spkenc::SpeakerEncoder<float>& enc) {
  if (enc.cfg.d_spk != m.d_spk)
    throw DataError("speaker encoder gives " + std::to_string(enc.cfg.d_spk) + "-dim embeddings, model expects " +
                    std::to_string(m.d_spk));
}

/// Mean of per-file embeddings.
inline std::vector<float> reference_embedding(spkenc::SpeakerEncoder<float>& enc, const std::vector<std::string>& wavs,
                                              int sample_rate) {
  if (wavs.empty()) throw DataError("need at least one reference wav");
  std::vector<spkenc::SpeakerEmbedding> es;
  for (const auto& w : wavs) es.push_back(spkenc::embed(enc, read_wav_at(w, sample_rate)));
  return spkenc::mean_embedding(es).vector;
}

// ---------------------------------------------------------------- config

/// {"model": {...}, "train": {...}}; both optional. Model keys overlay the
/// desk preset.
inline train::ModelConfig model_config(const json& file, const std::string& alphabet, std::size_t n_languages,
                                       std::size_t d_spk) {
  auto base = train::ModelConfig::desk(textenc::char_vocab({alphabet}), n_languages);
  base.d_spk = d_spk;
  base.sync();
  json j = train::to_json(base);
  if (file.contains("model")) j.merge_patch(file.at("model"));
  auto c = train::model_config_from_json(j);
  if (c.d_spk != d_spk) throw DataError("config d_spk disagrees with the speaker encoder");
  c.n_languages = std::max(c.n_languages, n_languages);
  c.sync();
  return c;
}

inline void apply_train_json(const json& file, train::TrainConfig& tc) {
  if (!file.contains("train")) return;
  const auto& t = file.at("train");
  auto get = [&](const char* k, auto& dst) {
    if (t.contains(k)) t.at(k).get_to(dst);
  };
  get("batch_size", tc.batch_size);
  get("steps", tc.steps);
  get("lr0", tc.optim.lr0);
  get("gamma", tc.optim.gamma);
  get("grad_clip", tc.grad_clip);
  get("w_recon", tc.loss.w_recon);
  get("w_kl", tc.loss.w_kl);
  get("w_dur", tc.loss.w_dur);
  get("alpha", tc.loss.alpha);
  get("scl", tc.loss.scl);
  get("seg_frames", tc.loss.seg_frames);
}

struct TrainFlags {
  std::vector<std::string> manifests;
  std::string spkenc, out, config, metrics, init_from, checkpoint_dir, alphabet = "abcdefghijklmnopqrstuvwxyz";
  std::uint64_t seed = 0;
  std::optional<int> steps;
  std::optional<std::size_t> batch_size;
  bool scl = false, row_copy = false;
  int checkpoint_every = 0;
  // adapt only
  std::string ckpt;
  int speaker = 0;
  double fraction = 0.25;
};

inline std::vector<train::TrainItem> load_items(const std::vector<std::string>& manifests, const train::ModelConfig& cfg,
                                               spkenc::SpeakerEncoder<float>& enc) {
  std::vector<train::TrainItem> items;
  for (const auto& m : manifests) {
    auto v = train::items_from_manifest(m, cfg, enc);
    items.insert(items.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  if (items.empty()) throw DataError("no training items");
  return items;
}

inline std::size_t max_language(const std::vector<std::string>& manifests) {
  int n = 0;
  for (const auto& m : manifests)
    for (const auto& e : audio::read_manifest(m).entries) n = std::max(n, e.language_id + 1);
  return static_cast<std::size_t>(n);
}

inline void run_training(train::Model<float>& m, spkenc::SpeakerEncoder<float>& enc,
                         const std::vector<train::TrainItem>& items, train::TrainConfig tc, const TrainFlags& f,
                         std::ostream& out) {
  tc.seed = f.seed;
  if (f.steps) (tc.adaptation ? tc.adaptation->steps : tc.steps) = *f.steps;
  if (f.batch_size) tc.batch_size = *f.batch_size;
  if (f.scl) tc.loss.scl = true;
  tc.checkpoint_every = f.checkpoint_every;
  if (!f.checkpoint_dir.empty()) {
    tc.checkpoint_dir = f.checkpoint_dir;
    fs::create_directories(tc.checkpoint_dir);
  }
  std::ofstream metrics;
  if (!f.metrics.empty()) {
    metrics.open(f.metrics, std::ios::trunc);
    if (!metrics) throw DataError("cannot open " + f.metrics);
  }
  auto res = train::train_loop(m, enc, items, tc, f.metrics.empty() ? nullptr : &metrics);
  const auto steps = static_cast<std::uint64_t>(res.log.size());
  train::save_checkpoint(f.out, train::model_checkpoint(m, steps));
  json summary{{"out", f.out}, {"steps", steps}, {"items", items.size()}};
  if (!res.log.empty()) {
    summary["first_loss"] = res.log.front().total;
    summary["final_loss"] = res.log.back().total;
  }
  out << summary.dump() << '\n';
}

// ---------------------------------------------------------------- commands

inline void cmd_synth_corpus(const audio::CorpusConfig& cc, const std::string& dir, std::ostream& out) {
  auto m = audio::synth_corpus(cc, dir);
  out << json{{"manifest", (fs::path(dir) / "manifest.jsonl").string()},
              {"utterances", m.entries.size()},
              {"speakers", m.speakers().size()},
              {"languages", m.languages().size()}}
             .dump()
      << '\n';
}

struct PreprocessFlags {
  std::string manifest, out;
  double target_db = -27.0, frame_ms = 30.0, threshold_db = -45.0;
  bool no_trim = false;
};

inline void cmd_preprocess(const PreprocessFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path src = f.manifest, dir = f.out;
  const auto man = audio::read_manifest(src);
  fs::create_directories(dir / "wavs");
  audio::CorpusManifest result;
  std::size_t clipped = 0;
  for (const auto& e : man.entries) {
    fs::path p = e.wav_path;
    if (p.is_relative()) p = src.parent_path() / p;
    auto w = audio::read_wav(p);
    if (!f.no_trim) w = audio::trim_silence(w, f.frame_ms, f.threshold_db);
    auto n = audio::rms_normalize(w, f.target_db);
    if (n.clipped) {
      err << p.string() << ": " << n.clipped << " samples clipped\n";
      ++clipped;
    }
    auto entry = e;
    entry.wav_path = "wavs/" + p.filename().string();
    if (!f.no_trim) entry.durations.clear();  // no longer aligned after trimming
    audio::write_wav(dir / entry.wav_path, n.wav);
    result.entries.push_back(std::move(entry));
  }
  audio::write_manifest(dir / "manifest.jsonl", result);
  out << json{{"manifest", (dir / "manifest.jsonl").string()}, {"files", result.entries.size()}, {"clipped_files", clipped}}
             .dump()
      << '\n';
}

struct SpkFlags {
  std::vector<std::string> manifests;
  std::string out;
  spkenc::SpkEncConfig cfg;
  spkenc::SpkTrainConfig tc;
};

inline void cmd_train_spkenc(const SpkFlags& f, std::ostream& out) {
  std::vector<audio::Utterance> utts;
  for (const auto& m : f.manifests) {
    auto v = utterances_from_manifest(m);
    utts.insert(utts.end(), v.begin(), v.end());
  }
  auto res = spkenc::train_spkenc<float>(utts, f.cfg, f.tc);
  save_spkenc(f.out, res.encoder);
  out << json{{"out", f.out},
              {"heldout_eer", res.report.heldout_eer},
              {"intra_secs", res.report.intra_secs},
              {"inter_secs", res.report.inter_secs},
              {"final_loss", res.report.losses.empty() ? 0.0 : res.report.losses.back()}}
             .dump()
      << '\n';
}

inline void cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  auto enc = load_spkenc(f.spkenc);
  const json file = f.config.empty() ? json::object() : read_json_file(f.config);
  auto cfg = model_config(file, f.alphabet, max_language(f.manifests), enc.cfg.d_spk);
  auto items = load_items(f.manifests, cfg, enc);
  train::Model<float> m(cfg, f.seed);
  if (!f.init_from.empty()) {
    auto rep = train::load_partial(train::load_checkpoint(f.init_from), m.params(), f.row_copy);
    err << json{{"init_from", f.init_from},
                {"loaded", rep.loaded.size()},
                {"reinitialized", rep.reinitialized},
                {"row_copied", rep.row_copied}}
               .dump()
        << '\n';
  }
  auto tc = train::TrainConfig::desk();
  apply_train_json(file, tc);
  run_training(m, enc, items, tc, f, out);
}

inline void cmd_adapt(const TrainFlags& f, std::ostream& out) {
  auto enc = load_spkenc(f.spkenc);
  auto m = load_model(f.ckpt);
  check_compatible(m->cfg, enc);
  auto items = load_items(f.manifests, m->cfg, enc);
  auto tc = train::TrainConfig::desk();
  if (!f.config.empty()) apply_train_json(read_json_file(f.config), tc);
  tc.adaptation = train::AdaptationConfig{f.speaker, f.fraction, 1500};
  run_training(*m, enc, items, tc, f, out);
}

struct SynthFlags {
  std::string ckpt, spkenc, text, out;
  std::vector<std::string> refs;
  std::size_t language = 0;
  std::uint64_t seed = 0;
  double noise_scale = 0.667, duration_noise_scale = 0.8;
};

inline void cmd_synthesize(const SynthFlags& f, std::ostream& out) {
  auto m = load_model(f.ckpt);
  auto enc = load_spkenc(f.spkenc);
  check_compatible(m->cfg, enc);
  if (f.language >= m->cfg.n_languages)
    throw textenc::TextError("unknown language id " + std::to_string(f.language));
  const auto tokens = m->cfg.vocabulary().encode(f.text);
  const auto spk = reference_embedding(enc, f.refs, m->cfg.sample_rate);
  nd::RngStreams rng(f.seed);
  auto r = infer::synthesize(*m, tokens, f.language, spk, {f.noise_scale, f.duration_noise_scale}, rng);
  write_wav_atomic(f.out, {r.wav, m->cfg.sample_rate});
  out << json{{"out", f.out}, {"samples", r.wav.size()}, {"durations", r.durations}}.dump() << '\n';
}

struct VcFlags {
  std::string ckpt, spkenc, src, out;
  std::vector<std::string> src_refs, tgt_refs;
};

inline nd::DiffArray<float> posterior_features(const audio::Waveform& w, const train::ModelConfig& cfg) {
  const std::size_t T = w.size() / cfg.stft.hop;
  if (T * cfg.stft.hop < cfg.stft.n_fft) throw audio::AudioError("source utterance is too short");
  audio::Waveform cut = w;
  cut.samples.resize(T * cfg.stft.hop);
  return postenc::spectrogram_features<float>(audio::stft_linear(cut, cfg.stft));
}

inline void cmd_voice_convert(const VcFlags& f, std::ostream& out) {
  auto m = load_model(f.ckpt);
  auto enc = load_spkenc(f.spkenc);
  check_compatible(m->cfg, enc);
  const auto src = read_wav_at(f.src, m->cfg.sample_rate);
  const auto e_src = reference_embedding(enc, f.src_refs.empty() ? std::vector<std::string>{f.src} : f.src_refs,
                                         m->cfg.sample_rate);
  const auto e_tgt = reference_embedding(enc, f.tgt_refs, m->cfg.sample_rate);
  const auto feats = posterior_features(src, m->cfg);
  auto wav = infer::voice_convert(*m, feats, e_src, e_tgt);
  write_wav_atomic(f.out, {wav, m->cfg.sample_rate});
  out << json{{"out", f.out}, {"samples", wav.size()}, {"frames", feats.rows()}}.dump() << '\n';
}

inline void cmd_embed(const std::string& spk, const std::vector<std::string>& wavs, const std::string& dst,
                      std::ostream& out) {
  auto enc = load_spkenc(spk);
  std::vector<std::pair<std::string, spkenc::SpeakerEmbedding>> items;
  for (const auto& w : wavs) items.emplace_back(fs::path(w).filename().string(), spkenc::embed(enc, audio::read_wav(w)));
  spkenc::write_embeddings(dst, items);
  out << json{{"out", dst}, {"count", items.size()}, {"dim", enc.cfg.d_spk}}.dump() << '\n';
}

struct SecsFlags {
  std::string spkenc, pairs, dir_a, dir_b, out;
};

/// Pairs file: two paths per line, relative to the pairs file. Directory mode
/// pairs files with the same name.
inline std::vector<std::pair<fs::path, fs::path>> secs_pairs(const SecsFlags& f) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (!f.pairs.empty()) {
    std::ifstream is(f.pairs);
    if (!is) throw DataError("cannot open pairs file " + f.pairs);
    const fs::path base = fs::path(f.pairs).parent_path();
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string a, b;
      if (!(ls >> a)) continue;
      if (a[0] == '#') continue;
      if (!(ls >> b)) throw DataError(f.pairs + ": expected two paths per line");
      auto resolve = [&](const std::string& s) { return fs::path(s).is_relative() ? base / s : fs::path(s); };
      pairs.emplace_back(resolve(a), resolve(b));
    }
  } else {
    if (f.dir_a.empty() || f.dir_b.empty()) throw CLI::ValidationError("eval-secs needs --pairs or --dir-a and --dir-b");
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(f.dir_a))
      if (e.path().extension() == ".wav") names.insert(e.path().filename().string());
    for (const auto& n : names)
      if (fs::exists(fs::path(f.dir_b) / n)) pairs.emplace_back(fs::path(f.dir_a) / n, fs::path(f.dir_b) / n);
  }
  if (pairs.empty()) throw DataError("eval-secs: no pairs to score");
  return pairs;
}

inline void cmd_eval_secs(const SecsFlags& f, std::ostream& out) {
  auto enc = load_spkenc(f.spkenc);
  const auto pairs = secs_pairs(f);
  std::map<fs::path, std::vector<float>> cache;
  auto emb = [&](const fs::path& p) -> const std::vector<float>& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, spkenc::embed(enc, audio::read_wav(p)).vector).first;
    return it->second;
  };
  std::ostringstream lines;
  double sum = 0;
  for (const auto& [a, b] : pairs) {
    const double s = spkenc::secs(emb(a), emb(b));
    sum += s;
    lines << json{{"a", a.string()}, {"b", b.string()}, {"secs", s}}.dump() << '\n';
  }
  lines << json{{"mean", sum / static_cast<double>(pairs.size())}, {"count", pairs.size()}}.dump() << '\n';
  if (f.out.empty())
    out << lines.str();
  else
    write_text_atomic(f.out, lines.str());
}

inline void cmd_eval_eer(const std::string& scores, std::ostream& out) {
  auto s = spkenc::read_score_file(scores);
  out << json{{"eer", spkenc::eer(s.genuine, s.impostor)}, {"genuine", s.genuine.size()}, {"impostor", s.impostor.size()}}
             .dump()
      << '\n';
}

inline void cmd_stats_ci(const std::string& scores, std::ostream& out) {
  auto c = stats_ci(read_scores(scores));
  out << json{{"mean", c.mean}, {"half_width", c.half_width}, {"n", c.n}, {"formatted", format_ci(c)}}.dump() << '\n';
}

// ---------------------------------------------------------------- entry

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"zero-shot multi-speaker TTS and voice conversion at desk scale", "zsflow"};
  app.require_subcommand(1);

  audio::CorpusConfig cc;
  std::string corpus_out;
  auto* synth = app.add_subcommand("synth-corpus", "render a synthetic multi-speaker corpus");
  synth->add_option("--out", corpus_out, "output directory")->required();
  synth->add_option("--seed", cc.seed);
  synth->add_option("--speakers", cc.n_speakers);
  synth->add_option("--languages", cc.n_languages);
  synth->add_option("--utterances", cc.utterances_per_speaker, "utterances per speaker");

  PreprocessFlags pf;
  auto* pre = app.add_subcommand("preprocess", "trim silence and normalize loudness");
  pre->add_option("--manifest", pf.manifest)->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pf.out, "output directory")->required();
  pre->add_option("--target-db", pf.target_db);
  pre->add_option("--frame-ms", pf.frame_ms);
  pre->add_option("--threshold-db", pf.threshold_db);
  pre->add_flag("--no-trim", pf.no_trim);

  SpkFlags sf;
  auto* tspk = app.add_subcommand("train-spkenc", "train the speaker encoder");
  tspk->add_option("--manifest", sf.manifests)->required()->check(CLI::ExistingFile);
  tspk->add_option("--out", sf.out)->required();
  tspk->add_option("--seed", sf.tc.seed);
  tspk->add_option("--steps", sf.tc.steps);
  tspk->add_option("--d-spk", sf.cfg.d_spk);
  tspk->add_option("--hidden", sf.cfg.hidden);

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train the synthesis model");
  tr->add_option("--manifest", tf.manifests)->required()->check(CLI::ExistingFile);
  tr->add_option("--spkenc", tf.spkenc)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tf.out)->required();
  tr->add_option("--config", tf.config)->check(CLI::ExistingFile);
  tr->add_option("--seed", tf.seed);
  tr->add_option("--steps", tf.steps);
  tr->add_option("--batch-size", tf.batch_size);
  tr->add_option("--metrics", tf.metrics, "JSONL metrics log");
  tr->add_option("--init-from", tf.init_from, "partial restore from a checkpoint")->check(CLI::ExistingFile);
  tr->add_flag("--row-copy", tf.row_copy, "copy overlapping rows of resized tables");
  tr->add_flag("--scl", tf.scl, "enable the speaker consistency loss");
  tr->add_option("--alphabet", tf.alphabet);
  tr->add_option("--checkpoint-every", tf.checkpoint_every);
  tr->add_option("--checkpoint-dir", tf.checkpoint_dir);

  TrainFlags af;
  auto* ad = app.add_subcommand("adapt", "fine-tune towards one speaker");
  ad->add_option("--manifest", af.manifests)->required()->check(CLI::ExistingFile);
  ad->add_option("--spkenc", af.spkenc)->required()->check(CLI::ExistingFile);
  ad->add_option("--ckpt", af.ckpt)->required()->check(CLI::ExistingFile);
  ad->add_option("--speaker", af.speaker)->required();
  ad->add_option("--out", af.out)->required();
  ad->add_option("--config", af.config)->check(CLI::ExistingFile);
  ad->add_option("--seed", af.seed);
  ad->add_option("--steps", af.steps, "default 1500");
  ad->add_option("--fraction", af.fraction, "share of each batch for the speaker");
  ad->add_option("--batch-size", af.batch_size);
  ad->add_option("--metrics", af.metrics);
  ad->add_flag("--scl", af.scl);

  SynthFlags yf;
  auto* sy = app.add_subcommand("synthesize", "text to speech in the voice of reference recordings");
  sy->add_option("--ckpt", yf.ckpt)->required()->check(CLI::ExistingFile);
  sy->add_option("--spkenc", yf.spkenc)->required()->check(CLI::ExistingFile);
  sy->add_option("--text", yf.text)->required();
  sy->add_option("--language", yf.language);
  sy->add_option("--ref", yf.refs, "reference wav(s)")->required()->check(CLI::ExistingFile);
  sy->add_option("--out", yf.out)->required();
  sy->add_option("--seed", yf.seed);
  sy->add_option("--noise-scale", yf.noise_scale)->check(CLI::NonNegativeNumber);
  sy->add_option("--duration-noise-scale", yf.duration_noise_scale)->check(CLI::NonNegativeNumber);

  VcFlags vf;
  auto* vc = app.add_subcommand("voice-convert", "convert a recording to another voice");
  vc->add_option("--ckpt", vf.ckpt)->required()->check(CLI::ExistingFile);
  vc->add_option("--spkenc", vf.spkenc)->required()->check(CLI::ExistingFile);
  vc->add_option("--src", vf.src)->required()->check(CLI::ExistingFile);
  vc->add_option("--src-ref", vf.src_refs, "defaults to the source itself")->check(CLI::ExistingFile);
  vc->add_option("--tgt-ref", vf.tgt_refs)->required()->check(CLI::ExistingFile);
  vc->add_option("--out", vf.out)->required();

  std::string ef_spk, ef_out;
  std::vector<std::string> ef_wavs;
  auto* em = app.add_subcommand("embed", "write speaker embeddings of wav files");
  em->add_option("--spkenc", ef_spk)->required()->check(CLI::ExistingFile);
  em->add_option("--out", ef_out)->required();
  em->add_option("wavs", ef_wavs)->required()->check(CLI::ExistingFile);

  SecsFlags cf;
  auto* es = app.add_subcommand("eval-secs", "speaker encoder cosine similarity over pairs");
  es->add_option("--spkenc", cf.spkenc)->required()->check(CLI::ExistingFile);
  es->add_option("--pairs", cf.pairs)->check(CLI::ExistingFile);
  es->add_option("--dir-a", cf.dir_a)->check(CLI::ExistingDirectory);
  es->add_option("--dir-b", cf.dir_b)->check(CLI::ExistingDirectory);
  es->add_option("--out", cf.out);

  std::string eer_scores;
  auto* ee = app.add_subcommand("eval-eer", "equal error rate of a labelled score file");
  ee->add_option("--scores", eer_scores)->required()->check(CLI::ExistingFile);

  std::string ci_scores;
  auto* ci = app.add_subcommand("stats-ci", "mean with 95% confidence interval");
  ci->add_option("--scores", ci_scores)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) cmd_synth_corpus(cc, corpus_out, out);
    if (pre->parsed()) cmd_preprocess(pf, out, err);
    if (tspk->parsed()) cmd_train_spkenc(sf, out);
    if (tr->parsed()) cmd_train(tf, out, err);
    if (ad->parsed()) cmd_adapt(af, out);
    if (sy->parsed()) cmd_synthesize(yf, out);
    if (vc->parsed()) cmd_voice_convert(vf, out);
    if (em->parsed()) cmd_embed(ef_spk, ef_wavs, ef_out, out);
    if (es->parsed()) cmd_eval_secs(cf, out);
    if (ee->parsed()) cmd_eval_eer(eer_scores, out);
    if (ci->parsed()) cmd_stats_ci(ci_scores, out);
  } catch (const CLI::Error& e) {
    err << "zsflow: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nd::NumericFault& e) {
    err << "zsflow: numeric fault: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "zsflow: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace zsflow::cli
