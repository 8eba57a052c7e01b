#pragma once

// Toy speaker encoder (phi), SECS, EER and the speaker consistency loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "zsflow/audio/corpus.hpp"
#include "zsflow/audio/stft.hpp"
#include "zsflow/io/binary.hpp"
#include "zsflow/ndgrad/optim.hpp"
#include "zsflow/nn/layers.hpp"

namespace zsflow::spkenc {

using nd::Var;
using nn::Context;

class SpkEncError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EmbeddingSource { reference_audio, generated_audio };

/// Stored unnormalized; comparisons normalize internally.
struct SpeakerEmbedding {
  std::vector<float> vector;
  EmbeddingSource source = EmbeddingSource::reference_audio;

  std::size_t dim() const { return vector.size(); }
};

struct SpkEncConfig {
  std::size_t n_fft = 512;
  std::size_t hop = 128;
  std::size_t hidden = 64;
  std::size_t d_spk = 32;
  std::size_t min_frames = 8;
};

/// Log-power features, scaled to keep the first activation out of saturation.
template <typename Real>
Var<Real> log_features(const Var<Real>& power) {
  return nd::scale(nd::log(nd::add_scalar(power, Real(1e-6))), Real(0.1));
}

/// conv(k3) -> tanh -> conv(k3, dilation 2) -> tanh -> temporal mean -> linear.
template <typename Real>
struct SpeakerEncoder {
  SpkEncConfig cfg;
  nn::Conv1d<Real> conv1, conv2;
  nn::Linear<Real> proj;

  SpeakerEncoder() = default;
  SpeakerEncoder(const SpkEncConfig& c, nd::RngStreams& rng) : cfg(c) {
    const std::size_t bins = c.n_fft / 2 + 1;
    conv1 = nn::Conv1d<Real>("spkenc.conv1", bins, c.hidden, 3, 1, rng);
    conv2 = nn::Conv1d<Real>("spkenc.conv2", c.hidden, c.hidden, 3, 2, rng);
    proj = nn::Linear<Real>("spkenc.proj", c.hidden, c.d_spk, rng);
  }

  audio::StftConfig stft() const { return {cfg.n_fft, cfg.hop, audio::Padding::center}; }

  /// features: T x bins (output of log_features). Returns 1 x d_spk.
  Var<Real> forward(Context<Real>& ctx, const Var<Real>& features) {
    if (features.rows() < cfg.min_frames)
      throw SpkEncError("embed: need at least " + std::to_string(cfg.min_frames) + " frames, got " +
                        std::to_string(features.rows()));
    auto h = nd::tanh(conv1(ctx, features));
    h = nd::tanh(conv2(ctx, h));
    return proj(ctx, nd::mean_rows(h));
  }

  /// Differentiable embedding of a waveform on the tape (used by SCL).
  Var<Real> embed_wav(Context<Real>& ctx, const Var<Real>& wav) {
    return forward(ctx, log_features(audio::stft_power(wav, stft())));
  }

  void collect(nn::ParamList<Real>& out) {
    conv1.collect(out);
    conv2.collect(out);
    proj.collect(out);
  }
};

/// Feature matrix (T x bins) from magnitudes, matching log_features on power.
template <typename Real>
nd::DiffArray<Real> features_of(const audio::LinearSpectrogram& spec) {
  nd::DiffArray<Real> f({spec.frames, spec.bins});
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const double m = spec.magnitudes[i];
    f.data[i] = static_cast<Real>(0.1 * std::log(m * m + 1e-6));
  }
  return f;
}

template <typename Real>
SpeakerEmbedding embed(SpeakerEncoder<Real>& enc, const audio::LinearSpectrogram& spec,
                       EmbeddingSource source = EmbeddingSource::reference_audio) {
  nd::Tape<Real> tape;
  Context<Real> ctx(tape, false);
  auto e = enc.forward(ctx, tape.constant(features_of<Real>(spec)));
  SpeakerEmbedding out;
  out.source = source;
  for (Real v : e.value()) out.vector.push_back(static_cast<float>(v));
  if (!nd::all_finite(out.vector)) throw nd::NumericFault("spkenc.embed", "non-finite speaker embedding");
  return out;
}

template <typename Real>
SpeakerEmbedding embed(SpeakerEncoder<Real>& enc, const audio::Waveform& wav,
                       EmbeddingSource source = EmbeddingSource::reference_audio) {
  return embed(enc, audio::stft_linear(wav, enc.stft()), source);
}

/// Arithmetic mean of several embeddings (multi-reference conditioning).
inline SpeakerEmbedding mean_embedding(const std::vector<SpeakerEmbedding>& es) {
  if (es.empty()) throw SpkEncError("mean_embedding: no embeddings");
  SpeakerEmbedding out;
  out.source = es.front().source;
  out.vector.assign(es.front().dim(), 0.0f);
  for (const auto& e : es) {
    if (e.dim() != out.dim()) throw SpkEncError("mean_embedding: dimension mismatch");
    for (std::size_t i = 0; i < e.dim(); ++i) out.vector[i] += e.vector[i] / static_cast<float>(es.size());
  }
  return out;
}

inline double secs(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) throw SpkEncError("secs: dimension mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) throw SpkEncError("secs: zero vector");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

inline double secs(const SpeakerEmbedding& a, const SpeakerEmbedding& b) { return secs(a.vector, b.vector); }

/// -(alpha / n) * sum_i cos(g_i, h_i) over embedding pairs already on the tape.
template <typename Real>
Var<Real> scl_from_embeddings(const std::vector<Var<Real>>& gt, const std::vector<Var<Real>>& gen, Real alpha) {
  if (gt.empty()) throw SpkEncError("scl_loss: empty batch");
  if (gt.size() != gen.size()) throw SpkEncError("scl_loss: batch size mismatch");
  if (!(alpha > 0)) throw SpkEncError("scl_loss: alpha must be positive");
  Var<Real> acc;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    auto c = nd::cosine_similarity(gt[i], gen[i]);
    acc = acc.valid() ? nd::add(acc, c) : c;
  }
  return nd::scale(acc, -alpha / static_cast<Real>(gt.size()));
}

/// Speaker consistency loss on waveforms. phi is evaluated with frozen
/// parameters; ground-truth embeddings are detached, so only gen_wavs receive
/// gradient.
template <typename Real>
Var<Real> scl_loss(SpeakerEncoder<Real>& enc, const std::vector<Var<Real>>& gt_wavs,
                   const std::vector<Var<Real>>& gen_wavs, Real alpha) {
  if (gt_wavs.empty()) throw SpkEncError("scl_loss: empty batch");
  if (gt_wavs.size() != gen_wavs.size()) throw SpkEncError("scl_loss: batch size mismatch");
  auto& tape = gen_wavs.front().tape();
  Context<Real> frozen(tape, false);
  std::vector<Var<Real>> g, h;
  for (std::size_t i = 0; i < gt_wavs.size(); ++i) {
    auto ge = enc.embed_wav(frozen, gt_wavs[i]);
    g.push_back(tape.constant(ge.shape(), ge.value()));
    h.push_back(enc.embed_wav(frozen, gen_wavs[i]));
  }
  return scl_from_embeddings(g, h, alpha);
}

/// Equal error rate by threshold sweep. A trial is accepted when score >=
/// threshold; candidate thresholds lie below, between and above all distinct
/// scores. Returns (FAR + FRR) / 2 at the threshold minimizing |FAR - FRR|;
/// among ties the smallest such average is returned.
inline double eer(std::vector<double> genuine, std::vector<double> impostor) {
  if (genuine.empty() || impostor.empty()) throw SpkEncError("eer: empty score list");
  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());
  std::vector<double> all(genuine);
  all.insert(all.end(), impostor.begin(), impostor.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  const double ng = static_cast<double>(genuine.size()), ni = static_cast<double>(impostor.size());
  // Sweep thresholds upward; counts below the threshold advance monotonically.
  std::size_t gi = 0, ii = 0;
  double best_gap = std::numeric_limits<double>::infinity(), best = 1.0;
  auto consider = [&] {
    const double frr = static_cast<double>(gi) / ng;
    const double far = static_cast<double>(impostor.size() - ii) / ni;
    const double gap = std::abs(far - frr), avg = 0.5 * (far + frr);
    if (gap < best_gap - 1e-15 || (std::abs(gap - best_gap) <= 1e-15 && avg < best)) {
      best_gap = gap;
      best = avg;
    }
  };
  consider();  // threshold below every score
  for (double s : all) {
    while (gi < genuine.size() && genuine[gi] <= s) ++gi;
    while (ii < impostor.size() && impostor[ii] <= s) ++ii;
    consider();  // threshold just above s
  }
  return best;
}

struct ScoreFile {
  std::vector<double> genuine, impostor;
};

/// Two-column text: label score. Labels 1/genuine/target vs 0/impostor/nontarget.
inline ScoreFile read_score_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw SpkEncError("cannot open score file " + path.string());
  ScoreFile out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ls(line);
    std::string label;
    double score;
    if (!(ls >> label >> score))
      throw SpkEncError(path.string() + ":" + std::to_string(lineno) + ": expected 'label score'");
    if (label == "1" || label == "genuine" || label == "target")
      out.genuine.push_back(score);
    else if (label == "0" || label == "impostor" || label == "nontarget")
      out.impostor.push_back(score);
    else
      throw SpkEncError(path.string() + ":" + std::to_string(lineno) + ": unknown label '" + label + "'");
  }
  return out;
}

// ---------------------------------------------------------------- embedding container

inline constexpr char kEmbeddingMagic[4] = {'Z', 'S', 'F', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void write_embeddings(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, SpeakerEmbedding>>& items) {
  const std::uint32_t dim = items.empty() ? 0 : static_cast<std::uint32_t>(items.front().second.dim());
  for (const auto& [name, e] : items)
    if (e.dim() != dim) throw SpkEncError("write_embeddings: mixed dimensions");
  io::write_atomic(path, [&](std::ostream& os) {
    os.write(kEmbeddingMagic, 4);
    io::put<std::uint32_t>(os, kEmbeddingVersion);
    io::put<std::uint32_t>(os, dim);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(items.size()));
    for (const auto& [name, e] : items) {
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      io::put_bytes(os, name);
      os.write(reinterpret_cast<const char*>(e.vector.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    }
  });
}

inline std::vector<std::pair<std::string, SpeakerEmbedding>> read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open embedding file " + path.string());
  if (io::get_bytes(is, 4, "magic") != std::string(kEmbeddingMagic, 4))
    throw io::FormatError(path.string() + ": not an embedding container");
  if (io::get<std::uint32_t>(is, "version") != kEmbeddingVersion)
    throw io::FormatError(path.string() + ": unsupported embedding container version");
  const auto dim = io::get<std::uint32_t>(is, "dim");
  const auto count = io::get<std::uint32_t>(is, "count");
  std::vector<std::pair<std::string, SpeakerEmbedding>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = io::get<std::uint32_t>(is, "name length");
    std::string name = io::get_bytes(is, len, "name");
    SpeakerEmbedding e;
    e.vector = io::get_floats(is, dim, "vector");
    out.emplace_back(std::move(name), std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------- training

struct SpkTrainConfig {
  int steps = 400;
  std::size_t speakers_per_batch = 8;
  std::size_t crops_per_speaker = 3;
  std::size_t crop_frames = 24;
  double lr = 3e-3;
  double heldout_fraction = 0.25;
  std::uint64_t seed = 0;
};

struct SpkTrainReport {
  std::vector<double> losses;
  double heldout_eer = 1.0;
  double intra_secs = 0, inter_secs = 0;
};

/// Angular-prototypical episode loss. For each of N speakers the first crop is
/// the query and the mean of the remaining crops the prototype; logits are
/// w * cos(query_i, proto_j) + b and the loss is cross-entropy on the diagonal.
template <typename Real>
Var<Real> angular_prototypical_loss(const std::vector<std::vector<Var<Real>>>& crops, const Var<Real>& w,
                                    const Var<Real>& b) {
  const std::size_t N = crops.size();
  if (N < 2) throw SpkEncError("angular_prototypical_loss: need at least 2 speakers");
  std::vector<Var<Real>> queries, protos;
  for (const auto& spk : crops) {
    if (spk.size() < 2) throw SpkEncError("angular_prototypical_loss: need at least 2 crops per speaker");
    queries.push_back(spk[0]);
    auto p = spk[1];
    for (std::size_t m = 2; m < spk.size(); ++m) p = nd::add(p, spk[m]);
    protos.push_back(p);  // direction only matters for the cosine
  }
  std::vector<Var<Real>> cells;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) cells.push_back(nd::reshape(nd::cosine_similarity(queries[i], protos[j]), {1, 1}));
  auto S = nd::reshape(nd::concat_rows(cells), {N, N});
  auto logits = nd::add(nd::mul(S, w), b);
  auto lsm = nd::log_softmax(logits);
  std::vector<Real> eye(N * N, Real(0));
  for (std::size_t i = 0; i < N; ++i) eye[i * N + i] = Real(1);
  auto& tape = S.tape();
  return nd::scale(nd::sum(nd::mul(lsm, tape.constant({N, N}, eye))), Real(-1) / static_cast<Real>(N));
}

struct SplitCorpus {
  // per speaker: list of feature matrices
  std::map<int, std::vector<nd::DiffArray<float>>> train, heldout;
};

/// Whole-utterance features grouped by speaker; the last heldout_fraction of
/// each speaker's utterances is held out.
inline SplitCorpus split_features(const std::vector<audio::Utterance>& utts, const audio::StftConfig& stft,
                                  double heldout_fraction) {
  std::map<int, std::vector<nd::DiffArray<float>>> by_spk;
  for (const auto& u : utts) by_spk[u.speaker_id].push_back(features_of<float>(audio::stft_linear(u.wav, stft)));
  SplitCorpus out;
  for (auto& [spk, feats] : by_spk) {
    const std::size_t n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(heldout_fraction * feats.size())));
    if (feats.size() < n_hold + 1) throw SpkEncError("train_spkenc: speaker " + std::to_string(spk) + " has too few utterances");
    for (std::size_t i = 0; i < feats.size(); ++i)
      (i + n_hold < feats.size() ? out.train : out.heldout)[spk].push_back(std::move(feats[i]));
  }
  return out;
}

template <typename Real>
SpeakerEmbedding embed_features(SpeakerEncoder<Real>& enc, const nd::DiffArray<float>& f) {
  nd::Tape<Real> tape;
  Context<Real> ctx(tape, false);
  std::vector<Real> v(f.data.begin(), f.data.end());
  auto e = enc.forward(ctx, tape.constant(f.shape, std::move(v)));
  SpeakerEmbedding out;
  for (Real x : e.value()) out.vector.push_back(static_cast<float>(x));
  return out;
}

/// Pairwise SECS over held-out utterances: returns EER and mean intra/inter SECS.
template <typename Real>
void evaluate_heldout(SpeakerEncoder<Real>& enc, const SplitCorpus& split, SpkTrainReport& report) {
  std::vector<std::pair<int, SpeakerEmbedding>> es;
  for (const auto& [spk, feats] : split.heldout)
    for (const auto& f : feats) es.emplace_back(spk, embed_features(enc, f));
  std::vector<double> gen, imp;
  for (std::size_t i = 0; i < es.size(); ++i)
    for (std::size_t j = i + 1; j < es.size(); ++j)
      (es[i].first == es[j].first ? gen : imp).push_back(secs(es[i].second, es[j].second));
  report.heldout_eer = (gen.empty() || imp.empty()) ? 1.0 : eer(gen, imp);
  auto avg = [](const std::vector<double>& v) { return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  report.intra_secs = avg(gen);
  report.inter_secs = avg(imp);
}

template <typename Real>
struct SpkEncTrained {
  SpeakerEncoder<Real> encoder;
  SpkTrainReport report;
};

/// Episodic training: every step samples speakers_per_batch speakers and
/// crops_per_speaker random crops of crop_frames frames from their training
/// utterances.
template <typename Real>
SpkEncTrained<Real> train_spkenc(const std::vector<audio::Utterance>& utts, const SpkEncConfig& cfg,
                                 const SpkTrainConfig& tc) {
  std::set<int> speakers;
  for (const auto& u : utts) speakers.insert(u.speaker_id);
  if (speakers.size() < 2) throw SpkEncError("train_spkenc: corpus needs at least 2 speakers");
  nd::RngStreams rng(tc.seed);
  SpkEncTrained<Real> out{SpeakerEncoder<Real>(cfg, rng), {}};
  auto& enc = out.encoder;
  nd::Parameter<Real> w{"spkenc.loss.w", nd::DiffArray<Real>({1}, Real(10)), false};
  nd::Parameter<Real> b{"spkenc.loss.b", nd::DiffArray<Real>({1}, Real(-5)), false};
  nn::ParamList<Real> params;
  enc.collect(params);
  params.push_back(&w);
  params.push_back(&b);
  nd::OptimState<Real> opt;
  opt.hyper.lr0 = tc.lr;
  opt.hyper.beta1 = 0.9;
  opt.hyper.beta2 = 0.999;
  opt.hyper.weight_decay = 0.0;
  opt.hyper.gamma = 1.0;

  const auto split = split_features(utts, enc.stft(), tc.heldout_fraction);
  std::vector<int> spk_ids;
  for (const auto& [s, _] : split.train) spk_ids.push_back(s);
  auto& eng = rng.stream("episodes");
  const std::size_t N = std::min(tc.speakers_per_batch, spk_ids.size());
  for (int step = 0; step < tc.steps; ++step) {
    std::vector<int> chosen = spk_ids;
    std::shuffle(chosen.begin(), chosen.end(), eng);
    chosen.resize(N);
    nd::Tape<Real> tape;
    Context<Real> ctx(tape, true);
    std::vector<std::vector<Var<Real>>> crops(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto& feats = split.train.at(chosen[i]);
      for (std::size_t m = 0; m < tc.crops_per_speaker; ++m) {
        const auto& f = feats[std::uniform_int_distribution<std::size_t>(0, feats.size() - 1)(eng)];
        const std::size_t T = f.rows(), len = std::min(tc.crop_frames, T);
        const std::size_t start = std::uniform_int_distribution<std::size_t>(0, T - len)(eng);
        std::vector<Real> v(f.data.begin() + static_cast<long>(start * f.cols()),
                            f.data.begin() + static_cast<long>((start + len) * f.cols()));
        crops[i].push_back(enc.forward(ctx, tape.constant({len, f.cols()}, std::move(v))));
      }
    }
    auto loss = angular_prototypical_loss(crops, ctx(w), ctx(b));
    out.report.losses.push_back(static_cast<double>(loss.item()));
    nd::zero_grads(std::span<nd::Parameter<Real>* const>(params));
    tape.backward(loss);
    nd::adamw_step(std::span<nd::Parameter<Real>* const>(params), opt);
    w.array.data[0] = std::max(w.array.data[0], Real(1e-3));
  }
  evaluate_heldout(enc, split, out.report);
  return out;
}

}  // namespace zsflow::spkenc
