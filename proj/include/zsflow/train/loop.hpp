#pragma once

#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsflow/infer/infer.hpp"
#include "zsflow/ndgrad/optim.hpp"
#include "zsflow/train/checkpoint.hpp"
#include "zsflow/train/loss.hpp"
#include "zsflow/train/sampler.hpp"

namespace zsflow::train {

struct AdaptationConfig {
  int speaker_id = 0;
  double fraction = 0.25;  // share of every batch given to the adapted speaker
  int steps = 1500;
};

struct TrainConfig {
  std::size_t batch_size = 4;
  LossConfig loss{};
  int steps = 2000;
  std::uint64_t seed = 0;
  nd::AdamWHyper optim{};
  double grad_clip = 0;   // max global norm, 0 = off
  int eval_every = 0;     // held-out SECS period, 0 = off
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::optional<AdaptationConfig> adaptation;

  void check() const {
    loss.check();
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (adaptation && !(adaptation->fraction > 0 && adaptation->fraction < 1))
      throw std::invalid_argument("adaptation fraction must lie in (0, 1)");
    if (checkpoint_every > 0 && checkpoint_dir.empty()) throw std::invalid_argument("checkpoint_every needs checkpoint_dir");
  }

  /// Desk-scale preset: the reference optimizer settings with a larger
  /// initial learning rate for the short schedule.
  static TrainConfig desk() {
    TrainConfig c;
    c.optim.lr0 = 2e-3;
    return c;
  }
};

struct StepRecord {
  int step = 0;
  double lr = 0, total = 0, recon = 0, kl = 0, dur = 0, scl = 0;
  bool scl_enabled = false;
  std::optional<double> secs_holdout;
  std::vector<std::size_t> batch, slice_starts;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step}, {"lr", r.lr},     {"loss", r.total}, {"recon", r.recon},
                   {"kl", r.kl},     {"dur", r.dur}};
  if (r.scl_enabled) j["scl"] = r.scl;
  if (r.secs_holdout) j["secs_holdout"] = *r.secs_holdout;
  return j;
}

inline nlohmann::json model_snapshot(const ModelConfig& cfg) { return {{"kind", "tts"}, {"model", to_json(cfg)}}; }

template <typename Real>
Checkpoint model_checkpoint(Model<Real>& m, std::uint64_t step) {
  return make_checkpoint(m.params(), model_snapshot(m.cfg), step);
}

/// Mean SECS between text synthesized with an item's own embedding and that
/// embedding. Items whose output is too short to embed are skipped.
template <typename Real>
std::optional<double> holdout_secs(Model<Real>& m, spkenc::SpeakerEncoder<Real>& enc,
                                   const std::vector<TrainItem>& holdout, std::uint64_t seed) {
  nd::RngStreams rng(seed);
  std::vector<double> s;
  for (const auto& it : holdout) {
    auto r = infer::synthesize(m, it.tokens, static_cast<std::size_t>(it.language_id), it.spk, {}, rng);
    try {
      audio::Waveform w{r.wav, m.cfg.sample_rate};
      s.push_back(spkenc::secs(spkenc::embed(enc, w), spkenc::SpeakerEmbedding{it.spk, {}}));
    } catch (const std::exception&) {
    }
  }
  if (s.empty()) return std::nullopt;
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

template <typename Real>
struct TrainResult {
  std::vector<StepRecord> log;
  nd::OptimState<Real> optim;
};

/// Runs tc.steps (or adaptation->steps) optimizer steps. Batches come from
/// the "sampler" stream: language-balanced, or the adaptation quarter-batch
/// policy when tc.adaptation is set. Writes one JSON record per step to
/// `metrics` when given.
template <typename Real>
TrainResult<Real> train_loop(Model<Real>& m, spkenc::SpeakerEncoder<Real>& enc, const std::vector<TrainItem>& items,
                             const TrainConfig& tc, std::ostream* metrics = nullptr,
                             const std::vector<TrainItem>* holdout = nullptr) {
  tc.check();
  nd::RngStreams rng(tc.seed);
  const auto keys = keys_of(items);
  std::optional<LanguageBalancedSampler> balanced;
  std::optional<AdaptationSampler> adapt;
  int steps = tc.steps;
  if (tc.adaptation) {
    adapt.emplace(keys, tc.adaptation->speaker_id, tc.batch_size, tc.adaptation->fraction);
    steps = tc.adaptation->steps;
  } else {
    balanced.emplace(keys);
  }
  auto params = m.params();
  const std::span<nd::Parameter<Real>* const> pspan(params);
  TrainResult<Real> res;
  res.optim.hyper = tc.optim;
  for (int step = 0; step < steps; ++step) {
    auto& sampler_eng = rng.stream("sampler");
    auto idx = adapt ? adapt->batch(sampler_eng) : balanced->batch(tc.batch_size, sampler_eng);
    std::vector<const TrainItem*> batch;
    for (auto i : idx) batch.push_back(&items[i]);

    nd::Tape<Real> tape;
    nn::Context<Real> ctx(tape, true);
    auto lb = total_loss(ctx, m, &enc, batch, tc.loss, rng);
    StepRecord r;
    r.step = step;
    r.lr = res.optim.lr();
    r.total = lb.value(lb.total);
    r.recon = lb.value(lb.recon);
    r.kl = lb.value(lb.kl);
    r.dur = lb.value(lb.dur);
    r.scl = lb.value(lb.scl);
    r.scl_enabled = tc.loss.scl;
    r.batch = idx;
    r.slice_starts = lb.slice_starts;

    nd::zero_grads(pspan);
    tape.backward(lb.total);
    if (tc.grad_clip > 0) nd::clip_grad_norm(pspan, tc.grad_clip);
    nd::adamw_step(pspan, res.optim);

    if (holdout && !holdout->empty() && tc.eval_every > 0 && (step + 1) % tc.eval_every == 0)
      r.secs_holdout = holdout_secs(m, enc, *holdout, tc.seed);
    if (tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0)
      save_checkpoint(tc.checkpoint_dir / ("step_" + std::to_string(step + 1) + ".zsfc"),
                      model_checkpoint(m, static_cast<std::uint64_t>(step + 1)));
    if (metrics) *metrics << to_json(r).dump() << '\n' << std::flush;
    res.log.push_back(std::move(r));
  }
  return res;
}

}  // namespace zsflow::train
