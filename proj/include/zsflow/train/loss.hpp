#pragma once

// Training objective: weighted spectral reconstruction of a random latent
// slice, latent KL against the MAS-aligned prior (with the flow log-det),
// duration NLL and, optionally, the speaker consistency loss.

#include <cmath>
#include <string>
#include <vector>

#include "zsflow/train/data.hpp"

namespace zsflow::train {

struct LossConfig {
  double w_recon = 45.0;
  double w_kl = 1.0;
  double w_dur = 1.0;
  double alpha = 9.0;  // SCL weight
  bool scl = false;
  std::size_t seg_frames = 16;

  void check() const {
    if (w_recon < 0 || w_kl < 0 || w_dur < 0 || alpha < 0) throw std::invalid_argument("loss weights must be >= 0");
    if (seg_frames < 1) throw std::invalid_argument("seg_frames must be positive");
  }
};

template <typename Real>
struct LossBreakdown {
  nd::Var<Real> total, recon, kl, dur, scl;  // scl invalid when disabled
  std::vector<duration::Durations> alignments;
  std::vector<std::size_t> slice_starts;

  double value(const nd::Var<Real>& v) const { return v.valid() ? static_cast<double>(v.item()) : 0.0; }
};

template <typename Real>
void check_finite(const nd::Var<Real>& v, const std::string& component) {
  for (Real x : v.value())
    if (!std::isfinite(static_cast<double>(x))) throw nd::NumericFault(component, "non-finite " + component + " loss");
}

/// Batch mean of each component. The speaker encoder is only used (frozen)
/// when SCL is enabled. Posterior noise and slice positions come from the
/// "posterior" and "slice" streams of rng.
template <typename Real>
LossBreakdown<Real> total_loss(nn::Context<Real>& ctx, Model<Real>& m, spkenc::SpeakerEncoder<Real>* enc,
                               const std::vector<const TrainItem*>& batch, const LossConfig& lc, nd::RngStreams& rng) {
  lc.check();
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (lc.scl && !enc) throw std::invalid_argument("total_loss: SCL needs a speaker encoder");
  auto& tape = ctx.tape();
  const auto& cfg = m.cfg;
  LossBreakdown<Real> out;
  std::vector<nd::Var<Real>> recon, kl, dur, gen_wavs, gt_wavs;
  for (const TrainItem* it : batch) {
    const std::size_t T = it->frames();
    auto g = tape.constant({1, cfg.d_spk}, std::vector<Real>(it->spk.begin(), it->spk.end()));
    auto text = m.text(ctx, {it->tokens, static_cast<std::size_t>(it->language_id)});
    auto lang = m.text.language_vector(ctx, static_cast<std::size_t>(it->language_id));
    auto feats = tape.constant(it->features.shape, std::vector<Real>(it->features.data.begin(), it->features.data.end()));
    auto q = m.post(ctx, feats, &g, nullptr, &rng, "posterior");
    auto fl = m.flow.forward(ctx, q.z, &g);

    // Alignment search on current values; no gradient passes through it.
    nd::DiffArray<Real> zp(fl.z.shape(), Real(0)), mu(text.prior.mu.shape(), Real(0)), ls(mu.shape, Real(0));
    zp.data = fl.z.value();
    mu.data = text.prior.mu.value();
    ls.data = text.prior.log_sigma.value();
    auto d = duration::mas(duration::gaussian_log_lik(zp, mu, ls), it->tokens.size(), T);
    out.alignments.push_back(d);

    auto frame_prior = duration::expand_prior(text.prior, d);
    kl.push_back(postenc::kl_flow_sample(fl.z, q.log_sigma, frame_prior.mu, frame_prior.log_sigma, fl.log_det));
    dur.push_back(duration::duration_nll(ctx, m.dur, d, text.hidden, g, lang));

    std::vector<Real> wav(it->wav.begin(), it->wav.end());
    auto seg = vocoder::slice_segments(q.z, wav, std::min(lc.seg_frames, T), cfg.stft.hop, rng.stream("slice"));
    out.slice_starts.push_back(seg.start);
    auto y = m.voc(ctx, seg.z, g);
    auto target = tape.constant({seg.wav.size()}, seg.wav);
    recon.push_back(vocoder::spectral_loss(y, target));
    if (lc.scl) {
      gen_wavs.push_back(y);
      gt_wavs.push_back(target);
    }
  }
  auto mean_of = [](const std::vector<nd::Var<Real>>& v) {
    nd::Var<Real> s = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) s = nd::add(s, v[i]);
    return nd::scale(s, Real(1) / static_cast<Real>(v.size()));
  };
  out.recon = mean_of(recon);
  out.kl = mean_of(kl);
  out.dur = mean_of(dur);
  check_finite(out.recon, "recon");
  check_finite(out.kl, "kl");
  check_finite(out.dur, "dur");
  out.total = nd::add(nd::add(nd::scale(out.recon, Real(lc.w_recon)), nd::scale(out.kl, Real(lc.w_kl))),
                      nd::scale(out.dur, Real(lc.w_dur)));
  if (lc.scl) {
    out.scl = spkenc::scl_loss(*enc, gt_wavs, gen_wavs, Real(lc.alpha));
    check_finite(out.scl, "scl");
    out.total = nd::add(out.total, out.scl);
  }
  check_finite(out.total, "total");
  return out;
}

}  // namespace zsflow::train
