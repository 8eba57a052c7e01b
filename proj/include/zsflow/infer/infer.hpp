#pragma once

// Inference paths: text-to-speech from a reference embedding, voice
// conversion through the flow, and plain posterior reconstruction.

#include <string>
#include <vector>

#include "zsflow/train/model.hpp"

namespace zsflow::infer {

using train::Model;

struct SynthesisOptions {
  double noise_scale = 0.667;          // prior sampling temperature
  double duration_noise_scale = 0.8;
};

struct SynthesisResult {
  std::vector<float> wav;
  duration::Durations durations;
};

template <typename Real>
nd::Var<Real> speaker_var(nd::Tape<Real>& t, const std::vector<float>& spk) {
  return t.constant({1, spk.size()}, std::vector<Real>(spk.begin(), spk.end()));
}

/// Reference embedding -> durations -> prior sample -> inverse flow -> vocoder.
/// Duration noise comes from rng stream "duration", prior noise from "prior".
template <typename Real>
SynthesisResult synthesize(Model<Real>& m, const std::vector<std::size_t>& tokens, std::size_t language_id,
                           const std::vector<float>& spk, const SynthesisOptions& opt, nd::RngStreams& rng) {
  if (spk.size() != m.cfg.d_spk) throw nd::ShapeError("synthesize: speaker embedding has the wrong size");
  if (opt.noise_scale < 0 || opt.duration_noise_scale < 0) throw std::invalid_argument("noise scales must be >= 0");
  nd::Tape<Real> t;
  nn::Context<Real> ctx(t, false);
  auto g = speaker_var(t, spk);
  auto text = m.text(ctx, {tokens, language_id});
  auto lang = m.text.language_vector(ctx, language_id);
  auto eps_d = rng.normals<Real>("duration", tokens.size());
  SynthesisResult r;
  r.durations = duration::sample_durations(m.dur, text.hidden, g, lang, opt.duration_noise_scale, eps_d);
  auto prior = duration::expand_prior(text.prior, r.durations);
  const std::size_t T = prior.mu.rows(), D = m.cfg.d_z;
  auto eps = rng.normals<Real>("prior", T * D);
  for (auto& e : eps) e *= static_cast<Real>(opt.noise_scale);
  auto z_p = nd::add(prior.mu, nd::mul(nd::exp(prior.log_sigma), t.constant({T, D}, eps)));
  auto z = m.flow.inverse(ctx, z_p, &g);
  auto y = m.voc(ctx, z, g);
  r.wav.assign(y.value().begin(), y.value().end());
  return r;
}

template <typename Real>
nd::Var<Real> posterior_mean(nn::Context<Real>& ctx, Model<Real>& m, const nd::DiffArray<float>& features,
                             const nd::Var<Real>& g) {
  auto& t = ctx.tape();
  auto f = t.constant(features.shape, std::vector<Real>(features.data.begin(), features.data.end()));
  return m.post(ctx, f, &g, nullptr).mu;
}

/// Posterior mean under e_src, flow to the speaker-independent space with
/// e_src, back with e_tgt, vocode with e_tgt. Output has frames * hop samples.
template <typename Real>
std::vector<float> voice_convert(Model<Real>& m, const nd::DiffArray<float>& src_features,
                                 const std::vector<float>& e_src, const std::vector<float>& e_tgt) {
  nd::Tape<Real> t;
  nn::Context<Real> ctx(t, false);
  auto gs = speaker_var(t, e_src), gt = speaker_var(t, e_tgt);
  auto z = posterior_mean(ctx, m, src_features, gs);
  auto z_p = m.flow.forward(ctx, z, &gs).z;
  auto y = m.voc(ctx, m.flow.inverse(ctx, z_p, &gt), gt);
  return {y.value().begin(), y.value().end()};
}

/// Vocoder applied to the posterior mean: the autoencoding path.
template <typename Real>
std::vector<float> reconstruct(Model<Real>& m, const nd::DiffArray<float>& features, const std::vector<float>& spk) {
  nd::Tape<Real> t;
  nn::Context<Real> ctx(t, false);
  auto g = speaker_var(t, spk);
  auto y = m.voc(ctx, posterior_mean(ctx, m, features, g), g);
  return {y.value().begin(), y.value().end()};
}

}  // namespace zsflow::infer
