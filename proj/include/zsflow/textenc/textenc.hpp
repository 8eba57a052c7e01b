#pragma once

// Character transformer encoder with concatenated language embeddings. Emits
// hidden states and the token-level prior (mu, log_sigma) over the latent.

#include <cmath>
#include <string>
#include <vector>

#include "zsflow/nn/layers.hpp"
#include "zsflow/textenc/vocab.hpp"

namespace zsflow::textenc {

using nd::Var;
using nn::Context;

inline constexpr std::size_t kLanguageDim = 4;
inline constexpr double kLogSigmaMin = -9.0;
inline constexpr double kLogSigmaMax = 2.0;

struct TextEncConfig {
  std::size_t vocab_size = 0;
  std::size_t n_languages = 1;
  std::size_t d_h = 64;
  std::size_t d_z = 16;
  std::size_t n_blocks = 2;
  std::size_t n_heads = 2;
  std::size_t ffn = 128;
  bool mean_only = false;  // unit-variance prior when set

  /// Full-size transformer from the reference system (not used at desk scale).
  static TextEncConfig paper(std::size_t vocab_size, std::size_t n_languages) {
    TextEncConfig c;
    c.vocab_size = vocab_size;
    c.n_languages = n_languages;
    c.d_h = 196;
    c.d_z = 192;
    c.n_blocks = 10;
    c.n_heads = 2;
    c.ffn = 768;
    return c;
  }
};

struct CharSequence {
  std::vector<std::size_t> token_ids;
  std::size_t language_id = 0;
};

template <typename Real>
struct PriorStats {
  Var<Real> mu, log_sigma;  // L x d_z
};

template <typename Real>
struct EncodedText {
  Var<Real> hidden;  // L x d_h
  PriorStats<Real> prior;
};

/// Fixed sinusoidal position table, L x d.
template <typename Real>
std::vector<Real> sinusoidal_positions(std::size_t L, std::size_t d) {
  std::vector<Real> pe(L * d);
  for (std::size_t p = 0; p < L; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe[p * d + i] = static_cast<Real>(i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate));
    }
  return pe;
}

template <typename Real>
struct TransformerBlock {
  nn::Linear<Real> wq, wk, wv, wo, ff1, ff2;
  nd::Parameter<Real> ln1_g, ln1_b, ln2_g, ln2_b;
  std::size_t heads = 2;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t d, std::size_t n_heads, std::size_t ffn, nd::RngStreams& rng)
      : wq(name + ".wq", d, d, rng),
        wk(name + ".wk", d, d, rng),
        wv(name + ".wv", d, d, rng),
        wo(name + ".wo", d, d, rng),
        ff1(name + ".ff1", d, ffn, rng),
        ff2(name + ".ff2", ffn, d, rng),
        ln1_g(nn::make_param<Real>(name + ".ln1.gamma", {d}, nn::Init::ones, d, rng)),
        ln1_b(nn::make_param<Real>(name + ".ln1.beta", {d}, nn::Init::zeros, d, rng)),
        ln2_g(nn::make_param<Real>(name + ".ln2.gamma", {d}, nn::Init::ones, d, rng)),
        ln2_b(nn::make_param<Real>(name + ".ln2.beta", {d}, nn::Init::zeros, d, rng)),
        heads(n_heads) {
    if (d % n_heads) throw TextError("d_h must be divisible by n_heads");
    for (auto* p : {&ln1_g, &ln1_b, &ln2_g, &ln2_b}) p->weight_decay = false;
  }

  /// Post-LN: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
  Var<Real> operator()(Context<Real>& ctx, const Var<Real>& x) {
    const std::size_t d = x.cols(), dk = d / heads;
    auto q = wq(ctx, x), k = wk(ctx, x), v = wv(ctx, x);
    std::vector<Var<Real>> outs;
    for (std::size_t h = 0; h < heads; ++h) {
      auto qh = nd::slice_cols(q, h * dk, dk), kh = nd::slice_cols(k, h * dk, dk), vh = nd::slice_cols(v, h * dk, dk);
      auto att = nd::softmax(nd::scale(nd::matmul(qh, nd::transpose(kh)), Real(1) / std::sqrt(static_cast<Real>(dk))));
      outs.push_back(nd::matmul(att, vh));
    }
    auto a = wo(ctx, heads == 1 ? outs[0] : nd::concat_cols(outs));
    auto y = nd::layer_norm(nd::add(x, a), ctx(ln1_g), ctx(ln1_b));
    auto f = ff2(ctx, nd::relu(ff1(ctx, y)));
    return nd::layer_norm(nd::add(y, f), ctx(ln2_g), ctx(ln2_b));
  }

  void collect(nn::ParamList<Real>& out) {
    for (auto* l : {&wq, &wk, &wv, &wo, &ff1, &ff2}) l->collect(out);
    for (auto* p : {&ln1_g, &ln1_b, &ln2_g, &ln2_b}) out.push_back(p);
  }
};

template <typename Real>
struct TextEncoder {
  TextEncConfig cfg;
  nd::Parameter<Real> char_emb;  // vocab x (d_h - 4)
  nd::Parameter<Real> lang_emb;  // n_languages x 4
  std::vector<TransformerBlock<Real>> blocks;
  nn::Linear<Real> head;  // d_h -> 2 d_z (mu | log_sigma)

  TextEncoder() = default;
  TextEncoder(const TextEncConfig& c, nd::RngStreams& rng) : cfg(c) {
    if (c.vocab_size < 3) throw TextError("text encoder: vocabulary too small");
    if (c.n_languages < 1) throw TextError("text encoder: need at least one language");
    if (c.d_h <= kLanguageDim) throw TextError("text encoder: d_h must exceed the language embedding size");
    char_emb = nn::make_param<Real>("textenc.char_emb", {c.vocab_size, c.d_h - kLanguageDim}, nn::Init::normal, 0, rng,
                                    0.3);
    lang_emb = nn::make_param<Real>("textenc.lang_emb", {c.n_languages, kLanguageDim}, nn::Init::normal, 0, rng, 0.3);
    char_emb.weight_decay = lang_emb.weight_decay = false;
    for (std::size_t i = 0; i < c.n_blocks; ++i)
      blocks.emplace_back("textenc.block" + std::to_string(i), c.d_h, c.n_heads, c.ffn, rng);
    head = nn::Linear<Real>("textenc.head", c.d_h, 2 * c.d_z, rng);
  }

  EncodedText<Real> operator()(Context<Real>& ctx, const CharSequence& seq) {
    const std::size_t L = seq.token_ids.size();
    if (L == 0) throw TextError("encode_text: empty sequence");
    if (seq.language_id >= cfg.n_languages)
      throw TextError("encode_text: unknown language_id " + std::to_string(seq.language_id));
    for (auto id : seq.token_ids)
      if (id >= cfg.vocab_size) throw TextError("encode_text: token id " + std::to_string(id) + " outside vocabulary");
    auto chars = nd::gather_rows(ctx(char_emb), seq.token_ids);
    auto langs = nd::gather_rows(ctx(lang_emb), std::vector<std::size_t>(L, seq.language_id));
    auto& tape = ctx.tape();
    auto x = nd::add(nd::concat_cols<Real>({chars, langs}),
                     tape.constant({L, cfg.d_h}, sinusoidal_positions<Real>(L, cfg.d_h)));
    for (auto& b : blocks) x = b(ctx, x);
    auto stats = head(ctx, x);
    EncodedText<Real> out;
    out.hidden = x;
    out.prior.mu = nd::slice_cols(stats, 0, cfg.d_z);
    if (cfg.mean_only)
      out.prior.log_sigma = tape.constant({L, cfg.d_z}, std::vector<Real>(L * cfg.d_z, Real(0)));
    else
      out.prior.log_sigma = nd::clamp(nd::slice_cols(stats, cfg.d_z, cfg.d_z), Real(kLogSigmaMin), Real(kLogSigmaMax));
    return out;
  }

  /// Language embedding rows for the given language (1 x 4), used by the duration predictor.
  Var<Real> language_vector(Context<Real>& ctx, std::size_t language_id) {
    if (language_id >= cfg.n_languages) throw TextError("unknown language_id " + std::to_string(language_id));
    return nd::gather_rows(ctx(lang_emb), {language_id});
  }

  void collect(nn::ParamList<Real>& out) {
    out.push_back(&char_emb);
    out.push_back(&lang_emb);
    for (auto& b : blocks) b.collect(out);
    head.collect(out);
  }
};

}  // namespace zsflow::textenc
