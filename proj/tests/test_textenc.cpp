#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/gradcheck.hpp"
#include "zsflow/ndgrad/optim.hpp"
#include "zsflow/textenc/textenc.hpp"

using namespace zsflow;
using namespace zsflow::textenc;

namespace {

TextEncConfig small_config(std::size_t n_languages = 3) {
  TextEncConfig c;
  c.vocab_size = 12;
  c.n_languages = n_languages;
  c.d_h = 16;
  c.d_z = 4;
  c.ffn = 24;
  return c;
}

std::vector<double> values(const nd::Var<double>& v) { return v.value(); }

}  // namespace

TEST(Vocab, UnionWithoutDuplicatesStableOrder) {
  auto v = char_vocab({"abcd", "cdEf"});
  std::vector<std::string> want{kPad, kBlank, "a", "b", "c", "d", "e", "f"};
  EXPECT_EQ(v.symbols(), want);
  EXPECT_EQ(char_vocab({"cdEf", "abcd"}).symbols(), want);
}

TEST(Vocab, SerializationRoundTripsBitExactly) {
  auto v = char_vocab({"hello world", "ola mundo!"});
  auto p = std::filesystem::temp_directory_path() / "zsflow_vocab.txt";
  v.save(p);
  std::ifstream is(p, std::ios::binary);
  std::stringstream first;
  first << is.rdbuf();
  auto back = Vocabulary::load(p);
  EXPECT_EQ(back, v);
  back.save(p);
  std::ifstream is2(p, std::ios::binary);
  std::stringstream second;
  second << is2.rdbuf();
  EXPECT_EQ(first.str(), second.str());
}

TEST(Vocab, UnknownCharacterNamed) {
  auto v = char_vocab({"abc"});
  EXPECT_EQ(v.encode("CaB"), (std::vector<std::size_t>{4, 2, 3}));
  try {
    v.encode("abz");
    FAIL() << "expected error";
  } catch (const TextError& e) {
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos);
  }
  EXPECT_THROW(v.encode(""), TextError);
}

TEST(TextEnc, ShapeContract) {
  nd::RngStreams rng(0);
  TextEncoder<double> enc(small_config(), rng);
  for (std::size_t L : {1u, 5u, 9u}) {
    nd::Tape<double> t;
    nn::Context<double> ctx(t, false);
    CharSequence s{std::vector<std::size_t>(L, 3), 1};
    auto out = enc(ctx, s);
    EXPECT_EQ(out.hidden.shape(), (nd::Shape{L, 16}));
    EXPECT_EQ(out.prior.mu.shape(), (nd::Shape{L, 4}));
    EXPECT_EQ(out.prior.log_sigma.shape(), (nd::Shape{L, 4}));
  }
  TextEncoder<float> def(TextEncConfig{40, 2}, rng);
  nd::Tape<float> t;
  nn::Context<float> ctx(t, false);
  auto out = def(ctx, CharSequence{{3, 4, 5}, 0});
  EXPECT_EQ(out.hidden.cols(), 64u);
  EXPECT_EQ(out.prior.mu.cols(), 16u);
  EXPECT_EQ(def.lang_emb.array.shape, (nd::Shape{2, 4}));
}

TEST(TextEnc, LanguageEmbeddingParticipates) {
  nd::RngStreams rng(1);
  TextEncoder<double> enc(small_config(), rng);
  nd::Tape<double> t;
  nn::Context<double> ctx(t, false);
  auto a = enc(ctx, {{2, 5, 7, 3}, 0}), b = enc(ctx, {{2, 5, 7, 3}, 1});
  double maxdiff = 0;
  for (std::size_t i = 0; i < a.prior.mu.size(); ++i)
    maxdiff = std::max(maxdiff, std::abs(a.prior.mu.value()[i] - b.prior.mu.value()[i]));
  EXPECT_GT(maxdiff, 1e-9);
}

TEST(TextEnc, DeterministicAndPositionSensitive) {
  nd::RngStreams rng(2);
  TextEncoder<double> enc(small_config(), rng);
  nd::Tape<double> t;
  nn::Context<double> ctx(t, false);
  auto a = enc(ctx, {{2, 5, 7, 3, 9}, 2}), b = enc(ctx, {{2, 5, 7, 3, 9}, 2});
  EXPECT_EQ(values(a.hidden), values(b.hidden));
  EXPECT_EQ(values(a.prior.mu), values(b.prior.mu));
  // Shuffle tokens and un-shuffle the outputs; positions make them differ.
  std::vector<std::size_t> perm{3, 0, 4, 1, 2}, ids{2, 5, 7, 3, 9}, shuffled;
  for (auto p : perm) shuffled.push_back(ids[p]);
  auto c = enc(ctx, {shuffled, 2});
  double maxdiff = 0;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < 16; ++j) maxdiff = std::max(maxdiff, std::abs(c.hidden.at(i, j) - a.hidden.at(perm[i], j)));
  EXPECT_GT(maxdiff, 1e-6);
}

TEST(TextEnc, Errors) {
  nd::RngStreams rng(3);
  TextEncoder<double> enc(small_config(2), rng);
  nd::Tape<double> t;
  nn::Context<double> ctx(t, false);
  EXPECT_THROW(enc(ctx, {{}, 0}), TextError);
  EXPECT_THROW(enc(ctx, {{1, 2}, 2}), TextError);
  EXPECT_THROW(enc(ctx, {{1, 99}, 0}), TextError);
}

TEST(TextEnc, MeanOnlyPriorHasUnitVariance) {
  auto c = small_config();
  c.mean_only = true;
  nd::RngStreams rng(4);
  TextEncoder<double> enc(c, rng);
  nd::Tape<double> t;
  nn::Context<double> ctx(t, false);
  auto out = enc(ctx, {{3, 4}, 0});
  for (double v : out.prior.log_sigma.value()) EXPECT_EQ(v, 0.0);
}

TEST(TextEnc, GradientOfPriorMatchesFiniteDifferences) {
  nd::RngStreams rng(5);
  auto cfg = small_config();
  TextEncoder<double> enc(cfg, rng);
  // Sampled entries of every parameter against central differences.
  nd::Tape<double> t;
  nn::Context<double> ctx(t, true);
  auto out = enc(ctx, {{2, 5, 7}, 1});
  auto loss = nd::add(nd::sum(nd::mul(out.prior.mu, out.prior.mu)), nd::sum(out.prior.log_sigma));
  nn::ParamList<double> ps;
  enc.collect(ps);
  nd::zero_grads(std::span<nd::Parameter<double>* const>(ps));
  t.backward(loss);
  auto eval = [&] {
    nd::Tape<double> t2;
    nn::Context<double> c2(t2, false);
    auto o = enc(c2, {{2, 5, 7}, 1});
    return nd::add(nd::sum(nd::mul(o.prior.mu, o.prior.mu)), nd::sum(o.prior.log_sigma)).item();
  };
  const double h = 1e-5;
  for (auto* p : ps) {
    if (p->name.find(".wk.bias") != std::string::npos) {
      // A key bias shifts every score in a row equally; softmax ignores it.
      for (double g : p->array.grad) EXPECT_NEAR(g, 0.0, 1e-10) << p->name;
      continue;
    }
    double diff = 0, scale = 0;
    for (std::size_t k = 0; k < p->array.size(); k += std::max<std::size_t>(1, p->array.size() / 7)) {
      const double x0 = p->array.data[k];
      p->array.data[k] = x0 + h;
      const double fp = eval();
      p->array.data[k] = x0 - h;
      const double fm = eval();
      p->array.data[k] = x0;
      const double fd = (fp - fm) / (2 * h);
      diff = std::max(diff, std::abs(fd - p->array.grad[k]));
      scale = std::max(scale, std::abs(fd));
    }
    EXPECT_LT(diff / (scale + 1e-8), 1e-4) << p->name;
  }
}

TEST(TextEnc, TrainingStepMovesOnlyPresentLanguageRows) {
  nd::RngStreams rng(6);
  TextEncoder<double> enc(small_config(3), rng);
  nn::ParamList<double> ps;
  enc.collect(ps);
  nd::OptimState<double> opt;
  const auto before = enc.lang_emb.array.data;
  nd::Tape<double> t;
  nn::Context<double> ctx(t, true);
  auto a = enc(ctx, {{2, 5, 7}, 1});
  auto b = enc(ctx, {{4, 4}, 1});
  auto loss = nd::add(nd::sum(nd::square(a.prior.mu)), nd::sum(nd::square(b.prior.mu)));
  nd::zero_grads(std::span<nd::Parameter<double>* const>(ps));
  t.backward(loss);
  nd::adamw_step(std::span<nd::Parameter<double>* const>(ps), opt);
  const auto& after = enc.lang_emb.array.data;
  for (std::size_t row = 0; row < 3; ++row)
    for (std::size_t c = 0; c < kLanguageDim; ++c) {
      const std::size_t k = row * kLanguageDim + c;
      if (row == 1)
        EXPECT_NE(after[k], before[k]);
      else
        EXPECT_EQ(after[k], before[k]);
    }
}

TEST(TextEnc, LogSigmaClampHoldsUnderTraining) {
  nd::RngStreams rng(7);
  TextEncoder<double> enc(small_config(), rng);
  nn::ParamList<double> ps;
  enc.collect(ps);
  nd::OptimState<double> opt;
  opt.hyper.lr0 = 0.05;
  for (int step = 0; step < 300; ++step) {
    nd::Tape<double> t;
    nn::Context<double> ctx(t, true);
    auto o = enc(ctx, {{2, 5, 7, 3}, 0});
    // Push the first half of channels up and the rest down without bound.
    auto ls = o.prior.log_sigma;
    auto loss = nd::sub(nd::sum(nd::slice_cols(ls, 2, 2)), nd::sum(nd::slice_cols(ls, 0, 2)));
    for (double v : ls.value()) {
      ASSERT_GE(v, kLogSigmaMin);
      ASSERT_LE(v, kLogSigmaMax);
    }
    nd::zero_grads(std::span<nd::Parameter<double>* const>(ps));
    t.backward(loss);
    nd::adamw_step(std::span<nd::Parameter<double>* const>(ps), opt);
  }
}
