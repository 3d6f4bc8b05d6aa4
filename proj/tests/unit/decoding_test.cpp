#include "mine/decoding/decoding.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "mine/core/error.hpp"
#include "mine/core/rng.hpp"
#include "mine/model/mine_model.hpp"
#include "support/decode_oracles.hpp"

using namespace mine;
using namespace mine::decoding;
using namespace mine::testing;

namespace {

data::Vocabulary tiny_vocab() {
  const std::vector<std::string> w = {"red strap", "zip broke"};
  return data::Vocabulary::build(w);
}

model::MineModel tiny_mine(std::uint64_t seed) {
  model::MineConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.ffn_hidden = 16;
  c.patch_size = 4;
  c.image_size = 8;
  c.max_text_len = 8;
  return model::MineModel(c, tiny_vocab(), seed);
}

Tensor random_z(const model::MineModel& m, std::uint64_t seed) {
  Rng rng(seed);
  data::ImageRaster img(8, 8);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  std::vector<std::size_t> prompt = {7, 8, 9, 10};
  return m.encode_grounded(prompt, m.encode_image(img));
}

DecodeConfig beam_cfg(std::size_t beam, std::size_t max_len) {
  DecodeConfig c;
  c.method = Method::kBeam;
  c.beam_size = beam;
  c.max_len = max_len;
  return c;
}

}  // namespace

TEST(Config, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate(100));
  EXPECT_THROW(c.validate(10), ContractError);  // k = 50 > vocab
  c.k = 5;
  c.beam_size = 0;
  EXPECT_THROW(c.validate(10), ContractError);
  c.beam_size = 1;
  c.p = 0.0;
  EXPECT_THROW(c.validate(10), ContractError);
  c.p = 1.0;
  EXPECT_NO_THROW(c.validate(10));
  EXPECT_EQ(parse_method(method_name(Method::kNucleus)), Method::kNucleus);
  EXPECT_THROW(parse_method("sample"), ParseError);
}

TEST(Beam, SizeOneIsGreedyOnRandomMineModels) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = tiny_mine(seed);
    const Tensor z = random_z(m, seed + 100);
    const StepFn step = mine_step(m, z);
    const Decoded g = greedy(step, data::kEos, 6);
    const Decoded b = beam_search(step, data::kEos, beam_cfg(1, 6));
    EXPECT_EQ(g.tokens, b.tokens) << seed;
    EXPECT_EQ(g.terminated, b.terminated) << seed;
    EXPECT_DOUBLE_EQ(g.log_prob, b.log_prob) << seed;
  }
}

TEST(Beam, SizeOneIsGreedyOnTableModels) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const StepFn step = table_model(seed, 6);
    const Decoded g = greedy(step, 0, 5);
    const Decoded b = beam_search(step, 0, beam_cfg(1, 5));
    EXPECT_EQ(g.tokens, b.tokens);
    EXPECT_EQ(g.terminated, b.terminated);
    EXPECT_EQ(g.log_prob, b.log_prob);
  }
}

TEST(Beam, ExhaustiveArgmaxOnTinyVocab) {
  for (std::size_t vocab = 2; vocab <= 4; ++vocab) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const StepFn step = table_model(seed, vocab);
      const std::size_t eos = seed % vocab;
      Best best;
      std::vector<std::size_t> prefix;
      enumerate(step, eos, vocab, 3, prefix, 0.0, best);
      const Decoded b = beam_search(step, eos, beam_cfg(64, 3));
      ASSERT_TRUE(best.found);
      EXPECT_TRUE(b.terminated);
      EXPECT_EQ(b.tokens, best.tokens) << vocab << " " << seed;
      EXPECT_NEAR(b.log_prob, best.log_prob, 1e-12);
    }
  }
}

TEST(Beam, ExhaustiveArgmaxOnMineModel) {
  // Masking leaves [EOS] and the two words: an effective vocabulary of 3.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = tiny_mine(seed);
    const StepFn step = mine_step(m, random_z(m, seed));
    Best best;
    std::vector<std::size_t> prefix;
    enumerate(step, data::kEos, m.vocab().size(), 3, prefix, 0.0, best);
    const Decoded b = beam_search(step, data::kEos, beam_cfg(64, 3));
    EXPECT_EQ(b.tokens, best.tokens);
    EXPECT_NEAR(b.log_prob, best.log_prob, 1e-12);
  }
}

TEST(Beam, NeverBelowGreedy) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const StepFn step = table_model(seed, 5, 1.0);
    const Decoded g = greedy(step, 0, 6);
    for (std::size_t beam : {1, 2, 3, 5, 10}) {
      const Decoded b = beam_search(step, 0, beam_cfg(beam, 6));
      if (g.terminated && b.terminated) {
        EXPECT_GE(b.log_prob, g.log_prob - 1e-12) << seed << " beam " << beam;
      }
    }
  }
}

TEST(Beam, UnterminatedAtMaxLen) {
  // [EOS] (id 0) is never allowed.
  const StepFn step = [](std::span<const std::size_t>) { return std::vector<double>{kNegInf, std::log(0.7), std::log(0.3)}; };
  const Decoded b = beam_search(step, 0, beam_cfg(3, 4));
  EXPECT_FALSE(b.terminated);
  EXPECT_EQ(b.tokens, (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_NEAR(b.log_prob, 4 * std::log(0.7), 1e-12);
  const Decoded g = greedy(step, 0, 4);
  EXPECT_FALSE(g.terminated);
}

TEST(Beam, TiesGoToSmallerSequence) {
  const StepFn step = [](std::span<const std::size_t> prefix) {
    if (prefix.empty()) return std::vector<double>{kNegInf, std::log(0.5), std::log(0.5)};
    return std::vector<double>{0.0, kNegInf, kNegInf};
  };
  const Decoded b = beam_search(step, 0, beam_cfg(4, 3));
  EXPECT_EQ(b.tokens, (std::vector<std::size_t>{1}));
}

TEST(Beam, NoSpecialTokensFromMine) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = tiny_mine(seed);
    const Decoded b = beam_search(mine_step(m, random_z(m, seed)), data::kEos, beam_cfg(4, 7));
    for (std::size_t t : b.tokens) {
      EXPECT_NE(t, data::kPad);
      EXPECT_NE(t, data::kDec);
    }
  }
}

TEST(TopK, CandidateSets) {
  const std::vector<double> p = {0.05, 0.4, 0.3, 0.2, 0.05, 0.0};
  EXPECT_EQ(top_k_candidates(p, 1, 0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(top_k_candidates(p, 2, 4), (std::vector<std::size_t>{1, 2, 4}));   // eos kept
  EXPECT_EQ(top_k_candidates(p, 2, 1), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_k_candidates(p, 4, 4), (std::vector<std::size_t>{1, 2, 3, 0, 4}));  // tie 0/4 by id
  EXPECT_EQ(top_k_candidates(p, 6, 5), (std::vector<std::size_t>{1, 2, 3, 0, 4}));  // zero mass excluded
}

TEST(TopK, KOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const StepFn step = table_model(seed, 7);
    DecodeConfig c;
    c.k = 1;
    c.max_len = 8;
    c.seed = seed;
    const Decoded s = top_k_sample(step, 0, c);
    const Decoded g = greedy(step, 0, 8);
    EXPECT_EQ(s.tokens, g.tokens);
    EXPECT_EQ(s.terminated, g.terminated);
  }
}

TEST(TopK, EmittedTokensInTopKOnReplay) {
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; steps < 1000; ++seed) {
    const StepFn step = table_model(seed, 12);
    DecodeConfig c;
    c.k = 1 + seed % 6;
    c.max_len = 10;
    c.seed = seed;
    top_k_sample(step, 3, c, [&](std::span<const double> probs, std::span<const std::size_t> cand, std::size_t tok) {
      ++steps;
      const auto rank = oracle_rank(probs);
      std::set<std::size_t> allowed(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(std::min(c.k, rank.size())));
      if (c.k > 1) allowed.insert(3);
      EXPECT_EQ(std::set<std::size_t>(cand.begin(), cand.end()), allowed);
      EXPECT_TRUE(allowed.count(tok));
    });
  }
}

TEST(TopK, FullVocabularyMatchesDistribution) {
  const std::vector<double> p = {0.05, 0.4, 0.3, 0.15, 0.1};
  std::vector<std::size_t> all(p.size());
  std::iota(all.begin(), all.end(), 0);
  const auto cand = top_k_candidates(p, p.size(), 0);
  EXPECT_EQ(std::set<std::size_t>(cand.begin(), cand.end()), std::set<std::size_t>(all.begin(), all.end()));
  Rng rng(123);
  const int n = 10000;
  std::vector<int> counts(p.size(), 0);
  for (int i = 0; i < n; ++i) ++counts[sample_from(p, cand, rng)];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double sigma = std::sqrt(n * p[i] * (1 - p[i]));
    EXPECT_LE(std::abs(counts[i] - n * p[i]), 3 * sigma) << i;
  }
}

TEST(Nucleus, CandidateSets) {
  const std::vector<double> p = {0.6, 0.3, 0.1};
  EXPECT_EQ(nucleus_candidates(p, 3, 0.8), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(nucleus_candidates(p, 3, 1.0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(nucleus_candidates(p, 3, 0.6), (std::vector<std::size_t>{0}));
  // k first: {0, 1} renormalized to (2/3, 1/3); 0.7 needs both.
  EXPECT_EQ(nucleus_candidates(p, 2, 0.7), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(nucleus_candidates(p, 2, 0.6), (std::vector<std::size_t>{0}));
}

TEST(Nucleus, InvariantsOverSampledSteps) {
  std::size_t steps = 0;
  for (std::uint64_t seed = 0; steps < 1000; ++seed) {
    const StepFn step = table_model(seed, 10, 1.5);
    DecodeConfig c;
    c.method = Method::kNucleus;
    c.k = 2 + seed % 9;
    c.p = 0.5 + 0.05 * static_cast<double>(seed % 10);
    c.max_len = 10;
    c.seed = seed;
    nucleus_sample(step, 0, c, [&](std::span<const double> probs, std::span<const std::size_t> cand, std::size_t tok) {
      ++steps;
      ASSERT_FALSE(cand.empty());
      const auto rank = oracle_rank(probs);
      const std::size_t kk = std::min(c.k, rank.size());
      double total = 0.0;
      for (std::size_t i = 0; i < kk; ++i) total += probs[rank[i]];
      // The set is a prefix of the ranking within the top k.
      ASSERT_LE(cand.size(), kk);
      for (std::size_t i = 0; i < cand.size(); ++i) EXPECT_EQ(cand[i], rank[i]);
      double mass = 0.0;
      for (std::size_t i : cand) mass += probs[i] / total;
      EXPECT_GE(mass, c.p - 1e-9);
      EXPECT_LT(mass - probs[cand.back()] / total, c.p);  // minimal
      EXPECT_TRUE(std::find(cand.begin(), cand.end(), tok) != cand.end());
    });
  }
}

TEST(Nucleus, FullSettingSamplesWholeDistribution) {
  const std::vector<double> p = {0.25, 0.25, 0.5};
  EXPECT_EQ(nucleus_candidates(p, 3, 1.0).size(), 3u);
}

TEST(Sampling, DeterministicGivenSeed) {
  const StepFn step = table_model(5, 9, 1.0);
  DecodeConfig c;
  c.k = 5;
  c.max_len = 12;
  c.seed = 42;
  for (Method m : {Method::kTopK, Method::kNucleus}) {
    c.method = m;
    const Decoded a = decode(step, 0, c), b = decode(step, 0, c);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.log_prob, b.log_prob);
  }
}
