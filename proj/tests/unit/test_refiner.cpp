#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "prefiner/gradcheck.hpp"
#include "prefiner/heads.hpp"
#include "prefiner/refiner.hpp"

using namespace prefiner;
using namespace testing_helpers;

namespace {

PhraseVectors random_phrases(std::size_t p, std::size_t c, std::uint64_t seed) {
  PhraseVectors out;
  for (std::size_t i = 0; i < p; ++i) {
    out.emplace_back(random_tensor({c}, seed + 2 * i), random_tensor({c}, seed + 2 * i + 1));
  }
  return out;
}

RefinerParams params_for(std::size_t c, std::size_t heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return RefinerParams::init(c, heads, rng);
}

void set_identity(Tensor& w) {
  const std::size_t c = w.dim(0);
  auto d = w.mutable_data();
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) d[i * c + j] = i == j ? 1.0 : 0.0;
  }
}

void zero(Tensor& w) {
  for (double& x : w.mutable_data()) x = 0.0;
}

}  // namespace

TEST(Refiner, VariantNamesRoundTrip) {
  EXPECT_EQ(all_variants().size(), 8u);
  for (Variant v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_TRUE(throws_code([] { parse_variant("bogus"); }, ErrorCode::InvalidArgument));
}

TEST(Refiner, EmptyChainIsIdentityBitExact) {
  RefinerParams p = params_for(8, 2, 1);
  Tensor g = random_tensor({4, 3, 8}, 2);
  RefinerConfig cfg;
  Tensor out = refine(p, cfg, g, PhraseVectors{});
  EXPECT_EQ(out.values(), g.values());
  cfg.empty_chain_identity = false;
  EXPECT_TRUE(throws_code([&] { refine(p, cfg, g, PhraseVectors{}); }, ErrorCode::EmptyChain));
}

TEST(Refiner, ResidualIdentityWithZeroedValues) {
  RefinerParams p = params_for(8, 2, 3);
  set_identity(p.residual_w);
  for (AttentionParams* a : {&p.spatial, &p.temporal}) {
    zero(a->w_v);
    zero(a->w_o);
  }
  Tensor g = random_tensor({4, 3, 8}, 4);
  for (Variant v : all_variants()) {
    if (v == Variant::parallel_sum) continue;  // sums W O0 once per branch
    RefinerConfig cfg;
    cfg.variant = v;
    Tensor out = refine(p, cfg, g, random_phrases(3, 8, 5));
    EXPECT_LT(max_abs_diff(out, g), 1e-12) << to_string(v);
  }
}

TEST(Refiner, EveryVariantPreservesShape) {
  RefinerParams p = params_for(8, 2, 6);
  Tensor g = random_tensor({4, 3, 8}, 7);
  for (Variant v : all_variants()) {
    RefinerConfig cfg;
    cfg.variant = v;
    EXPECT_EQ(refine(p, cfg, g, random_phrases(2, 8, 8)).shape(), g.shape()) << to_string(v);
  }
}

TEST(Refiner, SmallestGrid) {
  RefinerParams p = params_for(4, 1, 9);
  Tensor g = random_tensor({1, 1, 4}, 10);
  Tensor np = random_tensor({4}, 11);
  EXPECT_EQ(spatial_refine_step(p.spatial, g, np).shape(), (Shape{1, 1, 4}));
  EXPECT_EQ(temporal_refine_step(p.temporal, g, np).shape(), (Shape{1, 1, 4}));
  EXPECT_EQ(joint_st_attention(p.spatial, g, np, np).shape(), (Shape{1, 1, 4}));
}

TEST(Refiner, ZeroPhraseStillShapesCorrectly) {
  RefinerParams p = params_for(8, 2, 12);
  Tensor g = random_tensor({4, 3, 8}, 13);
  Tensor out = spatial_refine_step(p.spatial, g, Tensor::zeros({8}));
  EXPECT_EQ(out.shape(), g.shape());
}

TEST(Refiner, IdenticalFramesGiveIdenticalTemporalOutputs) {
  RefinerParams p = params_for(8, 2, 14);
  Tensor slot = random_tensor({4, 1, 8}, 15);
  Tensor g = concat({slot, slot, slot}, 1);
  Tensor out = temporal_refine_step(p.temporal, g, random_tensor({8}, 16));
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t t = 1; t < 3; ++t) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.at({s, t, c}), out.at({s, 0, c}), 1e-12);
    }
  }
}

TEST(Refiner, StepsChangeTheGridAndAttentionRowsSumToOne) {
  RefinerParams p = params_for(8, 2, 17);
  Tensor g = random_tensor({4, 3, 8}, 18);
  double worst = 0.0;
  std::size_t calls = 0;
  {
    AttentionObserver obs([&](const Tensor& a) {
      ++calls;
      const std::size_t nk = a.shape().back();
      for (std::size_t r = 0; r < a.size() / nk; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < nk; ++k) s += a.data()[r * nk + k];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    });
    Tensor s = spatial_refine_step(p.spatial, g, random_tensor({8}, 19), LangRows::replicated, GuidedPath::literal);
    Tensor t = temporal_refine_step(p.temporal, g, random_tensor({8}, 20), LangRows::replicated, GuidedPath::literal);
    EXPECT_GT(max_abs_diff(s, g), 1e-3);
    EXPECT_GT(max_abs_diff(t, g), 1e-3);
  }
  EXPECT_EQ(calls, 2u);
  EXPECT_LT(worst, 1e-9);
}

TEST(Refiner, OneFullStepUnrolled) {
  RefinerParams p = params_for(8, 2, 21);
  Tensor g = random_tensor({4, 3, 8}, 22);
  const PhraseVectors ph = random_phrases(1, 8, 23);
  Tensor want = add(matmul(g, transpose(p.residual_w)),
                    temporal_refine_step(p.temporal, spatial_refine_step(p.spatial, g, ph[0].first), ph[0].second));
  EXPECT_LT(max_abs_diff(refine(p, {}, g, ph), want), 1e-12);
}

TEST(Refiner, RecurrenceDiffersFromParallel) {
  RefinerParams p = params_for(8, 2, 24);
  Tensor g = random_tensor({4, 3, 8}, 25);
  const PhraseVectors ph = random_phrases(2, 8, 26);
  RefinerConfig par;
  par.variant = Variant::parallel_avg;
  EXPECT_GT(max_abs_diff(refine(p, {}, g, ph), refine(p, par, g, ph)), 1e-6);
}

TEST(Refiner, StageOrderingAndSharing) {
  RefinerParams p = params_for(8, 2, 27);
  Tensor g = random_tensor({4, 3, 8}, 28);
  const std::size_t n_params = p.parameters().size();
  for (std::size_t steps : {1u, 2u, 4u}) {
    RefineTrace trace;
    refine(p, {}, g, random_phrases(steps, 8, 29), &trace);
    std::string want;
    for (std::size_t i = 0; i < steps; ++i) want += "ST";
    EXPECT_EQ(trace.stages, want);
    EXPECT_EQ(trace.step_norms.size(), steps);
  }
  EXPECT_EQ(p.parameters().size(), n_params);
  RefineTrace swap_trace, joint_trace;
  RefinerConfig cfg;
  cfg.variant = Variant::joint;
  refine(p, cfg, g, random_phrases(2, 8, 30), &joint_trace);
  EXPECT_EQ(joint_trace.stages, "JJ");
  cfg.variant = Variant::no_temporal;
  refine(p, cfg, g, random_phrases(2, 8, 30), &swap_trace);
  EXPECT_EQ(swap_trace.stages, "SS");
}

TEST(Refiner, SwapExchangesGuidance) {
  RefinerParams p = params_for(8, 2, 31);
  Tensor g = random_tensor({4, 3, 8}, 32);
  const PhraseVectors ph = random_phrases(1, 8, 33);
  RefinerConfig swap;
  swap.variant = Variant::swap;
  const PhraseVectors flipped{{ph[0].second, ph[0].first}};
  EXPECT_LT(max_abs_diff(refine(p, swap, g, ph), refine(p, {}, g, flipped)), 1e-12);
}

TEST(Refiner, ParallelSumIsTwiceAverageForTwoSteps) {
  RefinerParams p = params_for(8, 2, 34);
  Tensor g = random_tensor({4, 3, 8}, 35);
  const PhraseVectors ph = random_phrases(2, 8, 36);
  RefinerConfig avg, sum;
  avg.variant = Variant::parallel_avg;
  sum.variant = Variant::parallel_sum;
  Tensor a = refine(p, avg, g, ph), s = refine(p, sum, g, ph);
  EXPECT_LT(max_abs_diff(scale(a, 2.0), s), 1e-12);
}

TEST(Refiner, FastAndLiteralPathsAgree) {
  RefinerParams p = params_for(8, 2, 37);
  Tensor g = random_tensor({4, 3, 8}, 38);
  const PhraseVectors ph = random_phrases(2, 8, 39);
  RefinerConfig lit;
  lit.path = GuidedPath::literal;
  for (Variant v : all_variants()) {
    RefinerConfig fast;
    fast.variant = lit.variant = v;
    EXPECT_LT(max_abs_diff(refine(p, fast, g, ph), refine(p, lit, g, ph)), 1e-12) << to_string(v);
  }
}

TEST(Refiner, MaxStepsCapsTheChain) {
  RefinerParams p = params_for(8, 2, 40);
  Tensor g = random_tensor({4, 3, 8}, 41);
  const PhraseVectors ph = random_phrases(3, 8, 42);
  RefinerConfig cap;
  cap.max_steps = 1;
  RefineTrace trace;
  Tensor capped = refine(p, cap, g, ph, &trace);
  EXPECT_EQ(trace.stages, "ST");
  EXPECT_LT(max_abs_diff(capped, refine(p, {}, g, PhraseVectors{ph[0]})), 1e-15);
}

TEST(Refiner, ShapeErrors) {
  RefinerParams p = params_for(8, 2, 43);
  EXPECT_TRUE(throws_code([&] { refine(p, {}, random_tensor({4, 8}, 1), random_phrases(1, 8, 2)); },
                          ErrorCode::ShapeMismatch));
  EXPECT_TRUE(throws_code([&] { refine(p, {}, random_tensor({4, 3, 8}, 1), random_phrases(1, 6, 2)); },
                          ErrorCode::ShapeMismatch));
}

TEST(Refiner, GradientThroughFullRefineAndVtgLoss) {
  RefinerParams p = params_for(8, 2, 44);
  Tensor g = random_tensor({4, 3, 8}, 45);
  const PhraseVectors ph = random_phrases(2, 8, 46);
  Tensor sentence = random_tensor({8}, 47);
  const std::vector<Segment> cands{{0, 1}, {0, 2}, {1, 3}, {2, 3}};
  const std::vector<double> labels{0.0, 0.25, 1.0, 0.5};
  auto params = p.parameters();
  params.push_back(g);
  double err = finite_diff_check(
      [&] { return vtg_loss(vtg_scores(refine(p, {}, g, ph), sentence, cands), labels); }, params);
  EXPECT_LT(err, 1e-4);
}

TEST(Refiner, EmbedChainUsesProvider) {
  EmbeddingProvider prov = EmbeddingProvider::hashed(8, 1);
  SubPromptChain chain = decompose(parse_tree("(S (NP (NN dog)) (VP (VP (VBZ runs)) (CC and) (VP (VBZ sits))))"));
  PhraseVectors ph = embed_chain(chain, prov);
  ASSERT_EQ(ph.size(), 2u);
  EXPECT_EQ(ph[0].first.values(), prov.embed("dog").vector);
  EXPECT_EQ(ph[1].second.values(), prov.embed("sits").vector);
  Tensor g = random_tensor({4, 3, 8}, 48);
  RefinerParams p = params_for(8, 2, 49);
  EXPECT_LT(max_abs_diff(refine(p, {}, g, chain, prov), refine(p, {}, g, ph)), 1e-15);
}
