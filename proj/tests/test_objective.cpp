#include <gtest/gtest.h>

#include "avgn/objective.hpp"
#include "support/gradcheck.hpp"

using namespace avgn;

namespace {

Tensor<double> random_mat(int64_t r, int64_t c, Rng& rng, double scale = 1.0) {
  Tensor<double> t({r, c});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.gaussian();
  return t;
}

TEST(PairwiseSim, ParallelOrthogonalAndHandCosine) {
  const auto audio = tensor2<double>(1, 2, {1.0, 1.0});
  EXPECT_NEAR(pairwise_sim(audio, tensor2<double>(2, 2, {2.0, 2.0, 0.0, -1.0})), 1.0, 1e-12);
  EXPECT_NEAR(pairwise_sim(audio, tensor2<double>(1, 2, {1.0, -1.0})), 0.0, 1e-12);
  // rows {[1,0],[0,-1]}: max(1/sqrt2, -1/sqrt2) = 0.7071
  EXPECT_NEAR(pairwise_sim(audio, tensor2<double>(2, 2, {1.0, 0.0, 0.0, -1.0})), 0.7071, 1e-4);
}

std::pair<std::vector<Tensor<double>>, std::vector<Tensor<double>>> identity_sim_batch() {
  // s_bb = 1, s_bm = 0 for b != m (D=2, P=1)
  std::vector<Tensor<double>> audio = {tensor2<double>(1, 2, {1.0, 0.0}),
                                       tensor2<double>(1, 2, {0.0, 1.0})};
  std::vector<Tensor<double>> visual = {tensor2<double>(1, 2, {1.0, 0.0}),
                                        tensor2<double>(1, 2, {0.0, 1.0})};
  return {audio, visual};
}

TEST(MiclLoss, SingleSampleBatchIsExactlyZero) {
  Rng rng(1);
  const std::vector<Tensor<double>> audio = {random_mat(1, 4, rng)};
  const std::vector<Tensor<double>> visual = {random_mat(6, 4, rng)};
  EXPECT_NEAR(micl_loss(audio, visual, LossConfig<double>{0.07}), 0.0, 1e-9);
}

TEST(MiclLoss, HandEvaluatedTwoSampleBatch) {
  const auto [audio, visual] = identity_sim_batch();
  const double loss = micl_loss(audio, visual, LossConfig<double>{1.0});
  EXPECT_NEAR(loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-9);
  EXPECT_NEAR(loss, 0.3133, 1e-4);
}

TEST(MiclLoss, LowerTemperatureSharpensDiagonalDominantLoss) {
  const auto [audio, visual] = identity_sim_batch();
  const double warm = micl_loss(audio, visual, LossConfig<double>{1.0});
  const double cold = micl_loss(audio, visual, LossConfig<double>{0.5});
  EXPECT_LT(cold, warm);
}

TEST(MiclLoss, InvariantToPositiveRescaling) {
  Rng rng(2);
  std::vector<Tensor<double>> audio, visual;
  for (int b = 0; b < 3; ++b) {
    audio.push_back(random_mat(1, 5, rng));
    visual.push_back(random_mat(4, 5, rng));
  }
  const double base = micl_loss(audio, visual);
  for (int64_t i = 0; i < audio[1].numel(); ++i) audio[1][i] *= 37.5;
  for (int64_t i = 0; i < visual[2].numel(); ++i) visual[2][i] *= 0.004;
  EXPECT_NEAR(micl_loss(audio, visual), base, 1e-8);
}

TEST(GroupLoss, PerfectPredictionsGiveZero) {
  TokenClassOutput<double> tok;
  tok.probabilities = Tensor<double>({2, 2});
  tok.probabilities.at(0, 0) = tok.probabilities.at(1, 1) = 1.0;
  SourcePresence<double> pa, pv;
  pa.probabilities = tensor1<double>({1.0, 0.0});
  pv.probabilities = tensor1<double>({1.0, 0.0});
  EXPECT_NEAR(group_loss(tok, pa, pv, {1, 0}), 0.0, 1e-9);
}

TEST(GroupLoss, HandBceSingleClass) {
  // y=1, p^a = p^v = 0.5, e perfect -> 2 ln 2
  TokenClassOutput<double> tok;
  tok.probabilities = Tensor<double>({1, 1}, 1.0);
  SourcePresence<double> pa, pv;
  pa.probabilities = tensor1<double>({0.5});
  pv.probabilities = tensor1<double>({0.5});
  EXPECT_NEAR(group_loss(tok, pa, pv, {1}), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(group_loss(tok, pa, pv, {1}), 1.3863, 1e-4);
}

TEST(GroupLoss, DecomposesAdditivelyOverTerms) {
  Rng rng(3);
  const int c = 3;
  TokenClassOutput<double> tok;
  tok.probabilities = Tensor<double>({c, c});
  for (int64_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      tok.probabilities.at(i, j) = rng.uniform(0.05, 1.0);
      s += tok.probabilities.at(i, j);
    }
    for (int64_t j = 0; j < c; ++j) tok.probabilities.at(i, j) /= s;
  }
  SourcePresence<double> pa, pv;
  pa.probabilities = tensor1<double>({0.3, 0.8, 0.6});
  pv.probabilities = tensor1<double>({0.9, 0.2, 0.5});
  const std::vector<int> y = {1, 0, 1};

  TokenClassOutput<double> perfect;
  perfect.probabilities = Tensor<double>({c, c});
  for (int i = 0; i < c; ++i) perfect.probabilities.at(i, i) = 1.0;
  SourcePresence<double> exact_a, exact_v;
  exact_a.probabilities = tensor1<double>({1.0, 0.0, 1.0});
  exact_v.probabilities = tensor1<double>({1.0, 0.0, 1.0});

  const double ce_only = group_loss(tok, exact_a, exact_v, y);
  const double ba_only = group_loss(perfect, pa, exact_v, y);
  const double bv_only = group_loss(perfect, exact_a, pv, y);
  const double all = group_loss(tok, pa, pv, y);
  EXPECT_GE(ce_only, 0.0);
  EXPECT_GE(ba_only, 0.0);
  EXPECT_GE(bv_only, 0.0);
  EXPECT_NEAR(all, ce_only + ba_only + bv_only, 1e-9);
}

std::vector<std::vector<ClassAwarePair<double>>> pairs_from_batch(
    const std::vector<Tensor<double>>& audio, const std::vector<Tensor<double>>& visual,
    int slots) {
  std::vector<std::vector<ClassAwarePair<double>>> pairs(audio.size());
  for (size_t b = 0; b < audio.size(); ++b)
    for (int n = 0; n < slots; ++n) {
      ClassAwarePair<double> p;
      p.audio = audio[b];
      p.visual = visual[b];
      pairs[b].push_back(p);
    }
  return pairs;
}

TEST(LocalizationLoss, SingleSampleBatchIsExactlyZero) {
  Rng rng(4);
  const std::vector<Tensor<double>> audio = {random_mat(1, 4, rng)};
  const std::vector<Tensor<double>> visual = {random_mat(5, 4, rng)};
  for (int slots : {1, 2, 3})
    EXPECT_NEAR(localization_loss(pairs_from_batch(audio, visual, slots)), 0.0, 1e-9);
}

TEST(LocalizationLoss, ReducesToMiclForm) {
  const auto [audio, visual] = identity_sim_batch();
  const double loss = localization_loss(pairs_from_batch(audio, visual, 1), LossConfig<double>{1.0});
  EXPECT_NEAR(loss, 0.3133, 1e-4);
}

TEST(LocalizationLoss, IdenticalSlotsAverageToSingleSlotValue) {
  const auto [audio, visual] = identity_sim_batch();
  const double one = localization_loss(pairs_from_batch(audio, visual, 1), LossConfig<double>{1.0});
  const double two = localization_loss(pairs_from_batch(audio, visual, 2), LossConfig<double>{1.0});
  EXPECT_NEAR(one, two, 1e-12);
}

TEST(LocalizationLoss, EqualsMiclOnRawFeaturePairs) {
  // functional-form equality at N=1 on random batches
  Rng rng(5);
  std::vector<Tensor<double>> audio, visual;
  for (int b = 0; b < 4; ++b) {
    audio.push_back(random_mat(1, 6, rng));
    visual.push_back(random_mat(5, 6, rng));
  }
  std::vector<std::vector<ClassAwarePair<double>>> pairs(audio.size());
  for (size_t b = 0; b < audio.size(); ++b) {
    Tensor<double> ones({6}, 1.0);
    pairs[b].push_back(make_class_aware_pair(audio[b], visual[b], ones));
  }
  EXPECT_NEAR(localization_loss(pairs), micl_loss(audio, visual), 1e-12);
}

TEST(LocalizationLoss, RejectsRaggedSlots) {
  Rng rng(6);
  std::vector<std::vector<ClassAwarePair<double>>> pairs(2);
  ClassAwarePair<double> p;
  p.audio = random_mat(1, 3, rng);
  p.visual = random_mat(2, 3, rng);
  pairs[0] = {p, p};
  pairs[1] = {p};
  EXPECT_THROW(localization_loss(pairs), invalid_input);
}

TEST(ClassAwarePair, VisualRowsAreMaskedByGroupedEmbedding) {
  Rng rng(7);
  const auto raw = random_mat(3, 4, rng);
  Tensor<double> gvis({4});
  for (int64_t j = 0; j < 4; ++j) gvis[j] = rng.gaussian();
  const auto pair = make_class_aware_pair(random_mat(1, 4, rng), raw, gvis);
  for (int64_t p = 0; p < 3; ++p)
    for (int64_t j = 0; j < 4; ++j)
      ASSERT_DOUBLE_EQ(pair.visual.at(p, j), raw.at(p, j) * gvis[j]);
}

TEST(TotalLoss, SumWithUnitWeights) {
  EXPECT_DOUBLE_EQ(total_loss(0.0, 0.0), 0.0);
  EXPECT_NEAR(total_loss(0.3133, 1.3863), 1.6996, 1e-9);
  EXPECT_LT(total_loss(0.1, 0.2), total_loss(0.15, 0.2));
  EXPECT_LT(total_loss(0.1, 0.2), total_loss(0.1, 0.25));
  EXPECT_THROW(total_loss(std::numeric_limits<double>::quiet_NaN(), 0.0), invalid_input);
}

// gradient checks at the spec's pinned sizes: D=5, C=3, P=4, B=2, N=2

TEST(Gradients, MiclLossMatchesFiniteDifferences) {
  Rng rng(8);
  const int b = 2, d = 5, p = 4;
  std::vector<Tensor<double>> leaves;
  for (int i = 0; i < b; ++i) leaves.push_back(random_mat(1, d, rng));
  for (int i = 0; i < b; ++i) leaves.push_back(random_mat(p, d, rng));
  auto build = [b](ad::Graph<double>& g, const std::vector<int>& ids) {
    std::vector<int> audio(ids.begin(), ids.begin() + b);
    std::vector<int> visual(ids.begin() + b, ids.end());
    return obj::micl_node(g, audio, visual, 0.2);
  };
  ad::Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
  g.backward(build(g, ids));
  std::vector<Tensor<double>> analytic;
  for (int id : ids) analytic.push_back(g.grad(id));
  auto f = [&](const std::vector<Tensor<double>>& xs) {
    ad::Graph<double> g2;
    std::vector<int> ids2;
    for (const auto& t : xs) ids2.push_back(g2.leaf(t, false));
    return g2.val(build(g2, ids2))[0];
  };
  EXPECT_LE(avgn::test::finite_difference_check(f, leaves, analytic).max_rel_err, 1e-4);
}

TEST(Gradients, LocalizationLossMatchesFiniteDifferences) {
  Rng rng(9);
  const int b = 2, n = 2, d = 5, p = 4;
  std::vector<Tensor<double>> leaves;
  for (int i = 0; i < b * n; ++i) leaves.push_back(random_mat(1, d, rng));
  for (int i = 0; i < b * n; ++i) leaves.push_back(random_mat(p, d, rng));
  auto build = [b, n](ad::Graph<double>& g, const std::vector<int>& ids) {
    std::vector<std::vector<int>> audio(b), visual(b);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < n; ++j) {
        audio[i].push_back(ids[i * n + j]);
        visual[i].push_back(ids[b * n + i * n + j]);
      }
    return obj::localization_node(g, audio, visual, 0.2);
  };
  ad::Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
  g.backward(build(g, ids));
  std::vector<Tensor<double>> analytic;
  for (int id : ids) analytic.push_back(g.grad(id));
  auto f = [&](const std::vector<Tensor<double>>& xs) {
    ad::Graph<double> g2;
    std::vector<int> ids2;
    for (const auto& t : xs) ids2.push_back(g2.leaf(t, false));
    return g2.val(build(g2, ids2))[0];
  };
  EXPECT_LE(avgn::test::finite_difference_check(f, leaves, analytic).max_rel_err, 1e-4);
}

TEST(Gradients, GroupLossMatchesFiniteDifferences) {
  Rng rng(10);
  const int c = 3, d = 5;
  std::vector<Tensor<double>> leaves = {random_mat(c, d, rng),  // tokens
                                        random_mat(c, d, rng),  // token head w
                                        random_mat(1, d, rng),  // presence-ish inputs
                                        random_mat(1, d, rng)};
  Tensor<double> hb({c});
  const std::vector<int> y = {1, 0, 1};
  auto build = [&](ad::Graph<double>& g, const std::vector<int>& ids) {
    const int probs = avct::token_probs_node(g, ids[0], ids[1], g.leaf(hb, false));
    // presence vectors via sigmoid of row-token dot products
    const int pa = g.reshape(g.sigmoid(g.matmul(ids[0], ids[2], false, true)), {c});
    const int pv = g.reshape(g.sigmoid(g.matmul(ids[0], ids[3], false, true)), {c});
    return obj::group_loss_node(g, probs, pa, pv, y);
  };
  ad::Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
  g.backward(build(g, ids));
  std::vector<Tensor<double>> analytic;
  for (int id : ids) analytic.push_back(g.grad(id));
  auto f = [&](const std::vector<Tensor<double>>& xs) {
    ad::Graph<double> g2;
    std::vector<int> ids2;
    for (const auto& t : xs) ids2.push_back(g2.leaf(t, false));
    return g2.val(build(g2, ids2))[0];
  };
  EXPECT_LE(avgn::test::finite_difference_check(f, leaves, analytic).max_rel_err, 1e-4);
}

}  // namespace
