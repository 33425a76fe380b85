#include <gtest/gtest.h>

#include "avgn/localize.hpp"
#include "avgn/objective.hpp"
#include "avgn/random.hpp"

using namespace avgn;

namespace {

TEST(SimilarityMap, OnesMaskWithParallelRowsGivesAllOnes) {
  const auto g_audio = tensor1<double>({2.0, 1.0});
  Tensor<double> raw({6, 2});
  for (int64_t p = 0; p < 6; ++p) {
    raw.at(p, 0) = 2.0 * (p + 1.0);
    raw.at(p, 1) = 1.0 * (p + 1.0);
  }
  const auto g_vis = tensor1<double>({1.0, 1.0});
  const auto map = similarity_map(g_audio, raw, g_vis, 2, 3);
  for (int64_t i = 0; i < map.numel(); ++i) ASSERT_NEAR(map[i], 1.0, 1e-12);
}

TEST(SimilarityMap, OrthogonalAfterMaskingGivesZero) {
  const auto g_audio = tensor1<double>({1.0, 0.0});
  Tensor<double> raw({4, 2});
  for (int64_t p = 0; p < 4; ++p) raw.at(p, 1) = 3.0;
  const auto g_vis = tensor1<double>({1.0, 1.0});
  const auto map = similarity_map(g_audio, raw, g_vis, 2, 2);
  for (int64_t i = 0; i < map.numel(); ++i) ASSERT_NEAR(map[i], 0.0, 1e-12);
}

TEST(SimilarityMap, HandCosine) {
  // D=2: g_a=[1,0], g_v=[1,1], raw=[1,1] -> cos([1,0],[1,1]) = 0.7071
  const auto map = similarity_map(tensor1<double>({1.0, 0.0}), tensor2<double>(1, 2, {1.0, 1.0}),
                                  tensor1<double>({1.0, 1.0}), 1, 1);
  EXPECT_NEAR(map[0], 0.7071, 1e-4);
}

TEST(SimilarityMap, RowMajorGridOrderAndMaxMatchesPairwiseSim) {
  Rng rng(1);
  const int h = 2, w = 3, d = 5;
  Tensor<double> raw({h * w, d});
  for (int64_t i = 0; i < raw.numel(); ++i) raw[i] = rng.gaussian();
  Tensor<double> ga({d}), gv({d});
  for (int64_t i = 0; i < d; ++i) {
    ga[i] = rng.gaussian();
    gv[i] = rng.gaussian();
  }
  const auto map = similarity_map(ga, raw, gv, h, w);
  ASSERT_EQ(map.dim(0), h);
  ASSERT_EQ(map.dim(1), w);

  // map max equals the objective's max-pooled cosine on the masked rows
  Tensor<double> ga_row({1, d});
  ga_row.data = ga.data;
  const auto pair = make_class_aware_pair(ga_row, raw, gv);
  double mx = -2.0;
  for (int64_t i = 0; i < map.numel(); ++i) mx = std::max(mx, map[i]);
  EXPECT_NEAR(mx, pairwise_sim(pair.audio, pair.visual), 1e-12);

  // p = row*w + col
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) {
      Tensor<double> one_row({1, d});
      for (int64_t j = 0; j < d; ++j) one_row.at(0, j) = raw.at(r * w + c, j);
      const auto cell = similarity_map(ga, one_row, gv, 1, 1);
      ASSERT_NEAR(map.at(r, c), cell[0], 1e-12);
    }
}

TEST(SimilarityMap, InvariantToPositiveScalingOfAudio) {
  Rng rng(2);
  const int d = 4;
  Tensor<double> raw({6, d});
  for (int64_t i = 0; i < raw.numel(); ++i) raw[i] = rng.gaussian();
  Tensor<double> ga({d}), gv({d});
  for (int64_t i = 0; i < d; ++i) {
    ga[i] = rng.gaussian();
    gv[i] = rng.gaussian();
  }
  const auto base = similarity_map(ga, raw, gv, 2, 3);
  Tensor<double> scaled = ga;
  for (int64_t i = 0; i < d; ++i) scaled[i] *= 123.0;
  const auto after = similarity_map(scaled, raw, gv, 2, 3);
  for (int64_t i = 0; i < base.numel(); ++i) ASSERT_NEAR(after[i], base[i], 1e-12);
}

TEST(Upsample, ConstantAndDegenerateGrids) {
  Tensor<double> constant({3, 4}, 0.42);
  const auto up = upsample_bilinear(constant, 17, 23);
  for (int64_t i = 0; i < up.numel(); ++i) ASSERT_DOUBLE_EQ(up[i], 0.42);

  Tensor<double> single({1, 1}, -1.5);
  const auto up2 = upsample_bilinear(single, 5, 7);
  for (int64_t i = 0; i < up2.numel(); ++i) ASSERT_DOUBLE_EQ(up2[i], -1.5);
}

TEST(Upsample, CornerAlignedHandValues) {
  // [[0,1],[0,1]] to 2x4: each row [0, 1/3, 2/3, 1]
  Tensor<double> map({2, 2});
  map.at(0, 1) = 1.0;
  map.at(1, 1) = 1.0;
  const auto up = upsample_bilinear(map, 2, 4);
  for (int64_t r = 0; r < 2; ++r) {
    ASSERT_NEAR(up.at(r, 0), 0.0, 1e-12);
    ASSERT_NEAR(up.at(r, 1), 1.0 / 3.0, 1e-12);
    ASSERT_NEAR(up.at(r, 2), 2.0 / 3.0, 1e-12);
    ASSERT_NEAR(up.at(r, 3), 1.0, 1e-12);
  }
}

TEST(Upsample, ExactAtCornersAndBounded) {
  Rng rng(3);
  Tensor<double> map({7, 14});
  double lo = 1e30, hi = -1e30;
  for (int64_t i = 0; i < map.numel(); ++i) {
    map[i] = rng.gaussian();
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const auto up = upsample_bilinear(map, 224, 448);
  EXPECT_NEAR(up.at(0, 0), map.at(0, 0), 1e-12);
  EXPECT_NEAR(up.at(0, 447), map.at(0, 13), 1e-12);
  EXPECT_NEAR(up.at(223, 0), map.at(6, 0), 1e-12);
  EXPECT_NEAR(up.at(223, 447), map.at(6, 13), 1e-12);
  for (int64_t i = 0; i < up.numel(); ++i) {
    ASSERT_GE(up[i], lo - 1e-12);
    ASSERT_LE(up[i], hi + 1e-12);
  }
}

}  // namespace
