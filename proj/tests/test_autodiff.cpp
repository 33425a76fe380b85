#include <gtest/gtest.h>

#include "avgn/graph.hpp"
#include "avgn/random.hpp"
#include "support/gradcheck.hpp"

using avgn::Rng;
using avgn::Tensor;
using avgn::ad::Graph;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.gaussian();
  return t;
}

// builds a scalar graph from leaves and returns (value, grads)
using Builder = std::function<int(Graph<double>&, const std::vector<int>&)>;

void check_gradients(const Builder& build, const std::vector<Tensor<double>>& leaves,
                     double tol = 1e-6, int64_t stride = 1) {
  Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : leaves) ids.push_back(g.leaf(t, true));
  const int root = build(g, ids);
  g.backward(root);
  std::vector<Tensor<double>> analytic;
  for (int id : ids) analytic.push_back(g.grad(id));

  auto f = [&](const std::vector<Tensor<double>>& xs) {
    Graph<double> g2;
    std::vector<int> ids2;
    for (const auto& t : xs) ids2.push_back(g2.leaf(t, false));
    return g2.val(build(g2, ids2))[0];
  };
  const auto res = avgn::test::finite_difference_check(f, leaves, analytic, 1e-5, stride);
  EXPECT_LE(res.max_rel_err, tol) << "worst analytic " << res.worst_analytic << " vs numeric "
                                  << res.worst_numeric << " at flat index " << res.worst_index;
}

TEST(Autodiff, AddMulScaleBackward) {
  Rng rng(1);
  const auto a = random_tensor({3, 4}, rng);
  const auto b = random_tensor({3, 4}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.mul(g.add(ids[0], ids[1]), g.scale(g.sub(ids[0], ids[1]), 0.5)));
      },
      {a, b});
}

TEST(Autodiff, MatmulAllTransposeCombos) {
  Rng rng(2);
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const auto a = random_tensor(ta ? std::vector<int64_t>{4, 3} : std::vector<int64_t>{3, 4}, rng);
      const auto b = random_tensor(tb ? std::vector<int64_t>{5, 4} : std::vector<int64_t>{4, 5}, rng);
      check_gradients(
          [ta, tb](Graph<double>& g, const std::vector<int>& ids) {
            return g.mean_all(g.relu(g.matmul(ids[0], ids[1], ta, tb)));
          },
          {a, b});
    }
  }
}

TEST(Autodiff, BmmBackward) {
  Rng rng(3);
  const auto a = random_tensor({2, 3, 4}, rng);
  const auto b = random_tensor({2, 4, 5}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.bmm(ids[0], ids[1]));
      },
      {a, b});
  // self-attention pattern: X X^T
  const auto x = random_tensor({2, 5, 3}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.softmax_last(g.bmm(ids[0], ids[0], false, true)));
      },
      {x});
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  Rng rng(4);
  Graph<double> g;
  const int x = g.leaf(random_tensor({6, 9}, rng, 3.0), false);
  const int y = g.softmax_last(x);
  for (int64_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < 9; ++c) {
      const double v = g.val(y).at(r, c);
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Autodiff, SoftmaxLogsumexpBackward) {
  Rng rng(5);
  const auto a = random_tensor({4, 6}, rng, 2.0);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.softmax_last(ids[0]));
      },
      {a});
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.logsumexp_rows(ids[0]));
      },
      {a});
}

TEST(Autodiff, LinearSigmoidBackward) {
  Rng rng(6);
  const auto x = random_tensor({5, 3}, rng);
  const auto w = random_tensor({2, 3}, rng);
  const auto b = random_tensor({2}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.mean_all(g.sigmoid(g.linear(ids[0], ids[1], ids[2])));
      },
      {x, w, b});
}

TEST(Autodiff, RowPlumbingBackward) {
  Rng rng(7);
  const auto x = random_tensor({2, 4, 3}, rng);
  const auto t = random_tensor({2, 3}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        const int cat = g.append_rows_shared(ids[0], ids[1]);
        const int head = g.slice_rows3(cat, 0, 4);
        const int tail = g.slice_rows3(cat, 4, 6);
        const int a = g.batch_of(head, 1);
        const int b = g.batch_of(tail, 0);
        return g.mean_all(g.mul_rowvec(g.concat_rows(a, b), g.row_of(b, 1)));
      },
      {x, t});
}

TEST(Autodiff, GatherColsumDivBackward) {
  Rng rng(8);
  const auto a = random_tensor({5, 3}, rng);
  auto den_src = random_tensor({4, 3}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        const int picked = g.gather_rows(ids[0], {0, 2, 4});
        const int den = g.colsum(g.relu(ids[1]));  // nonnegative denominators
        return g.mean_all(g.div_colvec_guarded(picked, den, 1e-8));
      },
      {a, den_src});
}

TEST(Autodiff, MaxcosBackwardAndValue) {
  Rng rng(9);
  const auto a = random_tensor({4}, rng);
  const auto v = random_tensor({6, 4}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) { return g.maxcos(ids[0], ids[1]); },
      {a, v});

  // parallel row gives exactly 1
  Graph<double> g;
  const int av = g.leaf(avgn::tensor1<double>({1.0, 2.0, -1.0}), false);
  Tensor<double> rows({2, 3});
  rows.at(0, 0) = 3.0; rows.at(0, 1) = 6.0; rows.at(0, 2) = -3.0;
  rows.at(1, 0) = -1.0; rows.at(1, 1) = 0.0; rows.at(1, 2) = 0.5;
  const int vv = g.leaf(rows, false);
  EXPECT_NEAR(g.val(g.maxcos(av, vv))[0], 1.0, 1e-12);
}

TEST(Autodiff, LossPiecesBackward) {
  Rng rng(10);
  const auto logits = random_tensor({3, 3}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        return g.ce_identity_rows(g.softmax_last(ids[0]), 1e-12);
      },
      {logits});

  const auto p_logits = random_tensor({4}, rng);
  Tensor<double> y({4});
  y[0] = 1.0; y[2] = 1.0;
  check_gradients(
      [&y](Graph<double>& g, const std::vector<int>& ids) {
        return g.bce_sum(g.sigmoid(ids[0]), y, 1e-12);
      },
      {p_logits});
}

TEST(Autodiff, StackGatherDiagBackward) {
  Rng rng(11);
  const auto a = random_tensor({3, 3}, rng);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        std::vector<int> scalars;
        for (int i = 0; i < 4; ++i) scalars.push_back(g.mean_all(g.scale(ids[0], 0.3 * (i + 1))));
        const int stacked = g.stack_scalars(scalars);
        const int sq = g.reshape(stacked, {2, 2});
        return g.mean_all(g.gather_diag(sq));
      },
      {a});
}

TEST(Autodiff, Conv2dGapBackward) {
  Rng rng(12);
  const auto x = random_tensor({2, 2, 6, 5}, rng);
  const auto w = random_tensor({3, 2, 3, 3}, rng, 0.5);
  const auto b = random_tensor({3}, rng, 0.1);
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        const int y = g.conv2d(ids[0], ids[1], ids[2], 2, 1);
        return g.mean_all(g.relu(y));
      },
      {x, w, b});
  check_gradients(
      [](Graph<double>& g, const std::vector<int>& ids) {
        const int y = g.conv2d(ids[0], ids[1], ids[2], 2, 1);
        return g.mean_all(g.gap2d(y));
      },
      {x, w, b});
}

TEST(Autodiff, ConvShapeCeilDivision) {
  Graph<double> g;
  const int x = g.leaf(Tensor<double>({1, 1, 224, 224}), false);
  const int w = g.leaf(Tensor<double>({4, 1, 3, 3}), false);
  const int b = g.leaf(Tensor<double>({4}), false);
  const int y = g.conv2d(x, w, b, 2, 1);
  EXPECT_EQ(g.val(y).dim(2), 112);
  EXPECT_EQ(g.val(y).dim(3), 112);
  const int x2 = g.leaf(Tensor<double>({1, 1, 257, 119}), false);
  const int w2 = g.leaf(Tensor<double>({2, 1, 3, 3}), false);
  const int b2 = g.leaf(Tensor<double>({2}), false);
  const int y2 = g.conv2d(x2, w2, b2, 2, 1);
  EXPECT_EQ(g.val(y2).dim(2), 129);  // ceil(257/2)
  EXPECT_EQ(g.val(y2).dim(3), 60);   // ceil(119/2)
}

TEST(Autodiff, ChwToRowsLayout) {
  Graph<double> g;
  Tensor<double> x({1, 2, 2, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
  const int rows = g.chw_to_rows(g.leaf(x, false));
  ASSERT_EQ(g.val(rows).rank(), 3);
  EXPECT_EQ(g.val(rows).dim(1), 6);
  EXPECT_EQ(g.val(rows).dim(2), 2);
  // position p = y*W + x; feature dim = channels
  EXPECT_DOUBLE_EQ(g.val(rows).at(0, 0, 0), x.at(0, 0, 0, 0));
  EXPECT_DOUBLE_EQ(g.val(rows).at(0, 0, 1), x.at(0, 1, 0, 0));
  EXPECT_DOUBLE_EQ(g.val(rows).at(0, 5, 0), x.at(0, 0, 1, 2));
}

TEST(Autodiff, HardSoftmaxStraightThrough) {
  Rng rng(13);
  Graph<double> g;
  const auto logits = random_tensor({5, 3}, rng);
  Tensor<double> noise({5, 3});
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = rng.gumbel();
  const int id = g.leaf(logits, true);
  const int y = g.hard_softmax_st(id, noise, 1.0);
  // every row one-hot
  for (int64_t r = 0; r < 5; ++r) {
    double s = 0.0;
    int ones = 0;
    for (int64_t c = 0; c < 3; ++c) {
      const double v = g.val(y).at(r, c);
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      s += v;
      ones += v == 1.0;
    }
    EXPECT_EQ(ones, 1);
    EXPECT_DOUBLE_EQ(s, 1.0);
  }
  // straight-through gradient flows
  g.backward(g.mean_all(g.mul(y, y)));
  double norm = 0.0;
  for (int64_t i = 0; i < g.grad(id).numel(); ++i) norm += std::abs(g.grad(id)[i]);
  EXPECT_GT(norm, 0.0);
}

}  // namespace
