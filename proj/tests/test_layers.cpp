#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "radnet/layers.hpp"

using namespace radnet;
using radnet_test::conv2d_backward_oracle;
using radnet_test::conv2d_oracle;
using radnet_test::maxpool_oracle;

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST(Conv2d, IdentityKernelReproducesInput) {
  Rng rng(1);
  Tensor<double> x = Tensor<double>::rand_uniform({1, 1, 4, 4}, rng);
  Tensor<double> w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;  // 1 at the center, 0 elsewhere
  Tensor<double> b({1});
  auto r = conv2d(x, w, b);
  EXPECT_EQ(r.y.shape(), x.shape());
  EXPECT_EQ(r.y.vec(), x.vec());
}

TEST(Conv2d, ZeroKernelGivesBiasEverywhere) {
  Rng rng(2);
  Tensor<double> x = Tensor<double>::rand_uniform({2, 2, 3, 3}, rng);
  Tensor<double> w({3, 2, 3, 3});
  Tensor<double> b({3}, {0.5, -1.25, 2.0});
  auto r = conv2d(x, w, b);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t co = 0; co < 3; ++co) {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.y.at(n, co, i, j), b[co]);
      }
    }
  }
}

TEST(Conv2d, MatchesLoopOracleOnSmallInput) {
  Rng rng(3);
  Tensor<double> x = Tensor<double>::rand_uniform({1, 1, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> w = Tensor<double>::rand_uniform({1, 1, 3, 3}, rng, -1.0, 1.0);
  Tensor<double> b = Tensor<double>::rand_uniform({1}, rng, -1.0, 1.0);
  auto r = conv2d(x, w, b);
  EXPECT_LT(max_abs_diff(r.y, conv2d_oracle(x, w, b)), 1e-6);
}

TEST(Conv2d, ForwardAndBackwardMatchOracleOnAllShapes) {
  Rng rng(4);
  for (std::size_t n : {1u, 2u}) {
    for (std::size_t cin : {1u, 2u, 3u}) {
      for (std::size_t cout : {1u, 3u}) {
        for (std::size_t h : {1u, 2u, 5u, 8u}) {
          for (std::size_t w : {1u, 4u, 8u}) {
            Tensor<double> x = Tensor<double>::rand_uniform({n, cin, h, w}, rng, -1.0, 1.0);
            Tensor<double> k = Tensor<double>::rand_uniform({cout, cin, 3, 3}, rng, -1.0, 1.0);
            Tensor<double> b = Tensor<double>::rand_uniform({cout}, rng, -1.0, 1.0);
            auto r = conv2d(x, k, b);
            ASSERT_LT(max_abs_diff(r.y, conv2d_oracle(x, k, b)), 1e-6);

            Tensor<double> gy = Tensor<double>::rand_uniform(r.y.shape(), rng, -1.0, 1.0);
            auto g = conv2d_backward(gy, r.cache);
            auto go = conv2d_backward_oracle(gy, x, k);
            ASSERT_LT(max_abs_diff(g.x, go.x), 1e-6);
            ASSERT_LT(max_abs_diff(g.w, go.w), 1e-6);
            ASSERT_LT(max_abs_diff(g.b, go.b), 1e-6);
          }
        }
      }
    }
  }
}

TEST(Conv2d, RejectsShapeMismatches) {
  Tensor<double> x({1, 2, 4, 4});
  Tensor<double> w({1, 3, 3, 3});
  Tensor<double> b({1});
  try {
    conv2d(x, w, b);
    FAIL() << "expected a shape diagnostic";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  Tensor<double> w5({1, 2, 5, 5});
  EXPECT_THROW(conv2d(x, w5, b), std::invalid_argument);
  Tensor<double> bad_bias({2});
  Tensor<double> w_ok({1, 2, 3, 3});
  EXPECT_THROW(conv2d(x, w_ok, bad_bias), std::invalid_argument);
}

TEST(Conv2d, CacheIsSingleUse) {
  Rng rng(5);
  Tensor<double> x = Tensor<double>::rand_uniform({1, 1, 3, 3}, rng);
  Tensor<double> w = Tensor<double>::rand_uniform({1, 1, 3, 3}, rng);
  Tensor<double> b({1});
  auto r = conv2d(x, w, b);
  Tensor<double> gy = Tensor<double>::rand_uniform(r.y.shape(), rng);
  conv2d_backward(gy, r.cache);
  EXPECT_THROW(conv2d_backward(gy, r.cache), std::logic_error);
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

TEST(BatchNorm, ConstantChannelGivesBeta) {
  Tensor<double> x({4, 2, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i / 4) % 2 == 0 ? 3.0 : -1.5;
  auto state = BatchNormState<double>::init(2);
  state.beta = Tensor<double>({2}, {0.25, -0.75});
  auto r = batchnorm(x, state, Mode::kTrain);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.y[(n * 2 + c) * 4 + i], state.beta[c], 1e-12);
      }
    }
  }
}

TEST(BatchNorm, AlreadyNormalizedInputPassesThrough) {
  // alternating +-1 has exact zero mean and exact unit (biased) variance
  Tensor<double> x({4, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i / 3) % 2 == 0 ? 1.0 : -1.0;
  auto state = BatchNormState<double>::init(3);
  auto r = batchnorm(x, state, Mode::kTrain);
  EXPECT_LT(max_abs_diff(r.y, x), 1e-4);  // only the epsilon shrinks it
}

TEST(BatchNorm, TrainModeNormalizesBatchStatistics) {
  Rng rng(6);
  Tensor<double> x = Tensor<double>::rand_uniform({16, 4}, rng, -3.0, 5.0);
  auto state = BatchNormState<double>::init(4);
  auto r = batchnorm(x, state, Mode::kTrain);  // gamma=1, beta=0: y is xhat
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 16; ++n) mean += r.y.at(n, c);
    mean /= 16.0;
    for (std::size_t n = 0; n < 16; ++n) {
      var += (r.y.at(n, c) - mean) * (r.y.at(n, c) - mean);
    }
    var /= 16.0;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_LT(std::abs(var - 1.0), 1e-4);
  }
}

TEST(BatchNorm, RunningStatsFollowMomentumRule) {
  Rng rng(7);
  Tensor<double> x = Tensor<double>::rand_uniform({8, 2}, rng, 0.0, 4.0);
  double mean1 = 0.0, var1 = 0.0;
  for (std::size_t n = 0; n < 8; ++n) mean1 += x.at(n, 1);
  mean1 /= 8.0;
  for (std::size_t n = 0; n < 8; ++n) var1 += (x.at(n, 1) - mean1) * (x.at(n, 1) - mean1);
  var1 /= 8.0;

  auto state = BatchNormState<double>::init(2, 0.9, 1e-5);
  batchnorm(x, state, Mode::kTrain);
  EXPECT_NEAR(state.running_mean[1], 0.9 * 0.0 + 0.1 * mean1, 1e-12);
  EXPECT_NEAR(state.running_var[1], 0.9 * 1.0 + 0.1 * var1, 1e-12);
  EXPECT_EQ(state.update_count, 1);
}

TEST(BatchNorm, InferIsPureAndDeterministic) {
  Rng rng(8);
  Tensor<double> x = Tensor<double>::rand_uniform({4, 3}, rng);
  auto state = BatchNormState<double>::init(3);
  batchnorm(Tensor<double>(x), state, Mode::kTrain);

  const Tensor<double> rm = state.running_mean, rv = state.running_var;
  const long count = state.update_count;
  auto r1 = batchnorm(x, state, Mode::kInfer);
  auto r2 = batchnorm(x, state, Mode::kInfer);
  EXPECT_EQ(r1.y, r2.y);
  EXPECT_EQ(state.running_mean, rm);
  EXPECT_EQ(state.running_var, rv);
  EXPECT_EQ(state.update_count, count);
}

TEST(BatchNorm, InferBeforeAnyUpdateIsAnError) {
  Tensor<double> x({4, 3});
  auto state = BatchNormState<double>::init(3);
  EXPECT_THROW(batchnorm(x, state, Mode::kInfer), std::logic_error);
}

TEST(BatchNorm, TrainNeedsAtLeastTwoValuesPerChannel) {
  Tensor<double> x({1, 3});
  auto state = BatchNormState<double>::init(3);
  EXPECT_THROW(batchnorm(x, state, Mode::kTrain), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// maxpool
// ---------------------------------------------------------------------------

TEST(MaxPool, ConstantInputKeepsValueAndShapeRule) {
  Tensor<double> x = Tensor<double>::full({1, 2, 7, 9}, 0.75);
  auto r = maxpool(x);
  EXPECT_EQ(r.y.shape(), Shape({1, 2, 3, 4}));
  for (std::size_t i = 0; i < r.y.size(); ++i) EXPECT_EQ(r.y[i], 0.75);
}

TEST(MaxPool, ShapeChainFrom128) {
  std::size_t d = 128;
  std::vector<std::size_t> chain;
  for (int k = 0; k < 4; ++k) {
    d = pooled_dim(d);
    chain.push_back(d);
  }
  EXPECT_EQ(chain, std::vector<std::size_t>({63, 31, 15, 7}));
}

TEST(MaxPool, HandEvaluatedSmallCases) {
  // 4x4 ramp 1..16: floor rule gives a single 3x3 window, max 11
  std::vector<double> v16(16);
  for (int i = 0; i < 16; ++i) v16[static_cast<std::size_t>(i)] = i + 1;
  auto r4 = maxpool(Tensor<double>({1, 1, 4, 4}, std::move(v16)));
  EXPECT_EQ(r4.y.shape(), Shape({1, 1, 1, 1}));
  EXPECT_EQ(r4.y[0], 11.0);

  // 5x5 ramp 1..25: windows at offsets {0,2} x {0,2}
  std::vector<double> v25(25);
  for (int i = 0; i < 25; ++i) v25[static_cast<std::size_t>(i)] = i + 1;
  auto r5 = maxpool(Tensor<double>({1, 1, 5, 5}, std::move(v25)));
  EXPECT_EQ(r5.y.shape(), Shape({1, 1, 2, 2}));
  EXPECT_EQ(r5.y.vec(), std::vector<double>({13, 15, 23, 25}));
}

TEST(MaxPool, MatchesOracleOnAllShapes) {
  Rng rng(9);
  for (std::size_t n : {1u, 2u}) {
    for (std::size_t c : {1u, 3u}) {
      for (std::size_t h = 3; h <= 8; ++h) {
        for (std::size_t w = 3; w <= 8; ++w) {
          Tensor<double> x = Tensor<double>::rand_uniform({n, c, h, w}, rng, -1.0, 1.0);
          auto r = maxpool(x);
          ASSERT_LT(max_abs_diff(r.y, maxpool_oracle(x)), 1e-6);
        }
      }
    }
  }
}

TEST(MaxPool, RejectsTinySpatialDims) {
  EXPECT_THROW(maxpool(Tensor<double>({1, 1, 2, 5})), std::invalid_argument);
  EXPECT_THROW(maxpool(Tensor<double>({1, 1, 5, 2})), std::invalid_argument);
}

TEST(MaxPool, BackwardRoutesOnlyToArgmaxAndConservesMass) {
  Rng rng(10);
  for (std::size_t h : {3u, 4u, 5u, 7u}) {
    for (std::size_t w : {3u, 5u, 6u}) {
      // distinct values so argmax positions are unique
      Tensor<double> x({1, 1, h, w});
      std::vector<std::size_t> order(x.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(order[i]);

      auto r = maxpool(x);
      Tensor<double> gy = Tensor<double>::full(r.y.shape(), 1.0);
      auto mp = maxpool(x);
      Tensor<double> gx = maxpool_backward(gy, mp.cache);

      // gradient mass: every output window contributes exactly its gradient
      double mass = 0.0;
      for (std::size_t i = 0; i < gx.size(); ++i) mass += gx[i];
      EXPECT_DOUBLE_EQ(mass, static_cast<double>(r.y.size()));

      // positions holding gradient must be the argmax of some window
      std::set<double> window_maxima(r.y.vec().begin(), r.y.vec().end());
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (gx[i] != 0.0) EXPECT_TRUE(window_maxima.count(x[i]) == 1);
      }
    }
  }
}

TEST(MaxPool, TieBreaksToFirstInScanOrder) {
  Tensor<double> x = Tensor<double>::full({1, 1, 3, 3}, 2.0);
  auto r = maxpool(x);
  Tensor<double> gy({1, 1, 1, 1}, {1.0});
  Tensor<double> gx = maxpool_backward(gy, r.cache);
  EXPECT_EQ(gx[0], 1.0);  // first element of the window in row-major scan
  for (std::size_t i = 1; i < gx.size(); ++i) EXPECT_EQ(gx[i], 0.0);
}

// ---------------------------------------------------------------------------
// leaky relu
// ---------------------------------------------------------------------------

TEST(LeakyRelu, PointwiseValues) {
  const double alpha = 0.01;
  Tensor<double> x({3}, {2.0, -1.0, 0.0});
  auto r = leaky_relu(x, alpha);
  EXPECT_EQ(r.y[0], 2.0);
  EXPECT_EQ(r.y[1], -alpha);
  EXPECT_EQ(r.y[2], 0.0);
}

TEST(LeakyRelu, SlopeNearOneApproachesIdentity) {
  const double alpha = 0.999;
  Rng rng(11);
  Tensor<double> x = Tensor<double>::rand_uniform({40}, rng, -2.0, 2.0);
  auto r = leaky_relu(x, alpha);
  double max_neg = 0.0, max_dev = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0) max_neg = std::max(max_neg, -x[i]);
    max_dev = std::max(max_dev, std::abs(r.y[i] - x[i]));
  }
  EXPECT_NEAR(max_dev, (1.0 - alpha) * max_neg, 1e-12);
}

TEST(LeakyRelu, RejectsSlopeOutsideRange) {
  Tensor<double> x({2}, {1.0, -1.0});
  EXPECT_THROW(leaky_relu(x, 1.0), std::invalid_argument);
  EXPECT_THROW(leaky_relu(x, -0.1), std::invalid_argument);
}

TEST(LeakyRelu, GradientMatchesFiniteDifferencesAwayFromZero) {
  // inputs kept outside (-1e-3, 1e-3) so central differences are valid
  Rng rng(12);
  Tensor<double> x({50});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = rng.uniform(1e-2, 1.0);
    x[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  auto r = leaky_relu(x, 0.01);
  Tensor<double> gy = Tensor<double>::full(r.y.shape(), 1.0);
  auto lr = leaky_relu(x, 0.01);
  Tensor<double> gx = leaky_relu_backward(gy, lr.cache);

  const double eps = 1e-5;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor<double> xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    const double numeric = (leaky_relu(xp, 0.01).y[i] - leaky_relu(xm, 0.01).y[i]) / (2 * eps);
    max_rel = std::max(max_rel, std::abs(gx[i] - numeric) /
                                    std::max({std::abs(gx[i]), std::abs(numeric), 1e-8}));
  }
  EXPECT_LT(max_rel, 1e-4);
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Rng rng(13);
  Tensor<double> x = Tensor<double>::rand_uniform({100}, rng);
  auto r = dropout(Tensor<double>(x), 0.0, Mode::kTrain, 99);
  EXPECT_EQ(r.y, x);
}

TEST(Dropout, InferModeIsExactIdentity) {
  Rng rng(14);
  Tensor<double> x = Tensor<double>::rand_uniform({100}, rng);
  auto r = dropout(Tensor<double>(x), 0.7, Mode::kInfer, 99);
  EXPECT_EQ(r.y, x);
}

TEST(Dropout, KeptFractionWithinBinomialBound) {
  const std::size_t n = 1000000;
  const double p = 0.5;
  Rng rng(15);
  Tensor<double> x = Tensor<double>::rand_uniform({n}, rng, 0.5, 1.5);
  auto r = dropout(Tensor<double>(x), p, Mode::kTrain, 1234);

  std::size_t kept = 0;
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    kept += r.y[i] != 0.0 ? 1 : 0;
    mean_x += x[i];
    mean_y += r.y[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  const double bound = 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(n), 0.5, bound);
  EXPECT_NEAR(mean_y / mean_x, 1.0, 0.01);
}

TEST(Dropout, MaskReproducibleFromSeedAndZerosOnlyAtMask) {
  Rng rng(16);
  Tensor<double> x = Tensor<double>::rand_uniform({400}, rng, 0.5, 1.5);  // strictly positive
  auto a = dropout(Tensor<double>(x), 0.4, Mode::kTrain, 77);
  auto b = dropout(Tensor<double>(x), 0.4, Mode::kTrain, 77);
  auto c = dropout(Tensor<double>(x), 0.4, Mode::kTrain, 78);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.y, c.y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (a.cache.keep[i]) {
      EXPECT_NE(a.y[i], 0.0);  // survivors scaled, never exactly zero
    } else {
      EXPECT_EQ(a.y[i], 0.0);
    }
  }
}

TEST(Dropout, RejectsBadProbability) {
  Tensor<double> x({2}, {1.0, 2.0});
  EXPECT_THROW(dropout(x, 1.0, Mode::kTrain, 1), std::invalid_argument);
  EXPECT_THROW(dropout(x, -0.1, Mode::kTrain, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

TEST(Dense, IdentityWeightsReproduceInput) {
  Rng rng(17);
  Tensor<double> x = Tensor<double>::rand_uniform({3, 4}, rng);
  Tensor<double> w({4, 4});
  for (std::size_t i = 0; i < 4; ++i) w.at(i, i) = 1.0;
  Tensor<double> b({4});
  auto r = dense(x, w, b);
  EXPECT_LT(max_abs_diff(r.y, x), 1e-12);
}

TEST(Dense, ZeroWeightsGiveBiasRows) {
  Rng rng(18);
  Tensor<double> x = Tensor<double>::rand_uniform({3, 4}, rng);
  Tensor<double> w({4, 2});
  Tensor<double> b({2}, {1.5, -0.5});
  auto r = dense(x, w, b);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.y.at(i, 0), 1.5);
    EXPECT_EQ(r.y.at(i, 1), -0.5);
  }
}

TEST(Dense, HandComputedExample) {
  Tensor<double> x({1, 2}, {1, 2});
  Tensor<double> w({2, 3}, {1, 0, 2, 0, 1, 3});
  Tensor<double> b({3}, {1, 1, 1});
  auto r = dense(x, w, b);
  EXPECT_EQ(r.y.vec(), std::vector<double>({2, 3, 9}));
}

TEST(Dense, RejectsDimensionMismatch) {
  Tensor<double> x({2, 3});
  Tensor<double> w({4, 2});
  Tensor<double> b({2});
  try {
    dense(x, w, b);
    FAIL() << "expected a dimension diagnostic";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// softmax cross entropy
// ---------------------------------------------------------------------------

TEST(SoftmaxXent, UniformLogitsGiveLogK) {
  Tensor<double> logits({2, 24});
  auto r = softmax_cross_entropy(logits, {3, 17});
  EXPECT_NEAR(r.loss, std::log(24.0), 1e-12);
  EXPECT_NEAR(r.loss, 3.17805, 1e-5);
}

TEST(SoftmaxXent, SaturatedCorrectClassHasTinyLoss) {
  Tensor<double> logits({1, 24});
  logits.at(0, 5) = 50.0;
  auto r = softmax_cross_entropy(logits, {5});
  EXPECT_LT(r.loss, 1e-10);
}

TEST(SoftmaxXent, InvariantToConstantRowShift) {
  Rng rng(19);
  Tensor<double> logits = Tensor<double>::rand_uniform({4, 8}, rng, -3.0, 3.0);
  std::vector<int> labels = {1, 0, 7, 4};
  auto base = softmax_cross_entropy(logits, labels);
  Tensor<double> shifted = logits;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 8; ++j) shifted.at(i, j) += 123.456;
  }
  auto moved = softmax_cross_entropy(shifted, labels);
  EXPECT_NEAR(base.loss, moved.loss, 1e-10);
}

TEST(SoftmaxXent, GradientIsSoftmaxMinusOneHotOverN) {
  Rng rng(20);
  Tensor<double> logits = Tensor<double>::rand_uniform({3, 5}, rng, -2.0, 2.0);
  std::vector<int> labels = {4, 2, 0};
  auto r = softmax_cross_entropy(logits, labels);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 5; ++j) row += r.probs.at(i, j);
    EXPECT_NEAR(row, 1.0, 1e-9);  // softmax rows sum to one
    for (std::size_t j = 0; j < 5; ++j) {
      const double expect =
          (r.probs.at(i, j) - (labels[i] == static_cast<int>(j) ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(r.grad_logits.at(i, j), expect, 1e-12);
      sum += r.grad_logits.at(i, j);
    }
  }
  EXPECT_NEAR(sum, 0.0, 1e-9);
}

TEST(SoftmaxXent, RejectsBadLabelsAndNonFiniteLogits) {
  Tensor<double> logits({2, 4});
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 4}), std::invalid_argument);
  EXPECT_THROW(softmax_cross_entropy(logits, {-1, 0}), std::invalid_argument);
  EXPECT_THROW(softmax_cross_entropy(logits, {0}), std::invalid_argument);
  logits.at(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 1}), std::invalid_argument);
}
