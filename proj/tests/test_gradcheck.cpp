#include <gtest/gtest.h>

#include <chrono>
#include <set>

#include "radnet/gradcheck_suite.hpp"

using namespace radnet;

TEST(GradCheck, SuitePassesEveryOp) {
  const auto results = run_gradcheck_suite();
  std::set<std::string> names;
  for (const auto& e : results) {
    EXPECT_TRUE(e.passed()) << e.op << " max_rel_err " << e.max_rel_err << " vs " << e.threshold;
    names.insert(e.op);
  }
  EXPECT_EQ(names.size(), results.size());  // every op listed exactly once
  EXPECT_TRUE(names.count("conv2d"));
  EXPECT_TRUE(names.count("dense"));
  EXPECT_TRUE(names.count("batchnorm"));
  EXPECT_TRUE(names.count("maxpool"));
  EXPECT_TRUE(names.count("leaky_relu"));
  EXPECT_TRUE(names.count("dropout"));
  EXPECT_TRUE(names.count("softmax_cross_entropy"));
  EXPECT_TRUE(names.count("model_reduced"));
}

TEST(GradCheck, ThresholdsFollowTheContract) {
  for (const auto& e : run_gradcheck_suite()) {
    if (e.op == "batchnorm" || e.op == "model_reduced") {
      EXPECT_DOUBLE_EQ(e.threshold, 1e-3);
    } else if (e.op == "softmax_cross_entropy") {
      EXPECT_DOUBLE_EQ(e.threshold, 1e-5);
    } else {
      EXPECT_DOUBLE_EQ(e.threshold, 1e-4);
    }
  }
}

TEST(GradCheck, DetectsABrokenBackward) {
  Rng rng(21);
  TensorList inputs = {Tensor<double>::rand_uniform({3, 4}, rng, -1.0, 1.0),
                       Tensor<double>::rand_uniform({4, 5}, rng, -1.0, 1.0),
                       Tensor<double>::rand_uniform({5}, rng, -1.0, 1.0)};
  const double err = grad_check(
      [](const TensorList& in) { return dense(in[0], in[1], in[2]).y; },
      [](const TensorList& in, const Tensor<double>& proj) {
        auto r = dense(in[0], in[1], in[2]);
        auto g = dense_backward(proj, r.cache);
        for (std::size_t i = 0; i < g.w.size(); ++i) g.w[i] *= 1.25;  // sabotage
        return TensorList{std::move(g.x), std::move(g.w), std::move(g.b)};
      },
      std::move(inputs), 1e-5);
  EXPECT_GT(err, 0.05);
}

TEST(GradCheck, RejectsNonDeterministicOps) {
  int calls = 0;
  EXPECT_THROW(grad_check(
                   [&calls](const TensorList& in) {
                     Tensor<double> y = in[0];
                     y[0] += static_cast<double>(calls++);  // changes between calls
                     return y;
                   },
                   [](const TensorList& in, const Tensor<double>& proj) {
                     return TensorList{proj};
                   },
                   {Tensor<double>({3}, {1.0, 2.0, 3.0})}, 1e-5),
               std::invalid_argument);
}

TEST(GradCheck, RejectsEpsOutsideRange) {
  auto fwd = [](const TensorList& in) { return in[0]; };
  auto bwd = [](const TensorList&, const Tensor<double>& proj) { return TensorList{proj}; };
  EXPECT_THROW(grad_check(fwd, bwd, {Tensor<double>({2}, {1.0, 2.0})}, 1e-2),
               std::invalid_argument);
  EXPECT_THROW(grad_check(fwd, bwd, {Tensor<double>({2}, {1.0, 2.0})}, 1e-8),
               std::invalid_argument);
}

TEST(GradCheck, SuiteRunsFast) {
  const auto t0 = std::chrono::steady_clock::now();
  run_gradcheck_suite();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(seconds, 120.0);
}
