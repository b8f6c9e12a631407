#pragma once

#include <string>
#include <vector>

#include "radnet/gradcheck.hpp"
#include "radnet/layers.hpp"
#include "radnet/model.hpp"

namespace radnet {

struct GradCheckEntry {
  std::string op;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool passed() const { return max_rel_err < threshold; }
};

/// End-to-end finite-difference check of every trainable parameter of a small
/// model against the analytic backward pass, at the loss level.
template <typename BuildFn>
double model_grad_check(const ModelSpec& spec, std::uint64_t seed, double eps, BuildFn&& tweak) {
  Model<double> model = build_model<double>(spec, seed);
  tweak(model);

  Rng rng(mix_seed(seed, 1));
  Tensor<double> batch =
      Tensor<double>::rand_uniform({2, spec.in_channels, spec.in_height, spec.in_width}, rng);
  std::vector<int> labels(2);
  for (int& l : labels) l = static_cast<int>(rng.below(spec.num_classes));
  const std::uint64_t dropout_seed = mix_seed(seed, 2);

  auto loss_at = [&]() {
    auto fwd = forward(model, batch, Mode::kTrain, dropout_seed);
    return softmax_cross_entropy(fwd.logits, labels).loss;
  };

  auto fwd = forward(model, batch, Mode::kTrain, dropout_seed);
  auto sm = softmax_cross_entropy(fwd.logits, labels);
  auto grads = backward(model, sm.grad_logits, fwd.caches);

  double max_rel = 0.0;
  for (auto& [name, param] : model.parameters()) {
    const Tensor<double>& g = grads.at(name);
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double saved = (*param)[i];
      (*param)[i] = saved + eps;
      const double lp = loss_at();
      (*param)[i] = saved - eps;
      const double lm = loss_at();
      (*param)[i] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double rel =
          std::abs(g[i] - numeric) / std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

inline double model_grad_check(const ModelSpec& spec, std::uint64_t seed, double eps) {
  return model_grad_check(spec, seed, eps, [](Model<double>&) {});
}

/// Small reduced network (2 conv blocks, 1 pool, 1 dense block, 8x8 input)
/// for the end-to-end check.
inline ModelSpec reduced_spec() {
  ModelSpec spec;
  spec.in_channels = 1;
  spec.in_height = 8;
  spec.in_width = 8;
  spec.num_classes = 3;
  spec.layers = {{LayerKind::kConv, 3}, {LayerKind::kConv, 2}, {LayerKind::kPool, 0},
                 {LayerKind::kDense, 6}};
  return spec;
}

/// Runs the finite-difference check once per layer op plus the reduced-model
/// end-to-end check. Inputs are drawn away from non-differentiable points
/// (ReLU kinks, pooling ties) so that central differences are valid.
inline std::vector<GradCheckEntry> run_gradcheck_suite() {
  std::vector<GradCheckEntry> out;
  const double eps = 1e-5;

  {  // conv2d
    Rng rng(101);
    TensorList inputs = {Tensor<double>::rand_uniform({2, 3, 5, 5}, rng, -1.0, 1.0),
                         Tensor<double>::rand_uniform({2, 3, 3, 3}, rng, -1.0, 1.0),
                         Tensor<double>::rand_uniform({2}, rng, -1.0, 1.0)};
    const double err = grad_check(
        [](const TensorList& in) { return conv2d(in[0], in[1], in[2]).y; },
        [](const TensorList& in, const Tensor<double>& proj) {
          auto r = conv2d(in[0], in[1], in[2]);
          auto g = conv2d_backward(proj, r.cache);
          return TensorList{std::move(g.x), std::move(g.w), std::move(g.b)};
        },
        std::move(inputs), eps);
    out.push_back({"conv2d", err, 1e-4});
  }

  {  // dense
    Rng rng(102);
    TensorList inputs = {Tensor<double>::rand_uniform({3, 4}, rng, -1.0, 1.0),
                         Tensor<double>::rand_uniform({4, 5}, rng, -1.0, 1.0),
                         Tensor<double>::rand_uniform({5}, rng, -1.0, 1.0)};
    const double err = grad_check(
        [](const TensorList& in) { return dense(in[0], in[1], in[2]).y; },
        [](const TensorList& in, const Tensor<double>& proj) {
          auto r = dense(in[0], in[1], in[2]);
          auto g = dense_backward(proj, r.cache);
          return TensorList{std::move(g.x), std::move(g.w), std::move(g.b)};
        },
        std::move(inputs), eps);
    out.push_back({"dense", err, 1e-4});
  }

  {  // batchnorm, train mode, [8,4] input; gamma and beta are checked too
    Rng rng(103);
    TensorList inputs = {Tensor<double>::rand_uniform({8, 4}, rng, -2.0, 2.0),
                         Tensor<double>::rand_uniform({4}, rng, 0.5, 1.5),
                         Tensor<double>::rand_uniform({4}, rng, -0.5, 0.5)};
    auto run = [](const TensorList& in) {
      BatchNormState<double> state = BatchNormState<double>::init(in[1].size());
      state.gamma = in[1];
      state.beta = in[2];
      return batchnorm(in[0], state, Mode::kTrain);
    };
    const double err = grad_check(
        [&](const TensorList& in) { return run(in).y; },
        [&](const TensorList& in, const Tensor<double>& proj) {
          auto r = run(in);
          auto g = batchnorm_backward(proj, r.cache);
          return TensorList{std::move(g.x), std::move(g.gamma), std::move(g.beta)};
        },
        std::move(inputs), eps);
    out.push_back({"batchnorm", err, 1e-3});
  }

  {  // maxpool; distinct values keep window maxima well separated
    Rng rng(104);
    Tensor<double> x({2, 2, 5, 5});
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.05 * static_cast<double>(order[i]);
    const double err = grad_check(
        [](const TensorList& in) { return maxpool(in[0]).y; },
        [](const TensorList& in, const Tensor<double>& proj) {
          auto r = maxpool(in[0]);
          return TensorList{maxpool_backward(proj, r.cache)};
        },
        {std::move(x)}, eps);
    out.push_back({"maxpool", err, 1e-4});
  }

  {  // leaky relu, inputs kept away from the kink at 0
    Rng rng(105);
    Tensor<double> x = Tensor<double>::rand_uniform({4, 7}, rng, 0.1, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (rng.bernoulli(0.5)) x[i] = -x[i];
    }
    const double err = grad_check(
        [](const TensorList& in) { return leaky_relu(in[0], 0.01).y; },
        [](const TensorList& in, const Tensor<double>& proj) {
          auto r = leaky_relu(in[0], 0.01);
          return TensorList{leaky_relu_backward(proj, r.cache)};
        },
        {std::move(x)}, eps);
    out.push_back({"leaky_relu", err, 1e-4});
  }

  {  // dropout with a fixed mask seed
    Rng rng(106);
    Tensor<double> x = Tensor<double>::rand_uniform({5, 6}, rng, 0.1, 1.0);
    const std::uint64_t seed = 42;
    const double err = grad_check(
        [&](const TensorList& in) { return dropout(in[0], 0.3, Mode::kTrain, seed).y; },
        [&](const TensorList& in, const Tensor<double>& proj) {
          auto r = dropout(in[0], 0.3, Mode::kTrain, seed);
          return TensorList{dropout_backward(proj, r.cache)};
        },
        {std::move(x)}, eps);
    out.push_back({"dropout", err, 1e-4});
  }

  {  // softmax cross entropy at the loss level
    Rng rng(107);
    Tensor<double> logits = Tensor<double>::rand_uniform({4, 6}, rng, -2.0, 2.0);
    std::vector<int> labels = {0, 3, 5, 2};
    const double err = grad_check(
        [&](const TensorList& in) {
          return Tensor<double>({1}, {softmax_cross_entropy(in[0], labels).loss});
        },
        [&](const TensorList& in, const Tensor<double>& proj) {
          auto r = softmax_cross_entropy(in[0], labels);
          Tensor<double> g(r.grad_logits.shape());
          for (std::size_t i = 0; i < g.size(); ++i) g[i] = proj[0] * r.grad_logits[i];
          return TensorList{std::move(g)};
        },
        {std::move(logits)}, eps);
    out.push_back({"softmax_cross_entropy", err, 1e-5});
  }

  // The head starts at zero by construction, which would zero out every
  // hidden gradient; give it random weights so the whole stack is exercised.
  // eps is larger here: parameters made loss-invariant by a downstream BN
  // (conv biases, some BN betas) have true gradient 0, and the numeric side
  // must stay below the 1e-8 floor of the relative-error formula.
  out.push_back({"model_reduced",
                 model_grad_check(reduced_spec(), 18, 1e-4,
                                  [](Model<double>& m) {
                                    Rng rng(303);
                                    m.head_weight =
                                        Tensor<double>::rand_uniform(m.head_weight.shape(), rng,
                                                                     -0.5, 0.5);
                                    m.head_bias = Tensor<double>::rand_uniform(
                                        m.head_bias.shape(), rng, -0.1, 0.1);
                                  }),
                 1e-3});
  return out;
}

}  // namespace radnet
