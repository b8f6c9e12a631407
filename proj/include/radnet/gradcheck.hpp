#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

using TensorList = std::vector<Tensor<double>>;

/// Forward map from inputs to a single output tensor.
using GradCheckForward = std::function<Tensor<double>(const TensorList&)>;

/// Analytic gradients of sum(output * projection) wrt every input. The
/// callback receives the unperturbed inputs and the projection used as the
/// upstream gradient.
using GradCheckBackward =
    std::function<TensorList(const TensorList&, const Tensor<double>& projection)>;

/// Central-difference gradient check. Scalarizes the op through a fixed random
/// projection, perturbs every input coordinate by +-eps and returns the
/// largest relative disagreement |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8) over all coordinates.
inline double grad_check(const GradCheckForward& forward, const GradCheckBackward& backward,
                         TensorList inputs, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps " + std::to_string(eps) +
                                " outside [1e-7, 1e-3]");
  }
  const Tensor<double> y0 = forward(inputs);
  if (forward(inputs) != y0) {
    throw std::invalid_argument("grad_check: op is not deterministic under fixed inputs");
  }

  Rng rng(0x9e3779b97f4a7c15ULL);
  Tensor<double> projection = Tensor<double>::rand_uniform(y0.shape(), rng, -1.0, 1.0);
  auto loss = [&](const Tensor<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * projection[i];
    return s;
  };

  const TensorList analytic = backward(inputs, projection);
  if (analytic.size() != inputs.size()) {
    throw std::invalid_argument("grad_check: backward returned " +
                                std::to_string(analytic.size()) + " gradients for " +
                                std::to_string(inputs.size()) + " inputs");
  }

  double max_rel = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (analytic[t].shape() != inputs[t].shape()) {
      throw std::invalid_argument("grad_check: gradient " + std::to_string(t) + " has shape " +
                                  shape_str(analytic[t].shape()) + ", input has " +
                                  shape_str(inputs[t].shape()));
    }
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + eps;
      const double lp = loss(forward(inputs));
      inputs[t][i] = saved - eps;
      const double lm = loss(forward(inputs));
      inputs[t][i] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace radnet
