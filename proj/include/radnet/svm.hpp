#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "radnet/checkpoint.hpp"
#include "radnet/error.hpp"
#include "radnet/features.hpp"
#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

struct SvmControls {
  std::size_t max_epochs = 300;
  double tolerance = 1e-6;  // relative objective decrease
  double eta0 = 1.0;
  double eta_lambda = 0.01;  // trial step eta0 / (1 + lambda * epoch)
};

struct SvmConfig {
  double C = 1.0;
  std::vector<double> grid;  // strictly increasing C candidates
  std::size_t folds = 5;
  bool l2_normalize = false;
  SvmControls controls;

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int e = -10; e <= 10; e += 2) g.push_back(std::ldexp(1.0, e));
    return g;
  }

  void validate() const {
    if (C <= 0) throw ConfigError("svm: C must be positive");
    if (folds < 2) throw ConfigError("svm: folds must be at least 2");
    if (grid.empty()) throw ConfigError("svm: grid must not be empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (grid[i] <= 0) throw ConfigError("svm: grid values must be positive");
      if (i > 0 && grid[i] <= grid[i - 1]) {
        throw ConfigError("svm: grid must be strictly increasing");
      }
    }
  }
};

struct BinarySvm {
  std::vector<double> w;
  double b = 0.0;
  double objective = 0.0;
  std::vector<double> objective_log;  // one entry per accepted epoch
};

/// One-vs-rest multiclass linear SVM: row k of W scores class k.
struct MulticlassSvm {
  Tensor<double> weights;  // [K, D]
  Tensor<double> bias;     // [K]
  double trained_c = 0.0;
  std::vector<std::string> classes;  // optional names, size K when present

  std::size_t num_classes() const { return weights.dim(0); }
  std::size_t dim() const { return weights.dim(1); }
};

namespace detail {

inline double svm_objective(const Tensor<float>& x, const std::vector<int>& y,
                            const std::vector<double>& w, double b, double c) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  double hinge = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = x.data() + i * d;
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(row[j]) * w[j];
    hinge += std::max(0.0, 1.0 - y[i] * s);
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return 0.5 * reg + c * hinge;
}

}  // namespace detail

/// Trains a binary soft-margin linear SVM on the primal objective
/// 0.5*|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b)) by deterministic
/// full-batch subgradient descent. Each epoch takes one step: the trial step
/// size eta0/(1+lambda*t) is halved until the full objective decreases, which
/// makes the logged objective non-increasing by construction.
inline BinarySvm train_binary(const Tensor<float>& x, const std::vector<int>& y, double c,
                              const SvmControls& controls = {}) {
  if (x.rank() != 2) throw std::invalid_argument("svm: features must be [M,D]");
  const std::size_t m = x.dim(0), d = x.dim(1);
  if (y.size() != m) {
    throw std::invalid_argument("svm: " + std::to_string(y.size()) + " labels for " +
                                std::to_string(m) + " rows");
  }
  if (m < 2) throw std::invalid_argument("svm: need at least 2 training rows");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else throw std::invalid_argument("svm: labels must be +1/-1, got " + std::to_string(v));
  }
  if (!has_pos || !has_neg) {
    throw std::invalid_argument("svm: both classes must be present in the training data");
  }
  if (c <= 0) throw std::invalid_argument("svm: C must be positive");

  BinarySvm svm;
  svm.w.assign(d, 0.0);
  svm.objective = detail::svm_objective(x, y, svm.w, svm.b, c);
  svm.objective_log.push_back(svm.objective);

  std::vector<double> gw(d), wt(d);
  std::vector<double> scores(m);
  for (std::size_t epoch = 0; epoch < controls.max_epochs; ++epoch) {
    // subgradient at (w, b)
    std::copy(svm.w.begin(), svm.w.end(), gw.begin());
    double gb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const float* row = x.data() + i * d;
      double s = svm.b;
      for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(row[j]) * svm.w[j];
      if (y[i] * s < 1.0) {
        const double f = -c * y[i];
        for (std::size_t j = 0; j < d; ++j) gw[j] += f * static_cast<double>(row[j]);
        gb += f;
      }
    }
    double gnorm2 = gb * gb;
    for (double v : gw) gnorm2 += v * v;
    if (gnorm2 < 1e-24) break;

    double eta = controls.eta0 / (1.0 + controls.eta_lambda * static_cast<double>(epoch));
    bool accepted = false;
    double new_obj = svm.objective, new_b = svm.b;
    for (int halving = 0; halving < 60; ++halving) {
      for (std::size_t j = 0; j < d; ++j) wt[j] = svm.w[j] - eta * gw[j];
      const double bt = svm.b - eta * gb;
      const double obj = detail::svm_objective(x, y, wt, bt, c);
      if (obj < svm.objective) {
        accepted = true;
        new_obj = obj;
        new_b = bt;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // no descent step found: at (or pinned to) a kink minimum
    const double rel_dec = (svm.objective - new_obj) / std::max(std::abs(svm.objective), 1e-300);
    svm.w.swap(wt);
    svm.b = new_b;
    svm.objective = new_obj;
    svm.objective_log.push_back(new_obj);
    if (rel_dec < controls.tolerance) break;
  }
  return svm;
}

/// Trains K one-vs-rest binary problems (class k positive, rest negative).
inline MulticlassSvm train_ovr(const FeatureSet& features, double c,
                               const SvmControls& controls = {}) {
  features.validate();
  const std::size_t k = features.num_classes();
  if (k < 2) throw DataError("svm: need at least 2 classes, got " + std::to_string(k));
  const std::size_t m = features.rows(), d = features.dim();

  std::vector<std::size_t> counts(k, 0);
  for (std::uint32_t id : features.class_ids) counts[id]++;
  for (std::size_t cls = 0; cls < k; ++cls) {
    if (counts[cls] == 0) {
      throw DataError("svm: class " + std::to_string(cls) + " is absent from the training data");
    }
  }

  MulticlassSvm svm;
  svm.weights = Tensor<double>({k, d});
  svm.bias = Tensor<double>({k});
  svm.trained_c = c;
  std::vector<int> y(m);
  for (std::size_t cls = 0; cls < k; ++cls) {
    for (std::size_t i = 0; i < m; ++i) y[i] = features.class_ids[i] == cls ? 1 : -1;
    BinarySvm bin = train_binary(features.vectors, y, c, controls);
    std::copy(bin.w.begin(), bin.w.end(), svm.weights.data() + cls * d);
    svm.bias[cls] = bin.b;
  }
  return svm;
}

/// Argmax of W.x + b; ties break toward the lowest class index.
inline int predict(const MulticlassSvm& svm, const float* x, std::size_t dim) {
  if (dim != svm.dim()) {
    throw std::invalid_argument("svm: input dimension " + std::to_string(dim) +
                                " != model dimension " + std::to_string(svm.dim()));
  }
  const std::size_t k = svm.num_classes(), d = svm.dim();
  int best = 0;
  double best_score = 0.0;
  for (std::size_t cls = 0; cls < k; ++cls) {
    const double* w = svm.weights.data() + cls * d;
    double s = svm.bias[cls];
    for (std::size_t j = 0; j < d; ++j) s += w[j] * static_cast<double>(x[j]);
    if (cls == 0 || s > best_score) {
      best_score = s;
      best = static_cast<int>(cls);
    }
  }
  return best;
}

inline double svm_accuracy(const MulticlassSvm& svm, const FeatureSet& features) {
  features.validate();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const int pred = predict(svm, features.vectors.data() + i * features.dim(), features.dim());
    correct += static_cast<std::uint32_t>(pred) == features.class_ids[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(features.rows());
}

// ---------------------------------------------------------------------------
// cross-validated grid search
// ---------------------------------------------------------------------------

struct CvCell {
  double c = 0.0;
  std::size_t fold = 0;
  double accuracy = 0.0;
};

struct GridSearchResult {
  double best_c = 0.0;
  std::vector<CvCell> table;  // |grid| x folds rows
  std::vector<double> mean_accuracy;  // per grid entry
};

/// Stratified fold assignment: per class, members are shuffled by the seed and
/// dealt round-robin, so fold sizes are class-balanced within one.
inline std::vector<std::size_t> stratified_folds(const std::vector<std::uint32_t>& class_ids,
                                                 std::size_t num_classes, std::size_t folds,
                                                 std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < class_ids.size(); ++i) members[class_ids[i]].push_back(i);
  std::vector<std::size_t> fold_of(class_ids.size(), 0);
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    if (members[cls].size() < folds) {
      throw DataError("svm: class " + std::to_string(cls) + " has " +
                      std::to_string(members[cls].size()) + " members, fewer than " +
                      std::to_string(folds) + " folds");
    }
    Rng rng(mix_seed(seed, cls));
    rng.shuffle(members[cls]);
    for (std::size_t i = 0; i < members[cls].size(); ++i) fold_of[members[cls][i]] = i % folds;
  }
  return fold_of;
}

/// Exhaustive search over the C grid with stratified k-fold cross-validation.
/// Ties in mean validation accuracy resolve toward the smallest C.
inline GridSearchResult grid_search_cv(const FeatureSet& features, const std::vector<double>& grid,
                                       std::size_t folds, std::uint64_t seed,
                                       const SvmControls& controls = {}) {
  features.validate();
  if (grid.empty()) throw ConfigError("svm: grid must not be empty");
  const std::size_t k = features.num_classes();
  const std::size_t m = features.rows(), d = features.dim();
  const std::vector<std::size_t> fold_of = stratified_folds(features.class_ids, k, folds, seed);

  GridSearchResult result;
  double best_mean = -1.0;
  for (double c : grid) {
    double mean = 0.0;
    for (std::size_t fold = 0; fold < folds; ++fold) {
      FeatureSet train_set, val_set;
      std::vector<float> tr_data, va_data;
      for (std::size_t i = 0; i < m; ++i) {
        const float* row = features.vectors.data() + i * d;
        if (fold_of[i] == fold) {
          va_data.insert(va_data.end(), row, row + d);
          val_set.class_ids.push_back(features.class_ids[i]);
        } else {
          tr_data.insert(tr_data.end(), row, row + d);
          train_set.class_ids.push_back(features.class_ids[i]);
        }
      }
      train_set.vectors = Tensor<float>({train_set.class_ids.size(), d}, std::move(tr_data));
      val_set.vectors = Tensor<float>({val_set.class_ids.size(), d}, std::move(va_data));
      const MulticlassSvm svm = train_ovr(train_set, c, controls);
      const double acc = svm_accuracy(svm, val_set);
      result.table.push_back({c, fold, acc});
      mean += acc;
    }
    mean /= static_cast<double>(folds);
    result.mean_accuracy.push_back(mean);
    if (mean > best_mean) {  // strictly greater: ties keep the smaller C
      best_mean = mean;
      result.best_c = c;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// serialization (same container format as model checkpoints)
// ---------------------------------------------------------------------------

inline void save_svm(const MulticlassSvm& svm, const std::string& path) {
  TensorFile file;
  file.put_string("format", "radnet-svm");
  file.put("weights", svm.weights);
  file.put("bias", svm.bias);
  file.put_string("trained_c", std::to_string(svm.trained_c));
  std::string classes;
  for (std::size_t i = 0; i < svm.classes.size(); ++i) {
    classes += (i ? "," : "") + svm.classes[i];
  }
  file.put_string("classes", classes);
  file.write(path);
}

inline MulticlassSvm load_svm(const std::string& path) {
  TensorFile file = TensorFile::read(path);
  if (!file.has_string("format") || file.get_string("format") != "radnet-svm") {
    throw DataError("svm: '" + path + "' is not an svm model file");
  }
  MulticlassSvm svm;
  svm.weights = file.get_f64("weights");
  svm.bias = file.get_f64("bias");
  if (svm.weights.rank() != 2 || svm.bias.rank() != 1 || svm.bias.dim(0) != svm.weights.dim(0)) {
    throw DataError("svm: '" + path + "' has inconsistent weight/bias shapes");
  }
  try {
    svm.trained_c = std::stod(file.get_string("trained_c"));
  } catch (const std::exception&) {
    throw DataError("svm: '" + path + "' has a malformed trained_c record");
  }
  const std::string& classes = file.get_string("classes");
  if (!classes.empty()) {
    std::stringstream ss(classes);
    std::string tok;
    while (std::getline(ss, tok, ',')) svm.classes.push_back(tok);
  }
  return svm;
}

}  // namespace radnet
