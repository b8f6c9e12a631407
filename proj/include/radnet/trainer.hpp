#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "radnet/augment.hpp"
#include "radnet/dataset.hpp"
#include "radnet/error.hpp"
#include "radnet/image_io.hpp"
#include "radnet/model.hpp"

namespace radnet {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double lr0 = 0.01;
  double momentum = 0.9;
  double lr_decay = 0.1;                        // applied at each milestone
  std::vector<double> decay_at = {0.5, 0.75};   // fractions of total epochs
  double weight_decay = 1e-4;
  std::uint64_t seed = 42;
  bool augment_enabled = true;
  AugmentConfig augment;
  // Harness stop targets, disabled at 0: end training early once the given
  // accuracy is reached (train accuracy is the running train-mode figure,
  // test accuracy the per-epoch evaluation).
  double stop_train_acc = 0.0;
  double stop_test_acc = 0.0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (lr0 <= 0) throw ConfigError("train: lr0 must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum outside [0,1)");
    if (lr_decay <= 0 || lr_decay > 1) throw ConfigError("train: lr_decay outside (0,1]");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    augment.validate();
  }

  double lr_at(std::size_t epoch) const {
    double lr = lr0;
    for (double frac : decay_at) {
      if (epoch >= static_cast<std::size_t>(frac * static_cast<double>(epochs))) lr *= lr_decay;
    }
    return lr;
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // on train-mode forward passes (augmented batches)
  double test_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  std::size_t optimizer_steps = 0;
};

using RunHistory = std::vector<EpochStats>;

inline void write_history_csv(const RunHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("history: cannot open '" + path + "' for writing");
  out << "epoch,train_loss,train_acc,test_acc,lr,seconds\n";
  out.precision(10);
  for (const auto& e : history) {
    out << e.epoch << "," << e.train_loss << "," << e.train_acc << "," << e.test_acc << ","
        << e.lr << "," << e.seconds << "\n";
  }
}

/// All images of a manifest decoded and standardized in memory.
struct LoadedDataset {
  std::vector<Tensor<float>> images;  // each [1,H,W]
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<std::string> classes;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) out.push_back(i);
    }
    return out;
  }
  std::size_t num_classes() const { return classes.size(); }
};

/// Loads every record of the manifest; relative image paths resolve against
/// base_dir.
inline LoadedDataset load_dataset(const DatasetManifest& manifest, const std::string& base_dir,
                                  std::size_t target_h = 128, std::size_t target_w = 128) {
  namespace fs = std::filesystem;
  LoadedDataset data;
  data.classes = manifest.classes;
  data.images.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    fs::path p(r.path);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    data.images.push_back(load_image(p.string(), target_h, target_w));
    data.labels.push_back(r.class_id);
    data.splits.push_back(r.split);
  }
  return data;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::size_t> confusion;  // K*K row-major, row = true class
  std::size_t num_classes = 0;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return confusion[truth * num_classes + pred];
  }
};

inline void write_confusion_csv(const EvalResult& eval, const std::vector<std::string>& classes,
                                const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("confusion: cannot open '" + path + "' for writing");
  out << "true_class";
  for (std::size_t j = 0; j < eval.num_classes; ++j) out << ",pred_" << j;
  out << "\n";
  for (std::size_t i = 0; i < eval.num_classes; ++i) {
    out << (i < classes.size() ? classes[i] : std::to_string(i));
    for (std::size_t j = 0; j < eval.num_classes; ++j) out << "," << eval.at(i, j);
    out << "\n";
  }
}

namespace detail {

template <typename T>
Tensor<T> assemble_batch(const LoadedDataset& data, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  const Shape& s = data.images[order[begin]].shape();
  Tensor<T> batch({n, s[0], s[1], s[2]});
  const std::size_t stride = s[0] * s[1] * s[2];
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<float>& img = data.images[order[begin + i]];
    T* dst = batch.data() + i * stride;
    for (std::size_t j = 0; j < stride; ++j) dst[j] = static_cast<T>(img[j]);
  }
  return batch;
}

}  // namespace detail

/// Infer-mode evaluation over one split: accuracy plus the KxK confusion
/// matrix (row = true class). Never mutates model state.
inline EvalResult evaluate(Model<float>& model, const LoadedDataset& data, Split split,
                           std::size_t batch_size = 64) {
  const std::vector<std::size_t> order = data.indices(split);
  if (order.empty()) {
    throw DataError(std::string("evaluate: ") + (split == Split::kTest ? "test" : "train") +
                    " split is empty");
  }
  EvalResult result;
  result.num_classes = data.num_classes();
  result.confusion.assign(result.num_classes * result.num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    Tensor<float> batch = detail::assemble_batch<float>(data, order, begin, end);
    auto fwd = forward(model, std::move(batch), Mode::kInfer);
    const std::vector<int> preds = argmax_rows(fwd.logits);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const int truth = data.labels[order[begin + i]];
      result.confusion[static_cast<std::size_t>(truth) * result.num_classes +
                       static_cast<std::size_t>(preds[i])]++;
      correct += preds[i] == truth ? 1 : 0;
    }
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
  return result;
}

/// v <- momentum * v - lr * (g + weight_decay * p); p <- p + v, elementwise
/// over identically keyed maps.
template <typename T>
void sgd_momentum_step(std::map<std::string, Tensor<T>*>& params,
                       const std::map<std::string, Tensor<T>>& grads,
                       std::map<std::string, Tensor<T>>& velocity, double lr, double momentum,
                       double weight_decay) {
  auto keys_match = [&]() {
    if (params.size() != grads.size() || params.size() != velocity.size()) return false;
    auto pit = params.begin();
    auto git = grads.begin();
    auto vit = velocity.begin();
    for (; pit != params.end(); ++pit, ++git, ++vit) {
      if (pit->first != git->first || pit->first != vit->first) return false;
    }
    return true;
  };
  if (!keys_match()) {
    throw std::invalid_argument("sgd_momentum_step: parameter/gradient/velocity key sets differ");
  }
  const T mom = static_cast<T>(momentum);
  const T step = static_cast<T>(lr);
  const T wd = static_cast<T>(weight_decay);
  auto git = grads.begin();
  auto vit = velocity.begin();
  for (auto pit = params.begin(); pit != params.end(); ++pit, ++git, ++vit) {
    Tensor<T>& p = *pit->second;
    const Tensor<T>& g = git->second;
    Tensor<T>& v = vit->second;
    if (g.shape() != p.shape() || v.shape() != p.shape()) {
      throw std::invalid_argument("sgd_momentum_step: shape mismatch for '" + pit->first + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mom * v[i] - step * (g[i] + wd * p[i]);
      p[i] += v[i];
    }
  }
}

template <typename T>
std::map<std::string, Tensor<T>> zero_like(std::map<std::string, Tensor<T>*>& params) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor<T>(t->shape()));
  return out;
}

struct TrainResult {
  RunHistory history;
  double best_test_acc = 0.0;
  std::size_t best_epoch = 0;
};

/// Mini-batch SGD training loop. Per epoch: seed-fixed shuffle, a fresh
/// augmentation draw per image, forward/backward/step per batch, then
/// infer-mode test evaluation. When run_dir is non-empty, history.csv plus
/// best.ckpt / last.ckpt (by test accuracy / final state) are written there.
inline TrainResult train(Model<float>& model, const LoadedDataset& data, const TrainConfig& cfg,
                         const std::string& run_dir = "") {
  cfg.validate();
  std::vector<std::size_t> train_ix = data.indices(Split::kTrain);
  if (train_ix.empty()) throw DataError("train: no train records in the dataset");
  if (data.indices(Split::kTest).empty()) throw DataError("train: no test records in the dataset");

  namespace fs = std::filesystem;
  if (!run_dir.empty()) fs::create_directories(run_dir);

  auto params = model.parameters();
  auto velocity = zero_like(params);

  const std::size_t h = model.spec.in_height, w = model.spec.in_width;
  TrainResult result;
  result.best_test_acc = -1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.lr_at(epoch);

    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c4, epoch));
    shuffle_rng.shuffle(train_ix);

    double loss_sum = 0.0;
    std::size_t correct = 0, steps = 0;
    for (std::size_t begin = 0; begin < train_ix.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, train_ix.size());
      const std::size_t n = end - begin;
      Tensor<float> batch({n, 1, h, w});
      std::vector<int> labels(n);
      const std::size_t stride = h * w;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ix = train_ix[begin + i];
        labels[i] = data.labels[ix];
        const Tensor<float>& img = data.images[ix];
        if (cfg.augment_enabled) {
          const AffineSpec spec =
              sample_augmentation(cfg.augment, img.dim(2), img.dim(1),
                                  mix_seed(cfg.seed, epoch, ix));
          Tensor<float> warped = apply_affine(img, spec, static_cast<float>(cfg.augment.fill));
          if (cfg.augment.crop_h != h || cfg.augment.crop_w != w ||
              warped.dim(1) != h || warped.dim(2) != w) {
            Rng crop_rng(mix_seed(cfg.seed, epoch ^ 0x5a5a, ix));
            warped = crop_resize(warped, std::min(cfg.augment.crop_h, warped.dim(1)),
                                 std::min(cfg.augment.crop_w, warped.dim(2)), h, w, &crop_rng);
          }
          std::copy(warped.data(), warped.data() + stride, batch.data() + i * stride);
        } else {
          std::copy(img.data(), img.data() + stride, batch.data() + i * stride);
        }
      }

      auto fwd = forward(model, std::move(batch), Mode::kTrain,
                         mix_seed(cfg.seed, epoch, 0x80000000ULL + begin));
      if (!fwd.logits.all_finite()) {
        throw NumericError("train: non-finite activations at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(begin / cfg.batch_size) +
                           " (lr=" + std::to_string(lr) + ")");
      }
      auto sm = softmax_cross_entropy(fwd.logits, labels);
      if (!std::isfinite(sm.loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(begin / cfg.batch_size) +
                           " (lr=" + std::to_string(lr) + ")");
      }
      const std::vector<int> preds = argmax_rows(fwd.logits);
      for (std::size_t i = 0; i < n; ++i) correct += preds[i] == labels[i] ? 1 : 0;
      loss_sum += sm.loss * static_cast<double>(n);

      auto grads = backward(model, sm.grad_logits, fwd.caches);
      sgd_momentum_step(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      ++steps;
    }

    const EvalResult test = evaluate(model, data, Split::kTest, cfg.batch_size);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_ix.size());
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_ix.size());
    stats.test_acc = test.accuracy;
    stats.lr = lr;
    stats.optimizer_steps = steps;
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);

    if (test.accuracy > result.best_test_acc) {
      result.best_test_acc = test.accuracy;
      result.best_epoch = epoch;
      if (!run_dir.empty()) save_checkpoint(model, (fs::path(run_dir) / "best.ckpt").string());
    }
    if (!run_dir.empty()) {
      save_checkpoint(model, (fs::path(run_dir) / "last.ckpt").string());
      write_history_csv(result.history, (fs::path(run_dir) / "history.csv").string());
    }

    const bool hit_train_target = cfg.stop_train_acc > 0 && stats.train_acc >= cfg.stop_train_acc;
    const bool hit_test_target = cfg.stop_test_acc > 0 && stats.test_acc >= cfg.stop_test_acc;
    if (hit_train_target || hit_test_target) break;
  }
  return result;
}

}  // namespace radnet
