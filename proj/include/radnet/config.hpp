#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/model.hpp"
#include "radnet/svm.hpp"
#include "radnet/trainer.hpp"

namespace radnet {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

/// Flat key=value settings with section-prefixed keys (`train.lr0 = 0.01`).
/// '#' starts a comment.
class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::map<std::string, std::string>& values() const { return values_; }

  void merge_line(const std::string& line, const std::string& where) {
    const std::string stripped = detail::trim(line.substr(0, line.find('#')));
    if (stripped.empty()) return;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + where + ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: " + where + ": empty key");
    values_[key] = value;
  }

  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    KeyValueConfig kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      kv.merge_line(line, path + ":" + std::to_string(line_no));
    }
    return kv;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' has non-numeric value '" + it->second + "'");
    }
  }

  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' has non-integer value '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' must be on/off, got '" + v + "'");
  }

 private:
  std::map<std::string, std::string> values_;
};

/// The resolved configuration of one run: model, training, augmentation, SVM
/// and data-pipeline settings, merged from defaults, a config file and
/// command-line overrides, validated before any work starts.
struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 1;
  ModelSpec model = ModelSpec::defaults();
  TrainConfig train;
  SvmConfig svm;
  std::size_t min_count = 50;
  double train_frac = 0.9;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "seed", "threads",
        "model.input", "model.classes", "model.layers", "model.leaky_slope",
        "model.pool_dropout", "model.dense_dropout", "model.bn_momentum", "model.bn_epsilon",
        "train.batch_size", "train.epochs", "train.lr0", "train.momentum", "train.lr_decay",
        "train.decay_at", "train.weight_decay", "train.augment", "train.stop_train_acc",
        "train.stop_test_acc",
        "augment.rotation_max_deg", "augment.translate_max_frac", "augment.shear_max_deg",
        "augment.scale", "augment.stretch", "augment.flip_prob", "augment.crop", "augment.fill",
        "svm.c", "svm.grid", "svm.folds", "svm.max_epochs", "svm.tolerance", "svm.l2_normalize",
        "data.min_count", "data.train_frac",
    };
    return keys;
  }

  static RunConfig from_kv(const KeyValueConfig& kv) {
    for (const auto& [key, value] : kv.values()) {
      const auto& known = known_keys();
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
    RunConfig cfg;
    cfg.svm.grid = SvmConfig::default_grid();
    cfg.seed = static_cast<std::uint64_t>(kv.get_long("seed", 42));
    cfg.threads = static_cast<int>(kv.get_long("threads", 1));
    if (cfg.threads < 1) throw ConfigError("config: threads must be >= 1");

    if (kv.has("model.input")) {
      std::size_t c = 0, h = 0, w = 0;
      char x1 = 0, x2 = 0;
      std::istringstream iv(kv.get("model.input", ""));
      iv >> c >> x1 >> h >> x2 >> w;
      if (!iv || x1 != 'x' || x2 != 'x' || c == 0 || h == 0 || w == 0) {
        throw ConfigError("config: model.input must be CxHxW");
      }
      cfg.model.in_channels = c;
      cfg.model.in_height = h;
      cfg.model.in_width = w;
    }
    cfg.model.num_classes = static_cast<std::size_t>(
        kv.get_long("model.classes", static_cast<long>(cfg.model.num_classes)));
    if (kv.has("model.layers")) cfg.model.layers = ModelSpec::parse_layers(kv.get("model.layers", ""));
    cfg.model.leaky_slope = kv.get_double("model.leaky_slope", cfg.model.leaky_slope);
    cfg.model.pool_dropout = kv.get_double("model.pool_dropout", cfg.model.pool_dropout);
    cfg.model.dense_dropout = kv.get_double("model.dense_dropout", cfg.model.dense_dropout);
    cfg.model.bn_momentum = kv.get_double("model.bn_momentum", cfg.model.bn_momentum);
    cfg.model.bn_epsilon = kv.get_double("model.bn_epsilon", cfg.model.bn_epsilon);

    cfg.train.batch_size = static_cast<std::size_t>(
        kv.get_long("train.batch_size", static_cast<long>(cfg.train.batch_size)));
    cfg.train.epochs =
        static_cast<std::size_t>(kv.get_long("train.epochs", static_cast<long>(cfg.train.epochs)));
    cfg.train.lr0 = kv.get_double("train.lr0", cfg.train.lr0);
    cfg.train.momentum = kv.get_double("train.momentum", cfg.train.momentum);
    cfg.train.lr_decay = kv.get_double("train.lr_decay", cfg.train.lr_decay);
    if (kv.has("train.decay_at")) {
      cfg.train.decay_at.clear();
      std::stringstream ss(kv.get("train.decay_at", ""));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          cfg.train.decay_at.push_back(std::stod(detail::trim(tok)));
        } catch (const std::exception&) {
          throw ConfigError("config: train.decay_at must be a comma list of fractions");
        }
      }
    }
    cfg.train.weight_decay = kv.get_double("train.weight_decay", cfg.train.weight_decay);
    cfg.train.augment_enabled = kv.get_bool("train.augment", cfg.train.augment_enabled);
    cfg.train.stop_train_acc = kv.get_double("train.stop_train_acc", 0.0);
    cfg.train.stop_test_acc = kv.get_double("train.stop_test_acc", 0.0);
    cfg.train.seed = cfg.seed;

    AugmentConfig& aug = cfg.train.augment;
    aug.rotation_max_deg = kv.get_double("augment.rotation_max_deg", aug.rotation_max_deg);
    aug.translate_max_frac = kv.get_double("augment.translate_max_frac", aug.translate_max_frac);
    aug.shear_max_deg = kv.get_double("augment.shear_max_deg", aug.shear_max_deg);
    auto parse_range = [&](const std::string& key, double& lo, double& hi) {
      if (!kv.has(key)) return;
      const std::string v = kv.get(key, "");
      const auto colon = v.find(':');
      if (colon == std::string::npos) throw ConfigError("config: " + key + " must be lo:hi");
      try {
        lo = std::stod(v.substr(0, colon));
        hi = std::stod(v.substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("config: " + key + " must be lo:hi");
      }
    };
    parse_range("augment.scale", aug.scale_lo, aug.scale_hi);
    parse_range("augment.stretch", aug.stretch_lo, aug.stretch_hi);
    aug.flip_prob = kv.get_double("augment.flip_prob", aug.flip_prob);
    if (kv.has("augment.crop")) {
      std::size_t h = 0, w = 0;
      char x = 0;
      std::istringstream iv(kv.get("augment.crop", ""));
      iv >> h >> x >> w;
      if (!iv || x != 'x' || h == 0 || w == 0) throw ConfigError("config: augment.crop must be HxW");
      aug.crop_h = h;
      aug.crop_w = w;
    }
    aug.fill = kv.get_double("augment.fill", aug.fill);

    cfg.svm.C = kv.get_double("svm.c", cfg.svm.C);
    if (kv.has("svm.grid")) {
      cfg.svm.grid.clear();
      std::stringstream ss(kv.get("svm.grid", ""));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          cfg.svm.grid.push_back(std::stod(detail::trim(tok)));
        } catch (const std::exception&) {
          throw ConfigError("config: svm.grid must be a comma list of positive reals");
        }
      }
    }
    cfg.svm.folds =
        static_cast<std::size_t>(kv.get_long("svm.folds", static_cast<long>(cfg.svm.folds)));
    cfg.svm.controls.max_epochs = static_cast<std::size_t>(
        kv.get_long("svm.max_epochs", static_cast<long>(cfg.svm.controls.max_epochs)));
    cfg.svm.controls.tolerance = kv.get_double("svm.tolerance", cfg.svm.controls.tolerance);
    cfg.svm.l2_normalize = kv.get_bool("svm.l2_normalize", cfg.svm.l2_normalize);

    cfg.min_count = static_cast<std::size_t>(
        kv.get_long("data.min_count", static_cast<long>(cfg.min_count)));
    cfg.train_frac = kv.get_double("data.train_frac", cfg.train_frac);
    if (cfg.train_frac <= 0.0 || cfg.train_frac >= 1.0) {
      throw ConfigError("config: data.train_frac outside (0,1)");
    }

    cfg.validate();
    return cfg;
  }

  void validate() const {
    model.validate();
    train.validate();
    svm.validate();
    if (min_count < 1) throw ConfigError("config: data.min_count must be >= 1");
  }

  /// Serializes the resolved configuration; parsing the result reproduces it.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << seed << "\n";
    out << "threads = " << threads << "\n";
    out << "model.input = " << model.in_channels << "x" << model.in_height << "x" << model.in_width
        << "\n";
    out << "model.classes = " << model.num_classes << "\n";
    out << "model.layers = " << model.layers_to_string() << "\n";
    out << "model.leaky_slope = " << model.leaky_slope << "\n";
    out << "model.pool_dropout = " << model.pool_dropout << "\n";
    out << "model.dense_dropout = " << model.dense_dropout << "\n";
    out << "model.bn_momentum = " << model.bn_momentum << "\n";
    out << "model.bn_epsilon = " << model.bn_epsilon << "\n";
    out << "train.batch_size = " << train.batch_size << "\n";
    out << "train.epochs = " << train.epochs << "\n";
    out << "train.lr0 = " << train.lr0 << "\n";
    out << "train.momentum = " << train.momentum << "\n";
    out << "train.lr_decay = " << train.lr_decay << "\n";
    out << "train.decay_at = ";
    for (std::size_t i = 0; i < train.decay_at.size(); ++i) {
      out << (i ? "," : "") << train.decay_at[i];
    }
    out << "\n";
    out << "train.weight_decay = " << train.weight_decay << "\n";
    out << "train.augment = " << (train.augment_enabled ? "on" : "off") << "\n";
    out << "train.stop_train_acc = " << train.stop_train_acc << "\n";
    out << "train.stop_test_acc = " << train.stop_test_acc << "\n";
    const AugmentConfig& aug = train.augment;
    out << "augment.rotation_max_deg = " << aug.rotation_max_deg << "\n";
    out << "augment.translate_max_frac = " << aug.translate_max_frac << "\n";
    out << "augment.shear_max_deg = " << aug.shear_max_deg << "\n";
    out << "augment.scale = " << aug.scale_lo << ":" << aug.scale_hi << "\n";
    out << "augment.stretch = " << aug.stretch_lo << ":" << aug.stretch_hi << "\n";
    out << "augment.flip_prob = " << aug.flip_prob << "\n";
    out << "augment.crop = " << aug.crop_h << "x" << aug.crop_w << "\n";
    out << "augment.fill = " << aug.fill << "\n";
    out << "svm.c = " << svm.C << "\n";
    out << "svm.grid = ";
    for (std::size_t i = 0; i < svm.grid.size(); ++i) out << (i ? "," : "") << svm.grid[i];
    out << "\n";
    out << "svm.folds = " << svm.folds << "\n";
    out << "svm.max_epochs = " << svm.controls.max_epochs << "\n";
    out << "svm.tolerance = " << svm.controls.tolerance << "\n";
    out << "svm.l2_normalize = " << (svm.l2_normalize ? "on" : "off") << "\n";
    out << "data.min_count = " << min_count << "\n";
    out << "data.train_frac = " << train_frac << "\n";
    return out.str();
  }
};

}  // namespace radnet
