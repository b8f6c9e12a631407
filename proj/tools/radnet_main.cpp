// Command line for the radnet toolkit: data preparation, synthetic corpus
// generation, CNN training/evaluation, SVM training/evaluation and the
// gradient-check harness.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
// failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "radnet/radnet.hpp"

namespace fs = std::filesystem;
using namespace radnet;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  long seed = -1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "Config file (key = value lines)");
  cmd->add_option("--set", args->overrides, "Override a config key, e.g. --set train.lr0=0.02")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", args->seed, "Random seed (overrides config)");
  cmd->add_option("--threads", args->threads,
                  "BLAS threads; 1 (default) is the reproducible mode");
}

RunConfig resolve_config(const CommonArgs& args) {
  KeyValueConfig kv;
  if (!args.config_path.empty()) kv = KeyValueConfig::from_file(args.config_path);
  for (const auto& o : args.overrides) kv.merge_line(o, "--set");
  if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
  if (args.threads > 0) kv.set("threads", std::to_string(args.threads));
  RunConfig cfg = RunConfig::from_kv(kv);
  set_blas_threads(cfg.threads);
  return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "config.txt", std::ios::trunc);
  if (!out) throw DataError("config: cannot write echo to '" + out_dir + "'");
  out << cfg.to_text();
}

std::string base_dir_of(const std::string& manifest_path) {
  return fs::path(manifest_path).parent_path().string();
}

int cmd_prepare(const CommonArgs& common, const std::string& manifest_in,
                const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  const std::vector<RawRecord> raw = read_raw_manifest(manifest_in);
  if (raw.empty()) throw DataError("prepare: '" + manifest_in + "' has no records");

  // rewrite image paths relative to the output directory
  const fs::path in_dir = fs::absolute(fs::path(manifest_in).parent_path()).lexically_normal();
  const fs::path out_abs = fs::absolute(out_dir).lexically_normal();
  std::vector<RawRecord> rebased = raw;
  for (auto& r : rebased) {
    fs::path p(r.path);
    if (p.is_relative()) {
      p = (in_dir / p).lexically_normal();
      r.path = p.lexically_proximate(out_abs).generic_string();
    }
  }

  std::vector<ManifestRecord> records;
  std::vector<std::string> classes = flatten_labels(rebased, &records);
  classes = filter_min_count(&records, classes, cfg.min_count);
  DatasetManifest manifest =
      stratified_split(std::move(records), std::move(classes), cfg.train_frac, cfg.seed);

  echo_config(cfg, out_dir);
  write_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());

  std::vector<std::size_t> train_counts(manifest.classes.size(), 0);
  std::vector<std::size_t> test_counts(manifest.classes.size(), 0);
  for (const auto& r : manifest.records) {
    (r.split == Split::kTrain ? train_counts : test_counts)[static_cast<std::size_t>(
        r.class_id)]++;
  }
  std::ofstream counts(fs::path(out_dir) / "class_counts.csv", std::ios::trunc);
  counts << "class_id,label_code,train,test,total\n";
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    counts << c << "," << manifest.classes[c] << "," << train_counts[c] << "," << test_counts[c]
           << "," << (train_counts[c] + test_counts[c]) << "\n";
  }

  std::printf("prepared %zu records, %zu classes (train %zu / test %zu)\n",
              manifest.records.size(), manifest.classes.size(), manifest.count(Split::kTrain),
              manifest.count(Split::kTest));
  return 0;
}

int cmd_synth_data(const CommonArgs& common, long classes, long per_class,
                   const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  if (classes < 1 || static_cast<std::size_t>(classes) > kMaxSyntheticClasses) {
    throw ConfigError("synth-data: --classes must lie in [1," +
                      std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (per_class < 1) throw ConfigError("synth-data: --per-class must be >= 1");
  const std::string manifest = generate_synthetic_corpus(
      out_dir, static_cast<std::size_t>(classes), static_cast<std::size_t>(per_class), cfg.seed);
  std::printf("wrote %ld x %ld images and %s\n", classes, per_class, manifest.c_str());
  return 0;
}

int cmd_train_cnn(const CommonArgs& common, const std::string& manifest_path,
                  const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  const DatasetManifest manifest = read_manifest(manifest_path);
  echo_config(cfg, out_dir);

  const LoadedDataset data = load_dataset(manifest, base_dir_of(manifest_path),
                                          cfg.model.in_height, cfg.model.in_width);
  if (data.num_classes() != cfg.model.num_classes) {
    throw ConfigError("train-cnn: manifest has " + std::to_string(data.num_classes()) +
                      " classes but model.classes = " + std::to_string(cfg.model.num_classes));
  }
  Model<float> model = build_model<float>(cfg.model, cfg.seed);
  const TrainResult result = train(model, data, cfg.train, out_dir);
  std::printf("trained %zu epochs; best test accuracy %.4f (epoch %zu)\n", result.history.size(),
              result.best_test_acc, result.best_epoch);
  return 0;
}

int cmd_eval_cnn(const CommonArgs& common, const std::string& checkpoint_path,
                 const std::string& manifest_path, const std::string& split_name,
                 const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  (void)cfg;
  Model<float> model = load_checkpoint<float>(checkpoint_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const LoadedDataset data = load_dataset(manifest, base_dir_of(manifest_path),
                                          model.spec.in_height, model.spec.in_width);
  const Split split = split_name == "train" ? Split::kTrain : Split::kTest;
  const EvalResult eval = evaluate(model, data, split);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_confusion_csv(eval, data.classes, (fs::path(out_dir) / "confusion.csv").string());
  }
  std::printf("accuracy %.6f over %zu %s records\n", eval.accuracy,
              data.indices(split).size(), split_name.c_str());
  return 0;
}

int cmd_train_svm(const CommonArgs& common, const std::string& features_path,
                  const std::string& out_dir) {
  const RunConfig cfg = resolve_config(common);
  FeatureSet features = load_feature_set(features_path);
  if (cfg.svm.l2_normalize) {
    const std::size_t d = features.dim();
    for (std::size_t i = 0; i < features.rows(); ++i) {
      float* row = features.vectors.data() + i * d;
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += static_cast<double>(row[j]) * row[j];
      norm = std::sqrt(norm);
      if (norm > 0) {
        for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(row[j] / norm);
      }
    }
  }
  echo_config(cfg, out_dir);

  const GridSearchResult grid =
      grid_search_cv(features, cfg.svm.grid, cfg.svm.folds, cfg.seed, cfg.svm.controls);
  std::ofstream table(fs::path(out_dir) / "cv_table.csv", std::ios::trunc);
  table << "C,fold,accuracy\n";
  table.precision(10);
  for (const auto& cell : grid.table) {
    table << cell.c << "," << cell.fold << "," << cell.accuracy << "\n";
  }

  MulticlassSvm svm = train_ovr(features, grid.best_c, cfg.svm.controls);
  save_svm(svm, (fs::path(out_dir) / "svm.bin").string());
  const double train_acc = svm_accuracy(svm, features);
  std::printf("best C %.6g, training accuracy %.4f, model written to %s\n", grid.best_c,
              train_acc, (fs::path(out_dir) / "svm.bin").string().c_str());
  return 0;
}

int cmd_eval_svm(const CommonArgs& common, const std::string& model_path,
                 const std::string& features_path) {
  const RunConfig cfg = resolve_config(common);
  const MulticlassSvm svm = load_svm(model_path);
  FeatureSet features = load_feature_set(features_path);
  if (features.dim() != svm.dim()) {
    throw DataError("eval-svm: feature dimension " + std::to_string(features.dim()) +
                    " does not match model dimension " + std::to_string(svm.dim()));
  }
  if (cfg.svm.l2_normalize) {
    const std::size_t d = features.dim();
    for (std::size_t i = 0; i < features.rows(); ++i) {
      float* row = features.vectors.data() + i * d;
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += static_cast<double>(row[j]) * row[j];
      norm = std::sqrt(norm);
      if (norm > 0) {
        for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(row[j] / norm);
      }
    }
  }
  std::printf("accuracy %.6f over %zu records\n", svm_accuracy(svm, features), features.rows());
  return 0;
}

int cmd_gradcheck(const CommonArgs& common) {
  const RunConfig cfg = resolve_config(common);
  (void)cfg;
  const std::vector<GradCheckEntry> results = run_gradcheck_suite();
  bool all_ok = true;
  for (const auto& e : results) {
    std::printf("%-24s max_rel_err %.3e  threshold %.0e  %s\n", e.op.c_str(), e.max_rel_err,
                e.threshold, e.passed() ? "ok" : "FAIL");
    all_ok = all_ok && e.passed();
  }
  if (!all_ok) throw NumericError("gradcheck: at least one op exceeded its threshold");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radnet: small CNN + SVM image classification toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string manifest_in, out_dir, checkpoint, features_path, model_path;
  std::string split_name = "test";
  long classes = 24, per_class = 60;

  auto* prepare = app.add_subcommand("prepare", "Flatten labels, filter rare classes, split");
  prepare->add_option("--manifest", manifest_in, "Input manifest CSV (path,label_code)")
      ->required();
  prepare->add_option("--out-dir", out_dir, "Output directory")->required();
  add_common(prepare, &common);

  auto* synth = app.add_subcommand("synth-data", "Render a synthetic labeled corpus");
  synth->add_option("--classes", classes, "Number of classes (max 24)");
  synth->add_option("--per-class", per_class, "Images per class");
  synth->add_option("--out-dir", out_dir, "Output directory")->required();
  add_common(synth, &common);

  auto* train_cnn = app.add_subcommand("train-cnn", "Train the CNN on a prepared manifest");
  train_cnn->add_option("--manifest", manifest_in, "Prepared manifest CSV")->required();
  train_cnn->add_option("--out-dir", out_dir, "Run directory")->required();
  add_common(train_cnn, &common);

  auto* eval_cnn = app.add_subcommand("eval-cnn", "Evaluate a checkpoint on a manifest split");
  eval_cnn->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval_cnn->add_option("--manifest", manifest_in, "Prepared manifest CSV")->required();
  eval_cnn->add_option("--split", split_name, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  eval_cnn->add_option("--out-dir", out_dir, "Directory for confusion.csv (optional)");
  add_common(eval_cnn, &common);

  auto* train_svm = app.add_subcommand("train-svm", "Grid-search and train the linear SVM");
  train_svm->add_option("--features", features_path, "Feature file (FVS1 binary or CSV)")
      ->required();
  train_svm->add_option("--out-dir", out_dir, "Run directory")->required();
  add_common(train_svm, &common);

  auto* eval_svm = app.add_subcommand("eval-svm", "Evaluate an SVM model on a feature file");
  eval_svm->add_option("--model", model_path, "SVM model file")->required();
  eval_svm->add_option("--features", features_path, "Feature file")->required();
  add_common(eval_svm, &common);

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  add_common(gradcheck, &common);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(prepare)) return cmd_prepare(common, manifest_in, out_dir);
    if (app.got_subcommand(synth)) return cmd_synth_data(common, classes, per_class, out_dir);
    if (app.got_subcommand(train_cnn)) return cmd_train_cnn(common, manifest_in, out_dir);
    if (app.got_subcommand(eval_cnn)) {
      return cmd_eval_cnn(common, checkpoint, manifest_in, split_name, out_dir);
    }
    if (app.got_subcommand(train_svm)) return cmd_train_svm(common, features_path, out_dir);
    if (app.got_subcommand(eval_svm)) return cmd_eval_svm(common, model_path, features_path);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(common);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
