// End-to-end tests of the command-line binary (path injected by the build).

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "radnet/rng.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using radnet_test::TempDir;
using radnet_test::slurp;
using radnet_test::spit;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const TempDir& dir, const std::string& tag) {
  const std::string log = dir.file("cli_" + tag + ".log");
  const std::string cmd = std::string(RADNET_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST(Cli, GradcheckSucceeds) {
  TempDir dir("cli_gradcheck");
  CliResult r = run_cli("gradcheck", dir, "gradcheck");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("conv2d"), std::string::npos);
  EXPECT_NE(r.output.find("model_reduced"), std::string::npos);
}

TEST(Cli, UnknownFlagsAndMissingSubcommandFail) {
  TempDir dir("cli_usage");
  EXPECT_EQ(run_cli("", dir, "nosub").exit_code, 1);
  EXPECT_EQ(run_cli("train-cnn --manifest x.csv", dir, "missing").exit_code, 1);  // no out-dir
  EXPECT_EQ(run_cli("definitely-not-a-command", dir, "unknown").exit_code, 1);
}

TEST(Cli, SynthPrepareTrainEvalFlow) {
  TempDir dir("cli_flow");
  const std::string corpus = dir.file("corpus");
  const std::string prep = dir.file("prep");
  const std::string run = dir.file("run");

  CliResult synth =
      run_cli("synth-data --classes 3 --per-class 8 --seed 5 --out-dir " + corpus, dir, "synth");
  ASSERT_EQ(synth.exit_code, 0) << synth.output;
  EXPECT_TRUE(fs::exists(fs::path(corpus) / "manifest.csv"));

  CliResult prepare = run_cli("prepare --manifest " + corpus +
                                  "/manifest.csv --out-dir " + prep +
                                  " --seed 5 --set data.min_count=5 --set data.train_frac=0.75",
                              dir, "prepare");
  ASSERT_EQ(prepare.exit_code, 0) << prepare.output;
  EXPECT_TRUE(fs::exists(fs::path(prep) / "manifest.csv"));
  EXPECT_TRUE(fs::exists(fs::path(prep) / "class_counts.csv"));
  EXPECT_TRUE(fs::exists(fs::path(prep) / "config.txt"));

  // rerun into the same directory: byte-identical output (idempotence)
  const std::string manifest_before = slurp((fs::path(prep) / "manifest.csv").string());
  CliResult rerun = run_cli("prepare --manifest " + prep + "/manifest.csv --out-dir " + prep +
                                " --seed 5 --set data.min_count=5 --set data.train_frac=0.75",
                            dir, "prepare_rerun");
  ASSERT_EQ(rerun.exit_code, 0) << rerun.output;
  EXPECT_EQ(slurp((fs::path(prep) / "manifest.csv").string()), manifest_before);

  const std::string small_model =
      " --set model.layers=conv4,pool,conv8,pool,dense16 --set model.classes=3";
  CliResult trained = run_cli("train-cnn --manifest " + prep + "/manifest.csv --out-dir " + run +
                                  " --seed 5" + small_model +
                                  " --set train.epochs=2 --set train.batch_size=8" +
                                  " --set train.augment=off",
                              dir, "train");
  ASSERT_EQ(trained.exit_code, 0) << trained.output;
  EXPECT_TRUE(fs::exists(fs::path(run) / "config.txt"));
  EXPECT_TRUE(fs::exists(fs::path(run) / "history.csv"));
  EXPECT_TRUE(fs::exists(fs::path(run) / "best.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(run) / "last.ckpt"));

  // the best checkpoint reproduces the best test accuracy in the history
  double best_in_history = -1.0;
  {
    std::ifstream h((fs::path(run) / "history.csv").string());
    std::string line;
    std::getline(h, line);  // header
    while (std::getline(h, line)) {
      std::stringstream ss(line);
      std::string field;
      for (int i = 0; i < 4; ++i) std::getline(ss, field, ',');
      best_in_history = std::max(best_in_history, std::stod(field));
    }
  }
  CliResult eval = run_cli("eval-cnn --checkpoint " + run + "/best.ckpt --manifest " + prep +
                               "/manifest.csv --split test --out-dir " + run,
                           dir, "eval");
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_TRUE(fs::exists(fs::path(run) / "confusion.csv"));
  const auto pos = eval.output.find("accuracy ");
  ASSERT_NE(pos, std::string::npos);
  const double eval_acc = std::stod(eval.output.substr(pos + 9));
  EXPECT_NEAR(eval_acc, best_in_history, 1e-6);

  // corrupt checkpoint: data error
  const std::string bytes = slurp((fs::path(run) / "best.ckpt").string());
  spit(dir.file("broken.ckpt"), bytes.substr(0, bytes.size() / 3));
  CliResult broken = run_cli("eval-cnn --checkpoint " + dir.file("broken.ckpt") + " --manifest " +
                                 prep + "/manifest.csv",
                             dir, "broken");
  EXPECT_EQ(broken.exit_code, 2);
  EXPECT_NE(broken.output.find("truncated"), std::string::npos);
}

TEST(Cli, PrepareFailsCleanlyWhenNothingSurvives) {
  TempDir dir("cli_prepare_fail");
  const std::string corpus = dir.file("corpus");
  ASSERT_EQ(run_cli("synth-data --classes 2 --per-class 4 --seed 1 --out-dir " + corpus, dir,
                    "synth")
                .exit_code,
            0);
  CliResult r = run_cli("prepare --manifest " + corpus + "/manifest.csv --out-dir " +
                            dir.file("prep") + " --set data.min_count=999",
                        dir, "prepare");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("no classes survive"), std::string::npos);
  EXPECT_FALSE(fs::exists(fs::path(dir.file("prep")) / "manifest.csv"));
}

TEST(Cli, SynthIsSeedStableAndBoundsChecked) {
  TempDir dir("cli_synth");
  const std::string a = dir.file("a"), b = dir.file("b");
  ASSERT_EQ(run_cli("synth-data --classes 2 --per-class 3 --seed 9 --out-dir " + a, dir, "a")
                .exit_code,
            0);
  ASSERT_EQ(run_cli("synth-data --classes 2 --per-class 3 --seed 9 --out-dir " + b, dir, "b")
                .exit_code,
            0);
  EXPECT_EQ(slurp((fs::path(a) / "images/c00_0000.pgm").string()),
            slurp((fs::path(b) / "images/c00_0000.pgm").string()));
  EXPECT_EQ(slurp((fs::path(a) / "images/c01_0002.pgm").string()),
            slurp((fs::path(b) / "images/c01_0002.pgm").string()));

  CliResult reject = run_cli("synth-data --classes 25 --per-class 3 --out-dir " + dir.file("c"),
                             dir, "reject");
  EXPECT_EQ(reject.exit_code, 1);
}

TEST(Cli, SvmTrainEvalFlow) {
  TempDir dir("cli_svm");
  // small separable 3-class CSV feature file, 10 rows per class
  std::ostringstream csv;
  csv << "label,f0,f1,f2,f3\n";
  const double centers[3][2] = {{4.0, 0.0}, {-4.0, 3.0}, {0.0, -4.0}};
  radnet::Rng rng(21);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10; ++i) {
      csv << c << "," << centers[c][0] + rng.uniform(-0.4, 0.4) << ","
          << centers[c][1] + rng.uniform(-0.4, 0.4) << ",0,0\n";
    }
  }
  spit(dir.file("feats.csv"), csv.str());

  const std::string run = dir.file("run");
  CliResult trained = run_cli("train-svm --features " + dir.file("feats.csv") + " --out-dir " +
                                  run + " --set svm.grid=0.5,2 --seed 3",
                              dir, "train");
  ASSERT_EQ(trained.exit_code, 0) << trained.output;
  EXPECT_TRUE(fs::exists(fs::path(run) / "svm.bin"));
  EXPECT_TRUE(fs::exists(fs::path(run) / "cv_table.csv"));
  EXPECT_EQ(count_lines(slurp((fs::path(run) / "cv_table.csv").string())), 1 + 2 * 5);

  CliResult eval = run_cli("eval-svm --model " + run + "/svm.bin --features " +
                               dir.file("feats.csv"),
                           dir, "eval");
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_NE(eval.output.find("accuracy 1.000000"), std::string::npos);

  // a one-element grid produces exactly one row per fold
  const std::string run1 = dir.file("run1");
  ASSERT_EQ(run_cli("train-svm --features " + dir.file("feats.csv") + " --out-dir " + run1 +
                        " --set svm.grid=1",
                    dir, "grid1")
                .exit_code,
            0);
  EXPECT_EQ(count_lines(slurp((fs::path(run1) / "cv_table.csv").string())), 1 + 5);

  // dimension mismatch on evaluation: data error with a dimension diagnostic
  spit(dir.file("wrong.csv"), "label,f0,f1\n0,1,2\n1,3,4\n");
  CliResult mismatch = run_cli("eval-svm --model " + run + "/svm.bin --features " +
                                   dir.file("wrong.csv"),
                               dir, "mismatch");
  EXPECT_EQ(mismatch.exit_code, 2);
  EXPECT_NE(mismatch.output.find("dimension"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithOne) {
  TempDir dir("cli_config");
  CliResult r = run_cli("gradcheck --set no.such.key=1", dir, "badkey");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("unknown key"), std::string::npos);

  spit(dir.file("bad.cfg"), "train.lr0 = -1\n");
  CliResult bad = run_cli("gradcheck --config " + dir.file("bad.cfg"), dir, "badval");
  EXPECT_EQ(bad.exit_code, 1);
}
