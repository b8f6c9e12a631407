#include <gtest/gtest.h>

#include <filesystem>

#include "radnet/dataset.hpp"
#include "radnet/synth.hpp"
#include "test_util.hpp"

using namespace radnet;
using radnet_test::TempDir;

TEST(Synth, RenderingIsSeedDeterministic) {
  const Tensor<float> a = render_synthetic_image(5, 1234);
  const Tensor<float> b = render_synthetic_image(5, 1234);
  const Tensor<float> c = render_synthetic_image(5, 1235);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.shape(), Shape({1, 128, 128}));
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_GE(a[i], 0.0f);
    ASSERT_LE(a[i], 1.0f);
  }
}

TEST(Synth, LabelCodesAreDistinctPerClass) {
  std::set<std::string> codes;
  for (std::size_t c = 0; c < kMaxSyntheticClasses; ++c) codes.insert(synthetic_label_code(c));
  EXPECT_EQ(codes.size(), kMaxSyntheticClasses);
}

TEST(Synth, ClassIdBeyondMaximumIsRejected) {
  EXPECT_THROW(render_synthetic_image(24, 1), std::invalid_argument);
}

TEST(Synth, CorpusGenerationWritesImagesAndManifest) {
  TempDir dir("synth_small");
  const std::string manifest_path = generate_synthetic_corpus(dir.str(), 4, 8, 99);
  const auto records = read_raw_manifest(manifest_path);
  EXPECT_EQ(records.size(), 32u);
  std::set<std::string> codes;
  for (const auto& r : records) {
    codes.insert(r.label_code);
    EXPECT_TRUE(std::filesystem::exists(dir.path / r.path)) << r.path;
  }
  EXPECT_EQ(codes.size(), 4u);
}

TEST(Synth, CorpusIsByteIdenticalForTheSameSeed) {
  TempDir a("synth_rep_a"), b("synth_rep_b");
  generate_synthetic_corpus(a.str(), 3, 4, 7);
  generate_synthetic_corpus(b.str(), 3, 4, 7);
  for (const auto& r : read_raw_manifest(a.file("manifest.csv"))) {
    EXPECT_EQ(radnet_test::slurp((a.path / r.path).string()),
              radnet_test::slurp((b.path / r.path).string()))
        << r.path;
  }
  EXPECT_EQ(radnet_test::slurp(a.file("manifest.csv")), radnet_test::slurp(b.file("manifest.csv")));
}

TEST(Synth, FullCorpusSurvivesTheMinCountFilter) {
  TempDir dir("synth_full");
  const std::string manifest_path = generate_synthetic_corpus(dir.str(), 24, 60, 11);
  const auto raw = read_raw_manifest(manifest_path);
  EXPECT_EQ(raw.size(), 1440u);

  std::vector<ManifestRecord> records;
  auto classes = flatten_labels(raw, &records);
  EXPECT_EQ(classes.size(), 24u);
  auto kept = filter_min_count(&records, classes, 50);
  EXPECT_EQ(kept.size(), 24u);
  EXPECT_EQ(records.size(), 1440u);
}

TEST(Synth, RejectsTooManyClasses) {
  TempDir dir("synth_reject");
  EXPECT_THROW(generate_synthetic_corpus(dir.str(), 25, 4, 1), ConfigError);
  EXPECT_THROW(generate_synthetic_corpus(dir.str(), 0, 4, 1), ConfigError);
}
