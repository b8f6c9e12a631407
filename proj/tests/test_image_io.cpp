#include <gtest/gtest.h>

#include "radnet/image_io.hpp"
#include "test_util.hpp"

using namespace radnet;
using radnet_test::TempDir;

namespace {

Tensor<float> quantized_random(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> img({1, h, w});
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = static_cast<float>(rng.below(256)) / 255.0f;  // representable exactly after IO
  }
  return img;
}

}  // namespace

TEST(ImageIo, PgmRoundTripIsExactAt8Bit) {
  TempDir dir("pgm");
  Tensor<float> img = quantized_random(17, 23, 1);
  write_pgm(dir.file("a.pgm"), img);
  Tensor<float> back = read_pgm(dir.file("a.pgm"));
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_EQ(back, img);
}

TEST(ImageIo, PngRoundTripIsExactAt8Bit) {
  TempDir dir("png");
  Tensor<float> img = quantized_random(20, 14, 2);
  write_png(dir.file("a.png"), img);
  Tensor<float> back = read_png(dir.file("a.png"));
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_EQ(back, img);
}

TEST(ImageIo, SniffsFormatFromContent) {
  TempDir dir("sniff");
  Tensor<float> img = quantized_random(8, 8, 3);
  write_pgm(dir.file("as_png_name.png"), img);  // wrong extension on purpose
  EXPECT_EQ(read_image(dir.file("as_png_name.png")), img);
}

TEST(ImageIo, WhiteImageLoadsAsAllOnes) {
  TempDir dir("white");
  write_pgm(dir.file("w.pgm"), Tensor<float>::full({1, 128, 128}, 1.0f));
  Tensor<float> img = load_image(dir.file("w.pgm"));
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_EQ(img[i], 1.0f);
}

TEST(ImageIo, ConstantImageDownscalesToConstant) {
  TempDir dir("const");
  write_pgm(dir.file("c.pgm"), Tensor<float>::full({1, 256, 256}, 100.0f / 255.0f));
  Tensor<float> img = load_image(dir.file("c.pgm"));
  EXPECT_EQ(img.shape(), Shape({1, 128, 128}));
  for (std::size_t i = 0; i < img.size(); ++i) ASSERT_NEAR(img[i], 100.0f / 255.0f, 1e-6f);
}

TEST(ImageIo, AspectPreservingResizeThenCenterCrop) {
  // 100x200 (HxW): short side scales to 128 giving 128x256, then center crop.
  TempDir dir("aspect");
  const std::size_t h = 100, w = 200;
  Tensor<float> img({1, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      img[i * w + j] =
          static_cast<float>(std::lround(255.0 * (0.3 * i / (h - 1.0) + 0.7 * j / (w - 1.0)))) /
          255.0f;
    }
  }
  write_pgm(dir.file("g.pgm"), img);
  Tensor<float> loaded = load_image(dir.file("g.pgm"));
  ASSERT_EQ(loaded.shape(), Shape({1, 128, 128}));

  // independent oracle: direct bilinear sample of the source at the composed
  // mapping (resize to 128x256, crop columns [64, 192))
  const double ry = static_cast<double>(h) / 128.0;
  const double rx = static_cast<double>(w) / 256.0;
  double max_err = 0.0;
  for (std::size_t i = 0; i < 128; ++i) {
    for (std::size_t j = 0; j < 128; ++j) {
      const double sy = (i + 0.5) * ry - 0.5;
      const double sx = (j + 64 + 0.5) * rx - 0.5;
      const long y0 = static_cast<long>(std::floor(sy));
      const long x0 = static_cast<long>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      auto px = [&](long yy, long xx) {
        yy = std::clamp(yy, 0L, static_cast<long>(h) - 1);
        xx = std::clamp(xx, 0L, static_cast<long>(w) - 1);
        return static_cast<double>(img[static_cast<std::size_t>(yy) * w +
                                       static_cast<std::size_t>(xx)]);
      };
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      max_err = std::max(max_err, std::abs(v - loaded[i * 128 + j]));
    }
  }
  EXPECT_LT(max_err, 1e-3);
}

TEST(ImageIo, MissingFileErrorCarriesThePath) {
  try {
    load_image("/nonexistent/file.pgm");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/file.pgm"), std::string::npos);
  }
}

TEST(ImageIo, CorruptFilesAreDiagnosed) {
  TempDir dir("corrupt");
  radnet_test::spit(dir.file("bad.png"), std::string("\x89P\x0garbage", 9));
  EXPECT_THROW(read_image(dir.file("bad.png")), DataError);
  radnet_test::spit(dir.file("bad.pgm"), "P5\n10 10\n255\nshort");
  EXPECT_THROW(read_pgm(dir.file("bad.pgm")), DataError);
  radnet_test::spit(dir.file("neither.txt"), "hello");
  EXPECT_THROW(read_image(dir.file("neither.txt")), DataError);
}

TEST(ImageIo, SixteenBitPgmScalesToUnitRange) {
  TempDir dir("pgm16");
  // hand-written 2x1 16-bit PGM: values 0 and 65535
  std::string bytes = "P5\n2 1\n65535\n";
  bytes += std::string("\x00\x00\xff\xff", 4);
  radnet_test::spit(dir.file("w.pgm"), bytes);
  Tensor<float> img = read_pgm(dir.file("w.pgm"));
  ASSERT_EQ(img.shape(), Shape({1, 1, 2}));
  EXPECT_EQ(img[0], 0.0f);
  EXPECT_EQ(img[1], 1.0f);
}
