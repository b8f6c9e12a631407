#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "radnet/dataset.hpp"
#include "radnet/error.hpp"
#include "radnet/image_io.hpp"
#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

constexpr std::size_t kMaxSyntheticClasses = 24;

namespace detail {

// Signed distances (px, negative inside) in canonical shape coordinates.
inline double sd_bar(double u, double v, double len, double thick) {
  return std::max(std::abs(u) - len, std::abs(v) - thick);
}
inline double sd_ellipse(double u, double v, double a, double b) {
  const double r = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
  return (r - 1.0) * std::min(a, b);
}
inline double sd_ring(double u, double v, double radius, double thick) {
  return std::abs(std::sqrt(u * u + v * v) - radius) - thick;
}
inline double sd_cross(double u, double v, double len, double thick) {
  return std::min(sd_bar(u, v, len, thick), sd_bar(v, u, len, thick));
}
inline double sd_tee(double u, double v, double len, double thick) {
  const double top = sd_bar(u, v + len * 0.6, len, thick);
  const double stem = sd_bar(v - thick, u, len * 0.8, thick);
  return std::min(top, stem);
}
inline double sd_dots(double u, double v, double sep, double radius) {
  const double a = std::hypot(u - sep, v) - radius;
  const double b = std::hypot(u + sep, v) - radius;
  return std::min(a, b);
}

}  // namespace detail

/// Renders one 128x128 grayscale sample of the given class. Classes combine a
/// shape family (class % 8) with a position/size variant (class / 8); each
/// image additionally gets its own pose jitter, intensity jitter and noise so
/// the corpus is not solvable by pixel templates alone.
inline Tensor<float> render_synthetic_image(std::size_t class_id, std::uint64_t image_seed) {
  if (class_id >= kMaxSyntheticClasses) {
    throw std::invalid_argument("synthetic corpus: class id " + std::to_string(class_id) +
                                " exceeds the maximum of " +
                                std::to_string(kMaxSyntheticClasses) + " classes");
  }
  constexpr std::size_t kSize = 128;
  const std::size_t kind = class_id % 8;
  const std::size_t variant = class_id / 8;

  // variant table: center offset and size multiplier
  static constexpr double kOffsets[3][2] = {{0.0, 0.0}, {-23.0, -19.0}, {21.0, 17.0}};
  static constexpr double kSizeMul[3] = {1.0, 0.78, 1.25};
  static constexpr double kBaseAngle[8] = {0.0, 90.0, 45.0, 0.0, 0.0, 20.0, 0.0, 30.0};

  Rng rng(image_seed);
  const double jx = rng.uniform(-6.0, 6.0);
  const double jy = rng.uniform(-6.0, 6.0);
  const double jangle = rng.uniform(-8.0, 8.0);
  const double jsize = rng.uniform(0.9, 1.1);
  const double fg = rng.uniform(0.7, 1.0);
  const double bg = rng.uniform(0.02, 0.10);
  const double noise = 0.06;

  const double cx = 63.5 + kOffsets[variant][0] + jx;
  const double cy = 63.5 + kOffsets[variant][1] + jy;
  const double size = 15.0 * kSizeMul[variant] * jsize;
  const double angle = (kBaseAngle[kind] + jangle) * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(angle), sa = std::sin(angle);

  Tensor<float> img({1, kSize, kSize});
  for (std::size_t i = 0; i < kSize; ++i) {
    for (std::size_t j = 0; j < kSize; ++j) {
      const double dx = static_cast<double>(j) - cx;
      const double dy = static_cast<double>(i) - cy;
      const double u = ca * dx + sa * dy;
      const double v = -sa * dx + ca * dy;
      double d = 0.0;
      switch (kind) {
        case 0: d = detail::sd_bar(u, v, 1.6 * size, 0.28 * size); break;
        case 1: d = detail::sd_bar(u, v, 1.6 * size, 0.28 * size); break;  // rotated 90
        case 2: d = detail::sd_bar(u, v, 1.6 * size, 0.28 * size); break;  // rotated 45
        case 3: d = detail::sd_ellipse(u, v, 1.3 * size, 0.7 * size); break;
        case 4: d = detail::sd_ring(u, v, 1.0 * size, 0.22 * size); break;
        case 5: d = detail::sd_cross(u, v, 1.2 * size, 0.26 * size); break;
        case 6: d = detail::sd_tee(u, v, 0.9 * size, 0.26 * size); break;
        case 7: d = detail::sd_dots(u, v, 0.75 * size, 0.5 * size); break;
      }
      const double coverage = std::clamp(0.5 - d, 0.0, 1.0);
      double value = bg + (fg - bg) * coverage + rng.normal(0.0, noise);
      img[i * kSize + j] = static_cast<float>(std::clamp(value, 0.0, 1.0));
    }
  }
  return img;
}

/// Synthetic hierarchical label code for a class (distinct full code per
/// class, dash-separated axes).
inline std::string synthetic_label_code(std::size_t class_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "11%02zu-1%zu0-%zu00-700", class_id % 8 + 1, class_id / 8 + 1,
                class_id % 4 + 2);
  return buf;
}

/// Renders a labeled corpus to out_dir/images/*.pgm and writes
/// out_dir/manifest.csv (paths relative to out_dir). Deterministic for a
/// fixed seed. Returns the manifest path.
inline std::string generate_synthetic_corpus(const std::string& out_dir, std::size_t num_classes,
                                             std::size_t per_class, std::uint64_t seed) {
  if (num_classes == 0 || num_classes > kMaxSyntheticClasses) {
    throw ConfigError("synthetic corpus: class count " + std::to_string(num_classes) +
                      " outside [1," + std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (per_class == 0) throw ConfigError("synthetic corpus: per_class must be positive");

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "images");

  std::ofstream manifest(root / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DataError("synthetic corpus: cannot write manifest in '" + out_dir + "'");
  manifest << "path,label_code\n";
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::string code = synthetic_label_code(c);
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "images/c%02zu_%04zu.pgm", c, i);
      const Tensor<float> img = render_synthetic_image(c, mix_seed(seed, c, i));
      write_pgm((root / name).string(), img);
      manifest << name << "," << code << "\n";
    }
  }
  if (!manifest) throw DataError("synthetic corpus: manifest write failed in '" + out_dir + "'");
  return (root / "manifest.csv").string();
}

}  // namespace radnet
