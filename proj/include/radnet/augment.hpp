#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

/// Sampling ranges for one augmentation draw. Defaults: mild geometric jitter
/// with horizontal flips only (vertical flips change anatomy semantics).
struct AugmentConfig {
  double rotation_max_deg = 10.0;
  double translate_max_frac = 0.10;  // of each image dimension
  double shear_max_deg = 5.0;
  double scale_lo = 0.9, scale_hi = 1.1;      // isotropic
  double stretch_lo = 0.9, stretch_hi = 1.1;  // per axis
  double flip_prob = 0.5;
  std::size_t crop_h = 128, crop_w = 128;
  double fill = 0.0;

  void validate() const {
    auto bad = [](const std::string& what) {
      throw std::invalid_argument("augment config: " + what);
    };
    if (rotation_max_deg < 0) bad("rotation_max_deg must be >= 0");
    if (translate_max_frac < 0 || translate_max_frac > 0.5) {
      bad("translate_max_frac outside [0,0.5]");
    }
    if (shear_max_deg < 0) bad("shear_max_deg must be >= 0");
    if (!(scale_lo > 0 && scale_lo <= 1.0 && scale_hi >= 1.0)) {
      bad("scale range must satisfy 0 < lo <= 1 <= hi");
    }
    if (!(stretch_lo > 0 && stretch_lo <= stretch_hi)) bad("stretch range is not ordered");
    if (flip_prob < 0 || flip_prob > 1) bad("flip_prob outside [0,1]");
    if (fill < 0 || fill > 1) bad("fill outside [0,1]");
    if (crop_h == 0 || crop_w == 0) bad("crop size must be positive");
  }
};

/// The raw parameter draw that produced an affine spec, kept for logging.
struct AffineParams {
  double rotation_deg = 0.0;
  double translate_x = 0.0, translate_y = 0.0;  // pixels
  double shear_deg = 0.0;
  double scale = 1.0;
  double stretch_x = 1.0, stretch_y = 1.0;
  bool flip = false;
};

/// One augmentation: a 2x3 matrix mapping output pixel coordinates (x,y,1) to
/// source coordinates (inverse warp), plus a horizontal flip applied after
/// the warp.
struct AffineSpec {
  std::array<double, 6> m = {1, 0, 0, 0, 1, 0};  // row-major 2x3
  bool flip = false;
  AffineParams params;

  double det() const { return m[0] * m[4] - m[1] * m[3]; }
};

/// Builds the inverse-warp matrix for explicit parameter values. The forward
/// map applies, about the image center: scale, stretch, shear, rotation, then
/// translation.
inline AffineSpec make_affine(const AffineParams& p, std::size_t width, std::size_t height) {
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  const double th = p.rotation_deg * kDegToRad;
  const double sh = std::tan(p.shear_deg * kDegToRad);
  const double ct = std::cos(th), st = std::sin(th);

  // forward 2x2: R * Shear * Stretch * Scale
  const double sx = p.scale * p.stretch_x;
  const double sy = p.scale * p.stretch_y;
  // Shear * diag(sx, sy) = [[sx, sh*sy], [0, sy]]
  const double a = ct * sx, bq = ct * sh * sy - st * sy;
  const double c = st * sx, d = st * sh * sy + ct * sy;

  const double det = a * d - bq * c;
  if (std::abs(det) < 1e-12) {
    throw std::invalid_argument("affine: singular transform (determinant ~ 0)");
  }
  // inverse 2x2
  const double ia = d / det, ib = -bq / det;
  const double ic = -c / det, id = a / det;

  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  // src = Linv * (out - center - t) + center
  const double ox = cx + p.translate_x, oy = cy + p.translate_y;

  AffineSpec spec;
  spec.m = {ia, ib, cx - (ia * ox + ib * oy), ic, id, cy - (ic * ox + id * oy)};
  spec.flip = p.flip;
  spec.params = p;
  return spec;
}

/// Draws one augmentation. Draw order: rotation, translation (x then y),
/// shear, isotropic scale, per-axis stretch, flip.
inline AffineSpec sample_augmentation(const AugmentConfig& cfg, std::size_t width,
                                      std::size_t height, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  AffineParams p;
  p.rotation_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  p.translate_x = rng.uniform(-cfg.translate_max_frac, cfg.translate_max_frac) *
                  static_cast<double>(width);
  p.translate_y = rng.uniform(-cfg.translate_max_frac, cfg.translate_max_frac) *
                  static_cast<double>(height);
  p.shear_deg = rng.uniform(-cfg.shear_max_deg, cfg.shear_max_deg);
  p.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  p.stretch_x = rng.uniform(cfg.stretch_lo, cfg.stretch_hi);
  p.stretch_y = rng.uniform(cfg.stretch_lo, cfg.stretch_hi);
  p.flip = rng.bernoulli(cfg.flip_prob);
  return make_affine(p, width, height);
}

/// Applying `first` then `second` equals applying the composite. Only
/// flip-free specs compose into a single matrix.
inline AffineSpec compose(const AffineSpec& first, const AffineSpec& second) {
  if (first.flip || second.flip) {
    throw std::invalid_argument("affine: cannot compose specs with flips");
  }
  // both matrices map output -> source; the pixel path runs through `second`
  // first, so the composite is first.m applied to second.m
  const auto& a = first.m;
  const auto& b = second.m;
  AffineSpec out;
  out.m = {a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
           a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]};
  return out;
}

/// Inverse-warps a single-channel image: every output pixel samples the
/// source bilinearly at m*(x,y,1); samples outside the image take the fill
/// value. A flipped spec mirrors columns afterwards.
template <typename T>
Tensor<T> apply_affine(const Tensor<T>& img, const AffineSpec& spec, T fill) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw std::invalid_argument("apply_affine: expected [1,H,W] image, got " +
                                shape_str(img.shape()));
  }
  if (std::abs(spec.det()) < 1e-12) {
    throw std::invalid_argument("apply_affine: singular transform matrix");
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  Tensor<T> out(img.shape());
  const auto& m = spec.m;
  const T* src = img.data();
  for (std::size_t i = 0; i < h; ++i) {
    const double y = static_cast<double>(i);
    T* row = out.data() + i * w;
    for (std::size_t j = 0; j < w; ++j) {
      const double x = static_cast<double>(j);
      const double sx = m[0] * x + m[1] * y + m[2];
      const double sy = m[3] * x + m[4] * y + m[5];
      const long x0 = static_cast<long>(std::floor(sx));
      const long y0 = static_cast<long>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      auto sample = [&](long yy, long xx) -> double {
        if (xx < 0 || xx >= lw || yy < 0 || yy >= lh) return static_cast<double>(fill);
        return src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
      };
      const double v = (1.0 - fy) * ((1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                       fy * ((1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
      row[j] = static_cast<T>(v);
    }
  }
  if (spec.flip) {
    for (std::size_t i = 0; i < h; ++i) {
      T* row = out.data() + i * w;
      for (std::size_t j = 0; j < w / 2; ++j) std::swap(row[j], row[w - 1 - j]);
    }
  }
  return out;
}

/// Bilinear resize with center-aligned sampling and edge clamping.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, std::size_t out_h, std::size_t out_w) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw std::invalid_argument("bilinear_resize: expected [1,H,W] image, got " +
                                shape_str(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  if (h == out_h && w == out_w) return img;
  Tensor<T> out({1, out_h, out_w});
  const double ry = static_cast<double>(h) / static_cast<double>(out_h);
  const double rx = static_cast<double>(w) / static_cast<double>(out_w);
  const T* src = img.data();
  auto clamp = [](long v, long hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (std::size_t i = 0; i < out_h; ++i) {
    const double sy = (static_cast<double>(i) + 0.5) * ry - 0.5;
    const long y0 = static_cast<long>(std::floor(sy));
    const double fy = sy - static_cast<double>(y0);
    const std::size_t ya = static_cast<std::size_t>(clamp(y0, static_cast<long>(h) - 1));
    const std::size_t yb = static_cast<std::size_t>(clamp(y0 + 1, static_cast<long>(h) - 1));
    T* row = out.data() + i * out_w;
    for (std::size_t j = 0; j < out_w; ++j) {
      const double sx = (static_cast<double>(j) + 0.5) * rx - 0.5;
      const long x0 = static_cast<long>(std::floor(sx));
      const double fx = sx - static_cast<double>(x0);
      const std::size_t xa = static_cast<std::size_t>(clamp(x0, static_cast<long>(w) - 1));
      const std::size_t xb = static_cast<std::size_t>(clamp(x0 + 1, static_cast<long>(w) - 1));
      const double v = (1.0 - fy) * ((1.0 - fx) * src[ya * w + xa] + fx * src[ya * w + xb]) +
                       fy * ((1.0 - fx) * src[yb * w + xa] + fx * src[yb * w + xb]);
      row[j] = static_cast<T>(v);
    }
  }
  return out;
}

/// Crops to crop_h x crop_w (centered, or at a random in-bounds offset when
/// rng is given) and resizes to the target size.
template <typename T>
Tensor<T> crop_resize(const Tensor<T>& img, std::size_t crop_h, std::size_t crop_w,
                      std::size_t out_h, std::size_t out_w, Rng* rng = nullptr) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw std::invalid_argument("crop_resize: expected [1,H,W] image, got " +
                                shape_str(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  if (crop_h > h || crop_w > w) {
    throw std::invalid_argument("crop_resize: crop " + std::to_string(crop_h) + "x" +
                                std::to_string(crop_w) + " larger than image " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  std::size_t top = (h - crop_h) / 2, left = (w - crop_w) / 2;
  if (rng != nullptr) {
    top = h == crop_h ? 0 : rng->below(h - crop_h + 1);
    left = w == crop_w ? 0 : rng->below(w - crop_w + 1);
  }
  if (top == 0 && left == 0 && crop_h == h && crop_w == w) {
    return bilinear_resize(img, out_h, out_w);
  }
  Tensor<T> crop({1, crop_h, crop_w});
  for (std::size_t i = 0; i < crop_h; ++i) {
    const T* src = img.data() + (top + i) * w + left;
    std::copy(src, src + crop_w, crop.data() + i * crop_w);
  }
  return bilinear_resize(crop, out_h, out_w);
}

}  // namespace radnet
