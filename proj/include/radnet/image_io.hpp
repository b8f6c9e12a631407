#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "radnet/augment.hpp"
#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

namespace detail {

struct FileHandle {
  std::FILE* fp = nullptr;
  explicit FileHandle(const std::string& path, const char* mode) : fp(std::fopen(path.c_str(), mode)) {}
  ~FileHandle() {
    if (fp) std::fclose(fp);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

}  // namespace detail

/// Reads a PNG of any color type as grayscale in [0,1].
inline Tensor<float> read_png(const std::string& path) {
  detail::FileHandle file(path, "rb");
  if (!file.fp) throw DataError("image: cannot open '" + path + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("image: libpng initialization failed for '" + path + "'");
  }

  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("image: failed to decode PNG '" + path + "'");
  }
  png_init_io(png, file.fp);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);

  pixels.resize(static_cast<std::size_t>(width) * height);
  rows.resize(height);
  for (png_uint_32 i = 0; i < height; ++i) rows[i] = pixels.data() + i * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<float> img({1, height, width});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(pixels[i]) / 255.0f;
  return img;
}

/// Writes an image in [0,1] as an 8-bit grayscale PNG.
inline void write_png(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw std::invalid_argument("write_png: expected [1,H,W] image, got " + shape_str(img.shape()));
  }
  detail::FileHandle file(path, "wb");
  if (!file.fp) throw DataError("image: cannot open '" + path + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    throw DataError("image: libpng initialization failed for '" + path + "'");
  }

  const std::size_t h = img.dim(1), w = img.dim(2);
  std::vector<unsigned char> pixels(h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    float v = img[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    pixels[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
  }
  std::vector<png_bytep> rows(h);
  for (std::size_t i = 0; i < h; ++i) rows[i] = pixels.data() + i * w;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("image: failed to encode PNG '" + path + "'");
  }
  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads a binary PGM (P5, 8- or 16-bit) as grayscale in [0,1].
inline Tensor<float> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("image: cannot open '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("image: '" + path + "' is not a binary PGM (P5)");
  auto next_int = [&]() -> long {
    // skip whitespace and # comments
    for (;;) {
      const int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw DataError("image: malformed PGM header in '" + path + "'");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw DataError("image: malformed PGM header in '" + path + "'");
  }
  in.get();  // single whitespace before payload
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  Tensor<float> img({1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  if (maxval < 256) {
    std::vector<unsigned char> buf(count);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count))) {
      throw DataError("image: truncated PGM payload in '" + path + "'");
    }
    for (std::size_t i = 0; i < count; ++i) {
      img[i] = static_cast<float>(buf[i]) / static_cast<float>(maxval);
    }
  } else {
    std::vector<unsigned char> buf(count * 2);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw DataError("image: truncated PGM payload in '" + path + "'");
    }
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
      img[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return img;
}

/// Writes an image in [0,1] as an 8-bit binary PGM.
inline void write_pgm(const std::string& path, const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 1) {
    throw std::invalid_argument("write_pgm: expected [1,H,W] image, got " + shape_str(img.shape()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("image: cannot open '" + path + "' for writing");
  const std::size_t h = img.dim(1), w = img.dim(2);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> buf(h * w);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    float v = img[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    buf[i] = static_cast<unsigned char>(v * 255.0f + 0.5f);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("image: write to '" + path + "' failed");
}

/// Reads PNG or PGM (detected by content) as grayscale in [0,1].
inline Tensor<float> read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("image: cannot open '" + path + "'");
  char sig[2] = {0, 0};
  probe.read(sig, 2);
  probe.close();
  if (sig[0] == 'P' && sig[1] == '5') return read_pgm(path);
  if (static_cast<unsigned char>(sig[0]) == 0x89 && sig[1] == 'P') return read_png(path);
  throw DataError("image: '" + path + "' is neither PNG nor binary PGM");
}

/// Loads an image and standardizes it to target size: aspect-preserving
/// resize so the shorter side matches, then center crop.
inline Tensor<float> load_image(const std::string& path, std::size_t target_h = 128,
                                std::size_t target_w = 128) {
  Tensor<float> img = read_image(path);
  const std::size_t h = img.dim(1), w = img.dim(2);
  if (h == target_h && w == target_w) return img;
  std::size_t nh, nw;
  if (h * target_w <= w * target_h) {  // height is the (relatively) short side
    nh = target_h;
    nw = static_cast<std::size_t>(
        std::lround(static_cast<double>(w) * static_cast<double>(target_h) / static_cast<double>(h)));
  } else {
    nw = target_w;
    nh = static_cast<std::size_t>(
        std::lround(static_cast<double>(h) * static_cast<double>(target_w) / static_cast<double>(w)));
  }
  Tensor<float> resized = bilinear_resize(img, nh, nw);
  return crop_resize(resized, target_h, target_w, target_h, target_w);
}

}  // namespace radnet
