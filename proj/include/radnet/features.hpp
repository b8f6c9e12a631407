#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

/// Fixed feature vectors with class ids, e.g. activations exported from a
/// pretrained network. The canonical dimension is 4096; files carrying a
/// different dimension in their header are accepted as-is.
struct FeatureSet {
  Tensor<float> vectors;               // [M, D]
  std::vector<std::uint32_t> class_ids;  // length M
  std::string source;

  std::size_t rows() const { return vectors.dim(0); }
  std::size_t dim() const { return vectors.dim(1); }
  std::size_t num_classes() const {
    std::uint32_t mx = 0;
    for (std::uint32_t c : class_ids) mx = std::max(mx, c);
    return class_ids.empty() ? 0 : static_cast<std::size_t>(mx) + 1;
  }

  void validate() const {
    if (vectors.rank() != 2) throw DataError("features: vectors must be [M,D]");
    if (class_ids.size() != vectors.dim(0)) {
      throw DataError("features: " + std::to_string(class_ids.size()) + " labels for " +
                      std::to_string(vectors.dim(0)) + " rows");
    }
  }
};

constexpr std::size_t kFeatureDim = 4096;

namespace detail {

inline std::uint32_t read_u32le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("features: '" + path + "' is truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  out.write(b, 4);
}

}  // namespace detail

/// Binary feature file: magic "FVS1", u32 row count M, u32 dimension D,
/// M*D little-endian f32, then M u32 class ids.
inline void write_feature_file(const FeatureSet& features, const std::string& path) {
  features.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("features: cannot open '" + path + "' for writing");
  out.write("FVS1", 4);
  detail::write_u32le(out, static_cast<std::uint32_t>(features.rows()));
  detail::write_u32le(out, static_cast<std::uint32_t>(features.dim()));
  out.write(reinterpret_cast<const char*>(features.vectors.data()),
            static_cast<std::streamsize>(features.vectors.size() * sizeof(float)));
  for (std::uint32_t id : features.class_ids) detail::write_u32le(out, id);
  if (!out) throw DataError("features: write to '" + path + "' failed");
}

namespace detail {

inline FeatureSet load_feature_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FVS1", 4) != 0) {
    throw DataError("features: '" + path + "' has a malformed header (bad magic)");
  }
  const std::uint32_t rows = read_u32le(in, path);
  const std::uint32_t dim = read_u32le(in, path);
  if (rows == 0 || dim == 0) {
    throw DataError("features: '" + path + "' has a malformed header (zero rows or dimension)");
  }
  std::vector<float> data(static_cast<std::size_t>(rows) * dim);
  if (!in.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw DataError("features: '" + path + "' is truncated (vector payload)");
  }
  FeatureSet f;
  f.vectors = Tensor<float>({rows, dim}, std::move(data));
  f.class_ids.resize(rows);
  for (std::uint32_t i = 0; i < rows; ++i) f.class_ids[i] = read_u32le(in, path);
  f.source = path;
  return f;
}

inline FeatureSet load_feature_csv(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::vector<float> data;
  std::vector<std::uint32_t> ids;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("label", 0) == 0) continue;  // optional header
    std::stringstream ss(line);
    std::string field;
    std::vector<float> values;
    bool first = true;
    long label = -1;
    while (std::getline(ss, field, ',')) {
      try {
        if (first) {
          label = std::stol(field);
          first = false;
        } else {
          values.push_back(std::stof(field));
        }
      } catch (const std::exception&) {
        throw DataError("features: '" + path + "' line " + std::to_string(line_no) +
                        " has a non-numeric field '" + field + "'");
      }
    }
    if (first || label < 0) {
      throw DataError("features: '" + path + "' line " + std::to_string(line_no) +
                      " has no valid label");
    }
    if (dim == 0) {
      dim = values.size();
      if (dim == 0) {
        throw DataError("features: '" + path + "' line " + std::to_string(line_no) +
                        " has no feature values");
      }
    } else if (values.size() != dim) {
      throw DataError("features: '" + path + "' row " + std::to_string(row + 1) + " (line " +
                      std::to_string(line_no) + ") has " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(dim));
    }
    data.insert(data.end(), values.begin(), values.end());
    ids.push_back(static_cast<std::uint32_t>(label));
    ++row;
  }
  if (row == 0) throw DataError("features: '" + path + "' has no data rows");
  FeatureSet f;
  f.vectors = Tensor<float>({row, dim}, std::move(data));
  f.class_ids = std::move(ids);
  f.source = path;
  return f;
}

}  // namespace detail

/// Loads a feature file, binary (FVS1) or CSV (`label,f0,...`). expected_dim 0
/// accepts whatever the file carries; the binary header always overrides.
inline FeatureSet load_feature_set(const std::string& path, std::size_t expected_dim = 0) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw DataError("features: cannot open '" + path + "'");
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();

  FeatureSet f;
  if (std::memcmp(magic, "FVS1", 4) == 0) {
    f = detail::load_feature_binary(path);  // header dimension is authoritative
  } else {
    f = detail::load_feature_csv(path);
    if (expected_dim != 0 && f.dim() != expected_dim) {
      throw DataError("features: '" + path + "' has dimension " + std::to_string(f.dim()) +
                      ", expected " + std::to_string(expected_dim));
    }
  }
  f.validate();
  return f;
}

}  // namespace radnet
