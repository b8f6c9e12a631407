#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

/// Versioned little-endian container of named tensors and strings. Used for
/// model checkpoints and serialized SVM models.
///
/// Layout: magic "RNTC", u32 version, u32 record count, then per record:
///   u8 kind (0=f32 tensor, 1=f64 tensor, 2=string), u32 name length, name,
///   tensor: u32 rank, u64 dims..., raw little-endian payload
///   string: u64 byte length, bytes
class TensorFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put_string(const std::string& name, const std::string& value) {
    strings_[name] = value;
    order_.push_back({name, 2});
  }
  void put(const std::string& name, const Tensor<float>& t) {
    f32_[name] = t;
    order_.push_back({name, 0});
  }
  void put(const std::string& name, const Tensor<double>& t) {
    f64_[name] = t;
    order_.push_back({name, 1});
  }

  bool has_string(const std::string& name) const { return strings_.count(name) > 0; }
  bool has_f32(const std::string& name) const { return f32_.count(name) > 0; }
  bool has_f64(const std::string& name) const { return f64_.count(name) > 0; }

  const std::string& get_string(const std::string& name) const {
    auto it = strings_.find(name);
    if (it == strings_.end()) throw DataError("checkpoint: missing string record '" + name + "'");
    return it->second;
  }
  const Tensor<float>& get_f32(const std::string& name) const {
    auto it = f32_.find(name);
    if (it == f32_.end()) throw DataError("checkpoint: missing f32 tensor '" + name + "'");
    return it->second;
  }
  const Tensor<double>& get_f64(const std::string& name) const {
    auto it = f64_.find(name);
    if (it == f64_.end()) throw DataError("checkpoint: missing f64 tensor '" + name + "'");
    return it->second;
  }

  template <typename T>
  const Tensor<T>& get(const std::string& name) const;

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    out.write("RNTC", 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(order_.size()));
    for (const auto& [name, kind] : order_) {
      out.put(static_cast<char>(kind));
      put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      if (kind == 2) {
        const std::string& s = strings_.at(name);
        put_u64(out, s.size());
        out.write(s.data(), static_cast<std::streamsize>(s.size()));
      } else if (kind == 0) {
        write_tensor(out, f32_.at(name));
      } else {
        write_tensor(out, f64_.at(name));
      }
    }
    if (!out) throw DataError("checkpoint: write to '" + path + "' failed");
  }

  static TensorFile read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "RNTC", 4) != 0) {
      throw DataError("checkpoint: '" + path + "' is not a tensor container (bad magic)");
    }
    const std::uint32_t version = get_u32(in, path);
    if (version != kVersion) {
      throw DataError("checkpoint: '" + path + "' has unsupported version " +
                      std::to_string(version) + " (expected " + std::to_string(kVersion) + ")");
    }
    const std::uint32_t count = get_u32(in, path);
    TensorFile f;
    for (std::uint32_t r = 0; r < count; ++r) {
      int kind = in.get();
      if (kind == EOF) throw truncated(path);
      const std::uint32_t name_len = get_u32(in, path);
      std::string name(name_len, '\0');
      if (!in.read(name.data(), name_len)) throw truncated(path);
      if (kind == 2) {
        const std::uint64_t len = get_u64(in, path);
        std::string value(static_cast<std::size_t>(len), '\0');
        if (!in.read(value.data(), static_cast<std::streamsize>(len))) throw truncated(path);
        f.put_string(name, value);
      } else if (kind == 0) {
        f.put(name, read_tensor<float>(in, path));
      } else if (kind == 1) {
        f.put(name, read_tensor<double>(in, path));
      } else {
        throw DataError("checkpoint: '" + path + "' has unknown record kind " +
                        std::to_string(kind));
      }
    }
    return f;
  }

  const std::vector<std::pair<std::string, int>>& records() const { return order_; }

 private:
  static DataError truncated(const std::string& path) {
    return DataError("checkpoint: '" + path + "' is truncated");
  }

  static void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                 static_cast<char>(v >> 24)};
    out.write(b, 4);
  }
  static void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    out.write(b, 8);
  }
  static std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw truncated(path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  static std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw truncated(path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  template <typename T>
  static void write_tensor(std::ostream& out, const Tensor<T>& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) put_u64(out, t.dim(i));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(T)));
  }

  template <typename T>
  static Tensor<T> read_tensor(std::istream& in, const std::string& path) {
    const std::uint32_t rank = get_u32(in, path);
    if (rank == 0 || rank > 8) {
      throw DataError("checkpoint: '" + path + "' has tensor with invalid rank " +
                      std::to_string(rank));
    }
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(get_u64(in, path));
      if (shape[i] == 0) throw DataError("checkpoint: '" + path + "' has zero tensor dimension");
    }
    std::vector<T> data(shape_numel(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(T)))) {
      throw truncated(path);
    }
    return Tensor<T>(std::move(shape), std::move(data));
  }

  std::map<std::string, std::string> strings_;
  std::map<std::string, Tensor<float>> f32_;
  std::map<std::string, Tensor<double>> f64_;
  std::vector<std::pair<std::string, int>> order_;
};

template <>
inline const Tensor<float>& TensorFile::get<float>(const std::string& name) const {
  return get_f32(name);
}
template <>
inline const Tensor<double>& TensorFile::get<double>(const std::string& name) const {
  return get_f64(name);
}

}  // namespace radnet
