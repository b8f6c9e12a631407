#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/rng.hpp"

namespace radnet {

/// One manifest row before class assignment: an image path plus its full
/// hierarchical label code (dash-separated axes), treated as one atomic class.
struct RawRecord {
  std::string path;
  std::string label_code;
};

enum class Split : std::uint8_t { kTrain, kTest };

struct ManifestRecord {
  std::string path;
  std::string label_code;
  int class_id = -1;
  Split split = Split::kTrain;
};

/// Records with flat class ids and an exact train/test partition.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> classes;  // class_id -> label code

  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.split == s ? 1 : 0;
    return n;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

/// Flattens the hierarchical labels: each distinct full code becomes one
/// class, ordered by sorted-unique code. Returns the class list; records get
/// their class_id assigned.
inline std::vector<std::string> flatten_labels(const std::vector<RawRecord>& raw,
                                               std::vector<ManifestRecord>* out) {
  std::set<std::string> codes;
  for (const auto& r : raw) {
    if (r.label_code.empty()) throw DataError("manifest: record '" + r.path + "' has empty label");
    codes.insert(r.label_code);
  }
  std::vector<std::string> classes(codes.begin(), codes.end());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = static_cast<int>(i);
  out->clear();
  out->reserve(raw.size());
  for (const auto& r : raw) {
    out->push_back({r.path, r.label_code, index.at(r.label_code), Split::kTrain});
  }
  return classes;
}

/// Drops every class with fewer than min_count records and recompacts class
/// ids to [0,K). Record order is preserved.
inline std::vector<std::string> filter_min_count(std::vector<ManifestRecord>* records,
                                                 const std::vector<std::string>& classes,
                                                 std::size_t min_count) {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (const auto& r : *records) counts[static_cast<std::size_t>(r.class_id)]++;

  std::vector<int> remap(classes.size(), -1);
  std::vector<std::string> kept;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (counts[c] >= min_count) {
      remap[c] = static_cast<int>(kept.size());
      kept.push_back(classes[c]);
    }
  }
  if (kept.empty()) {
    throw DataError("manifest: no classes survive the min-count filter (min_count=" +
                    std::to_string(min_count) + ")");
  }
  std::vector<ManifestRecord> filtered;
  filtered.reserve(records->size());
  for (auto& r : *records) {
    const int id = remap[static_cast<std::size_t>(r.class_id)];
    if (id >= 0) {
      r.class_id = id;
      filtered.push_back(std::move(r));
    }
  }
  *records = std::move(filtered);
  return kept;
}

/// Stratified split: per class, round(train_frac * n) records go to train
/// (clamped so every class keeps at least one test record), assignment by
/// seeded per-class shuffle.
inline DatasetManifest stratified_split(std::vector<ManifestRecord> records,
                                        std::vector<std::string> classes, double train_frac,
                                        std::uint64_t seed) {
  if (train_frac <= 0.0 || train_frac >= 1.0) {
    throw std::invalid_argument("split: train_frac " + std::to_string(train_frac) +
                                " outside (0,1)");
  }
  std::vector<std::vector<std::size_t>> members(classes.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    members[static_cast<std::size_t>(records[i].class_id)].push_back(i);
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::size_t n = members[c].size();
    if (n < 2) {
      throw DataError("split: class '" + classes[c] + "' has " + std::to_string(n) +
                      " record(s); need at least 2 to stratify");
    }
    std::size_t train_n = static_cast<std::size_t>(
        std::lround(train_frac * static_cast<double>(n)));
    if (train_n < 1) train_n = 1;
    if (train_n > n - 1) train_n = n - 1;  // at least one test record per class
    Rng rng(mix_seed(seed, c));
    rng.shuffle(members[c]);
    for (std::size_t k = 0; k < n; ++k) {
      records[members[c][k]].split = k < train_n ? Split::kTrain : Split::kTest;
    }
  }
  return DatasetManifest{std::move(records), std::move(classes)};
}

// ---------------------------------------------------------------------------
// manifest CSV
// ---------------------------------------------------------------------------

/// Reads a manifest CSV with header `path,label_code` (extra columns such as
/// class_id/split from a previous run are ignored).
inline std::vector<RawRecord> read_raw_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest: '" + path + "' is empty");
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "path" || header[1] != "label_code") {
    throw DataError("manifest: '" + path + "' must start with header 'path,label_code'");
  }
  std::vector<RawRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError("manifest: '" + path + "' line " + std::to_string(line_no) +
                      " is malformed");
    }
    out.push_back({fields[0], fields[1]});
  }
  return out;
}

/// Writes the split manifest as `path,label_code,class_id,split`.
inline void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("manifest: cannot open '" + path + "' for writing");
  out << "path,label_code,class_id,split\n";
  for (const auto& r : manifest.records) {
    out << r.path << "," << r.label_code << "," << r.class_id << ","
        << (r.split == Split::kTrain ? "train" : "test") << "\n";
  }
  if (!out) throw DataError("manifest: write to '" + path + "' failed");
}

/// Reads a split manifest produced by write_manifest.
inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest: '" + path + "' is empty");
  auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "path" || header[1] != "label_code" ||
      header[2] != "class_id" || header[3] != "split") {
    throw DataError("manifest: '" + path +
                    "' must start with header 'path,label_code,class_id,split'");
  }
  DatasetManifest manifest;
  std::map<int, std::string> codes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() < 4) {
      throw DataError("manifest: '" + path + "' line " + std::to_string(line_no) +
                      " is malformed");
    }
    ManifestRecord r;
    r.path = fields[0];
    r.label_code = fields[1];
    try {
      r.class_id = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw DataError("manifest: '" + path + "' line " + std::to_string(line_no) +
                      " has a bad class_id");
    }
    if (fields[3] == "train") {
      r.split = Split::kTrain;
    } else if (fields[3] == "test") {
      r.split = Split::kTest;
    } else {
      throw DataError("manifest: '" + path + "' line " + std::to_string(line_no) +
                      " has split '" + fields[3] + "' (want train|test)");
    }
    if (r.class_id < 0) {
      throw DataError("manifest: '" + path + "' line " + std::to_string(line_no) +
                      " has a negative class_id");
    }
    codes[r.class_id] = r.label_code;
    manifest.records.push_back(std::move(r));
  }
  if (manifest.records.empty()) throw DataError("manifest: '" + path + "' has no records");
  const int max_id = codes.rbegin()->first;
  manifest.classes.assign(static_cast<std::size_t>(max_id) + 1, "");
  for (const auto& [id, code] : codes) manifest.classes[static_cast<std::size_t>(id)] = code;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    if (manifest.classes[c].empty()) {
      throw DataError("manifest: '" + path + "' has no records for class id " + std::to_string(c));
    }
  }
  return manifest;
}

}  // namespace radnet
