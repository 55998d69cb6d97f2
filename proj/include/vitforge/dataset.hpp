#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitforge/errors.hpp"
#include "vitforge/image.hpp"
#include "vitforge/rng.hpp"
#include "vitforge/tensor.hpp"
#include "vitforge/threading.hpp"

namespace vitforge {

struct ManifestEntry {
  std::string path;
  int label = 0;
};

// File listing for one dataset split. Class names are sorted
// lexicographically and label indices are dense from 0, so with classes
// {fire, nofire} the mapping is fire -> 0, nofire -> 1.
struct DatasetManifest {
  std::string split;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& e : entries) counts[static_cast<std::size_t>(e.label)]++;
    return counts;
  }
};

namespace detail {
inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}
}  // namespace detail

// Scans <root>/<split>/<class>/*.{jpg,jpeg,png} into a manifest. Output is
// sorted (classes by name, entries by path) so it does not depend on the
// filesystem's enumeration order. Empty class directories produce warnings,
// not errors.
inline DatasetManifest scan_dataset(const std::filesystem::path& root,
                                    const std::string& split) {
  namespace fs = std::filesystem;
  const fs::path split_dir = root / split;
  if (!fs::is_directory(split_dir)) {
    throw ConfigError("missing split directory: " + split_dir.string());
  }

  DatasetManifest manifest;
  manifest.split = split;
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (entry.is_directory()) {
      manifest.class_names.push_back(entry.path().filename().string());
    }
  }
  if (manifest.class_names.empty()) {
    throw ConfigError("no class directories under " + split_dir.string());
  }
  std::sort(manifest.class_names.begin(), manifest.class_names.end());

  for (std::size_t label = 0; label < manifest.class_names.size(); ++label) {
    const fs::path class_dir = split_dir / manifest.class_names[label];
    std::size_t found = 0;
    for (const auto& file : fs::directory_iterator(class_dir)) {
      if (!file.is_regular_file() || !detail::has_image_extension(file.path())) {
        continue;
      }
      manifest.entries.push_back(
          {file.path().generic_string(), static_cast<int>(label)});
      ++found;
    }
    if (found == 0) {
      manifest.warnings.push_back("class directory is empty: " + class_dir.string());
    }
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.path < b.path;
            });
  return manifest;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"path", e.path}, {"label", e.label}});
  }
  return {{"split", m.split},
          {"class_names", m.class_names},
          {"entries", entries},
          {"warnings", m.warnings}};
}

inline void save_manifest_json(const DatasetManifest& m,
                               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << manifest_to_json(m).dump(2) << "\n";
}

inline DatasetManifest load_manifest_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.split = j.at("split").get<std::string>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<int>()});
    }
    if (j.contains("warnings")) {
      m.warnings = j.at("warnings").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

// One training unit: images [B, 3, H, W] plus their labels.
struct Batch {
  Tensor images;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

// Visit order of manifest entries for one epoch. Shuffling is a Fisher-Yates
// pass over xoshiro256** seeded with splitmix64(seed ^ epoch_index), so each
// epoch has its own reproducible permutation.
inline std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle,
                                            std::uint64_t seed,
                                            std::uint64_t epoch_index) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle && n > 1) {
    Xoshiro256ss rng(seed ^ epoch_index);
    fisher_yates(order, rng);
  }
  return order;
}

inline std::size_t num_batches(std::size_t entries, int batch_size) {
  return (entries + static_cast<std::size_t>(batch_size) - 1) /
         static_cast<std::size_t>(batch_size);
}

// What to do when a file fails to decode: training skips and logs, so one
// bad file cannot kill a long run; evaluation aborts, so reported support
// counts are always exact.
enum class DecodePolicy { kSkipAndLog, kAbort };

struct PipelineOptions {
  int image_size = 224;
  NormalizationSpec normalization = NormalizationSpec::imagenet();
  DecodePolicy on_decode_error = DecodePolicy::kAbort;
  std::ostream* log = &std::cerr;
};

// Abstract source of batches consumed by the training loop.
class BatchSource {
 public:
  virtual ~BatchSource() = default;

  // Rewinds to the start of an epoch. The epoch index picks the shuffle
  // permutation where applicable.
  virtual void reset(std::uint64_t epoch_index) = 0;
  virtual std::optional<Batch> next() = 0;
  virtual std::size_t batches_per_epoch() const = 0;
};

// Streams batches from a manifest: decode, resize, normalize. Files within a
// batch are processed concurrently, but slots are assigned by entry order so
// the emitted stream is identical regardless of worker scheduling. Every
// entry appears exactly once per epoch and the final short batch is emitted.
class ManifestBatchSource final : public BatchSource {
 public:
  ManifestBatchSource(DatasetManifest manifest, PipelineOptions options,
                      int batch_size, bool shuffle, std::uint64_t seed)
      : manifest_(std::move(manifest)),
        options_(options),
        batch_size_(batch_size),
        shuffle_(shuffle),
        seed_(seed) {
    if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
    options_.normalization.validate();
    reset(0);
  }

  void reset(std::uint64_t epoch_index) override {
    order_ = epoch_order(manifest_.entries.size(), shuffle_, seed_, epoch_index);
    cursor_ = 0;
  }

  std::size_t batches_per_epoch() const override {
    return num_batches(manifest_.entries.size(), batch_size_);
  }

  std::optional<Batch> next() override {
    while (cursor_ < order_.size()) {
      const std::size_t begin = cursor_;
      const std::size_t end =
          std::min(order_.size(), begin + static_cast<std::size_t>(batch_size_));
      cursor_ = end;
      const std::size_t count = end - begin;

      const int hw = options_.image_size;
      const std::size_t image_floats = 3u * static_cast<std::size_t>(hw) * hw;
      std::vector<Tensor> slots(count);
      std::vector<int> labels(count);
      std::vector<std::uint8_t> ok(count, 0);
      std::vector<std::string> failures(count);

      parallel_for(static_cast<std::int64_t>(count), [&](std::int64_t i) {
        const ManifestEntry& entry =
            manifest_.entries[order_[begin + static_cast<std::size_t>(i)]];
        labels[static_cast<std::size_t>(i)] = entry.label;
        try {
          ImageRGB img = decode_image(entry.path);
          if (img.height != hw || img.width != hw) img = resize_bilinear(img, hw, hw);
          slots[static_cast<std::size_t>(i)] =
              to_normalized_tensor(img, options_.normalization, hw, hw);
          ok[static_cast<std::size_t>(i)] = 1;
        } catch (const DataError& e) {
          failures[static_cast<std::size_t>(i)] = e.what();
        }
      });

      for (std::size_t i = 0; i < count; ++i) {
        if (ok[i]) continue;
        if (options_.on_decode_error == DecodePolicy::kAbort) {
          throw DataError(failures[i]);
        }
        if (options_.log) *options_.log << "skipping undecodable file: " << failures[i] << "\n";
      }

      std::size_t kept = 0;
      for (std::size_t i = 0; i < count; ++i) kept += ok[i];
      if (kept == 0) continue;  // whole batch skipped; move to the next chunk

      Batch batch;
      batch.images = Tensor({static_cast<int>(kept), 3, hw, hw});
      batch.labels.reserve(kept);
      std::size_t slot = 0;
      for (std::size_t i = 0; i < count; ++i) {
        if (!ok[i]) continue;
        std::copy(slots[i].data(), slots[i].data() + image_floats,
                  batch.images.data() + slot * image_floats);
        batch.labels.push_back(labels[i]);
        ++slot;
      }
      return batch;
    }
    return std::nullopt;
  }

  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  PipelineOptions options_;
  int batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Fixed in-memory batches; used by tests and the profiler.
class VectorBatchSource final : public BatchSource {
 public:
  explicit VectorBatchSource(std::vector<Batch> batches)
      : batches_(std::move(batches)) {}

  void reset(std::uint64_t) override { cursor_ = 0; }
  std::size_t batches_per_epoch() const override { return batches_.size(); }

  std::optional<Batch> next() override {
    if (cursor_ >= batches_.size()) return std::nullopt;
    return batches_[cursor_++];
  }

 private:
  std::vector<Batch> batches_;
  std::size_t cursor_ = 0;
};

}  // namespace vitforge
