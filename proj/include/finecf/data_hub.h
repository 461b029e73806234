/*
 * Copyright 2026 The finecf Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dataset ingestion, misclassification mining and the on-disk array cache.

#ifndef FINECF_DATA_HUB_H_
#define FINECF_DATA_HUB_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finecf/model_gateway.h"
#include "finecf/tensor.h"
#include "json.hpp"

namespace finecf {

enum class Split { kTrain, kVal };

std::string SplitName(Split split);
// "train" or "val" (also accepts "test" for val). Throws ConfigError.
Split ParseSplit(const std::string& name);

struct Keypoint {
  int part_id = 0;
  double x = 0.0;  // column, image coordinates
  double y = 0.0;  // row
  bool visible = true;
};

struct BoundingBox {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool Contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct SampleRef {
  std::string sample_id;
  // Image path relative to the dataset root, or a generator key.
  std::string source;
  int label = 0;
};

// Shape classes share one silhouette (body + head) and differ only in the
// marker drawn on the head. A fraction of images also carries a distractor
// marker of another class on the body.
struct SyntheticConfig {
  int class_count = 8;
  int train_per_class = 100;
  int val_per_class = 100;
  int image_size = 64;
  double distractor_probability = 0.35;
  // Added to the marker shade for distractors; higher is fainter.
  double distractor_fade = 0.35;
  double noise_sigma = 0.03;

  nlohmann::json ToJson() const;
  static SyntheticConfig FromJson(const nlohmann::json& j);
};

inline constexpr int kMaxSyntheticClasses = 8;

struct DatasetHandle {
  std::string dataset_id;
  // "synthetic", "cub" or "stanford_dogs".
  std::string layout;
  std::filesystem::path root;
  std::vector<std::string> class_names;
  std::vector<SampleRef> train;
  std::vector<SampleRef> val;
  // Keypoints in original image coordinates.
  std::map<std::string, std::vector<Keypoint>> part_annotations;
  // Synthetic only: the discriminative part's region per sample.
  std::map<std::string, BoundingBox> part_regions;
  std::optional<SyntheticConfig> synthetic;
  uint64_t seed = 0;

  int class_count() const { return static_cast<int>(class_names.size()); }
  const std::vector<SampleRef>& split(Split s) const { return s == Split::kTrain ? train : val; }
  // Throws DataError if the id is unknown.
  const SampleRef& Find(const std::string& sample_id) const;
};

// Deterministic given (config, seed). K < 2 or K > 8 -> ConfigError.
DatasetHandle GenerateSynthetic(const SyntheticConfig& config, uint64_t seed);

// Writes dir/manifest.json (seed, config, config hash). The images are
// regenerated from their keys on load.
void WriteSyntheticManifest(const DatasetHandle& handle, const std::filesystem::path& dir);

enum class FineGrainedLayout { kCub, kStanfordDogs };

// CUB-200-2011: images/, images.txt, train_test_split.txt,
// image_class_labels.txt (optional; labels otherwise come from the folder
// prefix), classes.txt (optional), parts/part_locs.txt (optional).
// Stanford Dogs: Images/<synset>-<name>/..., train_list.txt, test_list.txt
// with one relative image path per line; labels are the sorted folder names.
// Missing index files -> IoError naming the file.
DatasetHandle LoadFineGrained(const std::filesystem::path& root, FineGrainedLayout layout);

// Dispatches on the directory contents: manifest.json -> synthetic,
// images.txt -> CUB, train_list.txt -> Stanford Dogs.
DatasetHandle OpenDataset(const std::filesystem::path& root);

struct LoadedSample {
  Image image;
  // Scaled to the returned image size.
  std::vector<Keypoint> keypoints;
  std::optional<BoundingBox> part_region;
};

// Loads (or regenerates) a sample's image at height x width, RGB in [0, 1].
// height = width = 0 keeps the native size.
LoadedSample LoadSample(const DatasetHandle& handle, const SampleRef& sample, int height = 0,
                        int width = 0);

struct MisclassifiedSample {
  std::string sample_id;
  std::string source;
  int true_class = 0;
  int predicted_class = 0;
  double confidence = 0.0;
};

// Every sample of `split` whose prediction differs from its label, in
// dataset order.
std::vector<MisclassifiedSample> MineMisclassified(const ModelBundle& bundle,
                                                   const DatasetHandle& handle, Split split);

// ------------------------------------------------------------ array cache

struct CacheKey {
  std::string model_id;
  std::string dataset_id;
  std::string subject_id;  // sample id or class id
  std::string kind;

  // Throws ValidationError on empty fields or '|' / newline characters.
  std::string Canonical() const;
};

struct ArrayPayload {
  std::vector<int64_t> shape;
  std::vector<double> values;

  bool operator==(const ArrayPayload&) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::filesystem::path payload_path;
  std::string content_hash;
};

// Flat little-endian f64 arrays keyed by (model, dataset, subject, kind).
// Files carry a SHA-256 trailer; a failed check evicts the file and reports a
// miss. Writers go through a unique temp file and an atomic rename, so
// concurrent readers never observe partial files.
class ArrayCache {
 public:
  explicit ArrayCache(std::filesystem::path root);

  // Root from $FINECF_CACHE_DIR, else `fallback`.
  static ArrayCache FromEnvironment(const std::filesystem::path& fallback);

  CacheEntry Put(const CacheKey& key, const ArrayPayload& payload) const;
  std::optional<ArrayPayload> Get(const CacheKey& key) const;
  std::filesystem::path PathFor(const CacheKey& key) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

inline constexpr const char* kCacheEnvironmentVariable = "FINECF_CACHE_DIR";

}  // namespace finecf

#endif  // FINECF_DATA_HUB_H_
