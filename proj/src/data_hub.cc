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

#include "finecf/data_hub.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "finecf/errors.h"
#include "finecf/hashing.h"
#include "finecf/image_ops.h"
#include "synthetic_shapes.h"

namespace finecf {

namespace {

std::vector<std::string> ReadLines(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("missing " + what + " file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string FileHash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream content;
  content << in.rdbuf();
  return Sha256Hex(content.str());
}

void CheckDisjoint(const DatasetHandle& handle) {
  std::set<std::string> train_ids;
  for (const auto& s : handle.train) {
    if (!train_ids.insert(s.sample_id).second) {
      throw DataError("duplicate sample id " + s.sample_id);
    }
  }
  std::set<std::string> val_ids;
  for (const auto& s : handle.val) {
    if (train_ids.count(s.sample_id) || !val_ids.insert(s.sample_id).second) {
      throw DataError("sample id " + s.sample_id + " appears in more than one split");
    }
  }
}

// "001.Black_footed_Albatross/..." -> 0.
int CubLabelFromPath(const std::string& path) {
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0) throw DataError("cannot derive class from " + path);
  try {
    return std::stoi(path.substr(0, dot)) - 1;
  } catch (const std::exception&) {
    throw DataError("cannot derive class from " + path);
  }
}

DatasetHandle LoadCub(const std::filesystem::path& root) {
  DatasetHandle handle;
  handle.layout = "cub";
  handle.root = root;
  const auto images = ReadLines(root / "images.txt", "CUB index");
  const auto split_lines = ReadLines(root / "train_test_split.txt", "CUB split");
  std::map<std::string, std::string> paths;
  std::vector<std::string> order;
  for (const auto& line : images) {
    std::istringstream row(line);
    std::string id, path;
    if (!(row >> id >> path)) throw DataError("malformed line in images.txt: " + line);
    paths[id] = path;
    order.push_back(id);
  }
  std::map<std::string, bool> is_train;
  for (const auto& line : split_lines) {
    std::istringstream row(line);
    std::string id;
    int flag = 0;
    if (!(row >> id >> flag)) throw DataError("malformed line in train_test_split.txt: " + line);
    is_train[id] = flag == 1;
  }
  std::map<std::string, int> labels;
  if (std::filesystem::exists(root / "image_class_labels.txt")) {
    for (const auto& line : ReadLines(root / "image_class_labels.txt", "CUB label")) {
      std::istringstream row(line);
      std::string id;
      int label = 0;
      if (!(row >> id >> label)) throw DataError("malformed line in image_class_labels.txt");
      labels[id] = label - 1;
    }
  }
  int max_label = -1;
  for (const auto& id : order) {
    auto split_it = is_train.find(id);
    if (split_it == is_train.end()) throw DataError("image " + id + " missing from split file");
    const int label = labels.count(id) ? labels[id] : CubLabelFromPath(paths[id]);
    max_label = std::max(max_label, label);
    SampleRef ref{"cub-" + id, paths[id], label};
    (split_it->second ? handle.train : handle.val).push_back(std::move(ref));
  }
  if (std::filesystem::exists(root / "classes.txt")) {
    for (const auto& line : ReadLines(root / "classes.txt", "CUB class list")) {
      std::istringstream row(line);
      std::string id, name;
      row >> id >> name;
      handle.class_names.push_back(name);
    }
  }
  if (static_cast<int>(handle.class_names.size()) <= max_label) {
    handle.class_names.clear();
    for (int c = 0; c <= max_label; ++c) handle.class_names.push_back("class_" + std::to_string(c));
  }
  const auto parts_path = root / "parts" / "part_locs.txt";
  if (std::filesystem::exists(parts_path)) {
    for (const auto& line : ReadLines(parts_path, "CUB part")) {
      std::istringstream row(line);
      std::string id;
      Keypoint kp;
      int visible = 0;
      if (!(row >> id >> kp.part_id >> kp.x >> kp.y >> visible)) {
        throw DataError("malformed line in part_locs.txt: " + line);
      }
      kp.visible = visible == 1;
      handle.part_annotations["cub-" + id].push_back(kp);
    }
  }
  handle.dataset_id = "cub200-" + FileHash(root / "images.txt").substr(0, 12);
  return handle;
}

DatasetHandle LoadStanfordDogs(const std::filesystem::path& root) {
  DatasetHandle handle;
  handle.layout = "stanford_dogs";
  handle.root = root;
  const auto train_lines = ReadLines(root / "train_list.txt", "Stanford Dogs train list");
  const auto test_lines = ReadLines(root / "test_list.txt", "Stanford Dogs test list");
  auto path_of = [](const std::string& line) {
    std::istringstream row(line);
    std::string path;
    row >> path;
    return path;
  };
  auto folder_of = [](const std::string& path) {
    const auto slash = path.find('/');
    if (slash == std::string::npos) throw DataError("list entry lacks a class folder: " + path);
    return path.substr(0, slash);
  };
  std::set<std::string> folders;
  for (const auto& line : train_lines) folders.insert(folder_of(path_of(line)));
  for (const auto& line : test_lines) folders.insert(folder_of(path_of(line)));
  std::map<std::string, int> label_of;
  for (const auto& folder : folders) {
    label_of[folder] = static_cast<int>(handle.class_names.size());
    const auto dash = folder.find('-');
    handle.class_names.push_back(dash == std::string::npos ? folder : folder.substr(dash + 1));
  }
  for (const auto& line : train_lines) {
    const std::string path = path_of(line);
    handle.train.push_back({"dogs:" + path, path, label_of[folder_of(path)]});
  }
  for (const auto& line : test_lines) {
    const std::string path = path_of(line);
    handle.val.push_back({"dogs:" + path, path, label_of[folder_of(path)]});
  }
  handle.dataset_id = "dogs-" + FileHash(root / "train_list.txt").substr(0, 12);
  return handle;
}

std::vector<Keypoint> ScaleKeypoints(std::vector<Keypoint> keypoints, double sx, double sy) {
  for (auto& kp : keypoints) {
    kp.x *= sx;
    kp.y *= sy;
  }
  return keypoints;
}

}  // namespace

std::string SplitName(Split split) { return split == Split::kTrain ? "train" : "val"; }

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "test") return Split::kVal;
  throw ConfigError("unknown split '" + name + "' (expected train or val)");
}

nlohmann::json SyntheticConfig::ToJson() const {
  return {{"class_count", class_count},
          {"train_per_class", train_per_class},
          {"val_per_class", val_per_class},
          {"image_size", image_size},
          {"distractor_probability", distractor_probability},
          {"distractor_fade", distractor_fade},
          {"noise_sigma", noise_sigma}};
}

SyntheticConfig SyntheticConfig::FromJson(const nlohmann::json& j) {
  SyntheticConfig c;
  c.class_count = j.at("class_count").get<int>();
  c.train_per_class = j.at("train_per_class").get<int>();
  c.val_per_class = j.at("val_per_class").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.distractor_probability = j.at("distractor_probability").get<double>();
  c.distractor_fade = j.at("distractor_fade").get<double>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  return c;
}

const SampleRef& DatasetHandle::Find(const std::string& sample_id) const {
  for (const auto* list : {&train, &val}) {
    for (const auto& s : *list) {
      if (s.sample_id == sample_id) return s;
    }
  }
  throw DataError("unknown sample id '" + sample_id + "' in dataset " + dataset_id);
}

DatasetHandle GenerateSynthetic(const SyntheticConfig& config, uint64_t seed) {
  if (config.class_count < 2 || config.class_count > kMaxSyntheticClasses) {
    throw ConfigError("synthetic class count must be in [2, " +
                      std::to_string(kMaxSyntheticClasses) + "], got " +
                      std::to_string(config.class_count));
  }
  if (config.train_per_class < 0 || config.val_per_class < 0 || config.image_size < 16) {
    throw ConfigError("synthetic sample counts must be >= 0 and image size >= 16");
  }
  DatasetHandle handle;
  handle.layout = "synthetic";
  handle.synthetic = config;
  handle.seed = seed;
  handle.dataset_id =
      "synthetic-" + Sha256Hex(config.ToJson().dump() + "/" + std::to_string(seed)).substr(0, 12);
  static const char* kNames[kMaxSyntheticClasses] = {"square", "disk",  "triangle", "plus",
                                                     "cross",  "hbar", "vbar",     "ring"};
  for (int c = 0; c < config.class_count; ++c) handle.class_names.push_back(kNames[c]);
  for (Split split : {Split::kTrain, Split::kVal}) {
    const int count = config.class_count *
                      (split == Split::kTrain ? config.train_per_class : config.val_per_class);
    auto& list = split == Split::kTrain ? handle.train : handle.val;
    for (int i = 0; i < count; ++i) {
      const synthetic::Placement p = synthetic::Place(config, seed, split, i);
      SampleRef ref{SplitName(split) + "-" + std::to_string(i), synthetic::SampleKey(split, i),
                    p.label};
      handle.part_annotations[ref.sample_id] = synthetic::Keypoints(p);
      handle.part_regions[ref.sample_id] = synthetic::PartRegion(p);
      list.push_back(std::move(ref));
    }
  }
  return handle;
}

void WriteSyntheticManifest(const DatasetHandle& handle, const std::filesystem::path& dir) {
  if (!handle.synthetic) throw ConfigError("not a synthetic dataset");
  std::filesystem::create_directories(dir);
  const nlohmann::json manifest = {
      {"kind", "synthetic"},
      {"dataset_id", handle.dataset_id},
      {"seed", handle.seed},
      {"config", handle.synthetic->ToJson()},
      {"config_hash", Sha256Hex(handle.synthetic->ToJson().dump())},
  };
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << manifest.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

DatasetHandle LoadFineGrained(const std::filesystem::path& root, FineGrainedLayout layout) {
  DatasetHandle handle =
      layout == FineGrainedLayout::kCub ? LoadCub(root) : LoadStanfordDogs(root);
  CheckDisjoint(handle);
  return handle;
}

DatasetHandle OpenDataset(const std::filesystem::path& root) {
  if (std::filesystem::exists(root / "manifest.json")) {
    std::ifstream in(root / "manifest.json");
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed dataset manifest in " + root.string() + ": " + e.what());
    }
    const SyntheticConfig config = SyntheticConfig::FromJson(manifest.at("config"));
    if (manifest.at("config_hash").get<std::string>() != Sha256Hex(config.ToJson().dump())) {
      throw DataError("dataset manifest hash mismatch in " + root.string());
    }
    DatasetHandle handle = GenerateSynthetic(config, manifest.at("seed").get<uint64_t>());
    handle.root = root;
    return handle;
  }
  if (std::filesystem::exists(root / "images.txt")) {
    return LoadFineGrained(root, FineGrainedLayout::kCub);
  }
  if (std::filesystem::exists(root / "train_list.txt")) {
    return LoadFineGrained(root, FineGrainedLayout::kStanfordDogs);
  }
  throw IoError("no dataset found at " + root.string() +
                " (expected manifest.json, images.txt or train_list.txt)");
}

LoadedSample LoadSample(const DatasetHandle& handle, const SampleRef& sample, int height,
                        int width) {
  LoadedSample loaded;
  if (handle.layout == "synthetic") {
    Split split;
    int index = 0;
    synthetic::ParseSampleKey(sample.source, &split, &index);
    const synthetic::Placement p = synthetic::Place(*handle.synthetic, handle.seed, split, index);
    loaded.image = synthetic::Render(*handle.synthetic, p);
    loaded.keypoints = synthetic::Keypoints(p);
    loaded.part_region = synthetic::PartRegion(p);
  } else {
    const std::string folder = handle.layout == "cub" ? "images" : "Images";
    loaded.image = ReadImageFile(handle.root / folder / sample.source);
    auto it = handle.part_annotations.find(sample.sample_id);
    if (it != handle.part_annotations.end()) loaded.keypoints = it->second;
  }
  if (height > 0 && width > 0 &&
      (height != loaded.image.height() || width != loaded.image.width())) {
    const double sx = static_cast<double>(width) / loaded.image.width();
    const double sy = static_cast<double>(height) / loaded.image.height();
    loaded.keypoints = ScaleKeypoints(std::move(loaded.keypoints), sx, sy);
    if (loaded.part_region) {
      auto& r = *loaded.part_region;
      r = {r.x0 * sx, r.y0 * sy, r.x1 * sx, r.y1 * sy};
    }
    loaded.image = ResizeImage(loaded.image, height, width);
  }
  return loaded;
}

std::vector<MisclassifiedSample> MineMisclassified(const ModelBundle& bundle,
                                                   const DatasetHandle& handle, Split split) {
  std::vector<MisclassifiedSample> mined;
  for (const SampleRef& sample : handle.split(split)) {
    const LoadedSample loaded = LoadSample(handle, sample);
    const ClassScores scores = PredictFromImage(bundle, loaded.image);
    if (scores.predicted_class != sample.label) {
      mined.push_back({sample.sample_id, sample.source, sample.label, scores.predicted_class,
                       scores.probabilities[scores.predicted_class]});
    }
  }
  return mined;
}

}  // namespace finecf
