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

#include "finecf/model_gateway.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <utility>

#include "finecf/errors.h"
#include "finecf/hashing.h"
#include "finecf/image_ops.h"
#include "finecf/weights_io.h"

namespace finecf {

namespace {

constexpr const char* kRandomPrefix = "random:";

bool IsRandomCheckpoint(const std::string& path) {
  return path.rfind(kRandomPrefix, 0) == 0;
}

// He-normal convolutions, uniform(+-1/sqrt(fan_in)) linear layers, identity
// batch norm.
void RandomInitialize(const std::vector<nn::ParameterRef>& params, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& p : params) {
    const bool is_weight = p.name.size() >= 7 && p.name.ends_with(".weight");
    if (p.dims.size() == 4 && is_weight) {
      const double fan_in = static_cast<double>(p.dims[1] * p.dims[2] * p.dims[3]);
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
      for (double& v : *p.values) v = normal(rng);
    } else if (p.dims.size() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(p.dims[1]));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (double& v : *p.values) v = uniform(rng);
    }
  }
}

std::vector<nn::ParameterRef> CollectAll(nn::Sequential& extractor, nn::Sequential& head) {
  std::vector<nn::ParameterRef> params;
  extractor.CollectParameters(&params);
  head.CollectParameters(&params);
  return params;
}

Architecture BuildArchitecture(const std::string& family, int class_count, bool zero_bias,
                               bool allocate = true) {
  if (family == "toy") return BuildToyArchitecture(class_count, zero_bias);
  if (family == "resnet50") return BuildResNet50(class_count, allocate);
  if (family == "vgg16") return BuildVgg16(class_count, allocate);
  throw ConfigError("unknown architecture family '" + family +
                    "' (supported: toy, resnet50, vgg16)");
}

std::string FileDigest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return Sha256Hex(bytes);
}

ModelBundle LoadToy(const BackboneDescriptor& descriptor) {
  const std::filesystem::path dir(descriptor.checkpoint_path);
  const std::filesystem::path metadata_path = dir / "metadata.json";
  std::ifstream in(metadata_path);
  if (!in) throw IoError("toy checkpoint metadata not found: " + metadata_path.string());
  nlohmann::json metadata;
  try {
    metadata = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed toy metadata " + metadata_path.string() + ": " + e.what());
  }
  BundleInfo info;
  info.family = "toy";
  info.model_id = metadata.at("model_id").get<std::string>();
  info.class_count = metadata.at("class_count").get<int>();
  info.input_height = metadata.at("input_size").at(0).get<int>();
  info.input_width = metadata.at("input_size").at(1).get<int>();
  info.label_names = metadata.at("label_names").get<std::vector<std::string>>();
  info.preprocess.mean = metadata.at("preprocess").at("mean").get<std::vector<double>>();
  info.preprocess.stddev = metadata.at("preprocess").at("stddev").get<std::vector<double>>();
  info.metadata = metadata;
  const bool zero_bias = metadata.at("zero_bias_head").get<bool>();
  Architecture arch = BuildToyArchitecture(info.class_count, zero_bias);
  LoadParameters(dir / "weights.bin", CollectAll(*arch.extractor, *arch.head));
  info.feature_shape = arch.extractor->OutputShape({3, info.input_height, info.input_width});
  return ModelBundle(std::move(info), arch.extractor, arch.head);
}

}  // namespace

std::string ScoreModeName(ScoreMode mode) {
  return mode == ScoreMode::kProbability ? "probability" : "logit";
}

ScoreMode ParseScoreMode(const std::string& name) {
  if (name == "probability") return ScoreMode::kProbability;
  if (name == "logit") return ScoreMode::kLogit;
  throw ConfigError("unknown score mode '" + name + "' (expected probability or logit)");
}

double ClassScores::Score(int class_index, ScoreMode mode) const {
  if (class_index < 0 || class_index >= static_cast<int>(logits.size())) {
    throw ValidationError("class index " + std::to_string(class_index) + " out of range");
  }
  return mode == ScoreMode::kProbability ? probabilities[class_index] : logits[class_index];
}

double ClassScores::LogProbability(int class_index) const {
  if (class_index < 0 || class_index >= static_cast<int>(logits.size())) {
    throw ValidationError("class index " + std::to_string(class_index) + " out of range");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - peak);
  return logits[class_index] - peak - std::log(sum);
}

ClassScores ScoresFromLogits(std::span<const double> logits) {
  if (logits.empty()) throw ValidationError("empty logit vector");
  ClassScores scores;
  scores.logits.assign(logits.begin(), logits.end());
  // max_element returns the first maximum, i.e. the lowest index on ties.
  const auto peak_it = std::max_element(logits.begin(), logits.end());
  scores.predicted_class = static_cast<int>(peak_it - logits.begin());
  const double peak = *peak_it;
  scores.probabilities.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scores.probabilities[i] = std::exp(logits[i] - peak);
    sum += scores.probabilities[i];
  }
  for (double& p : scores.probabilities) p /= sum;
  return scores;
}

BackboneDescriptor DescriptorFromJson(const nlohmann::json& j) {
  BackboneDescriptor d;
  try {
    d.family = j.at("family").get<std::string>();
    d.checkpoint_path = j.value("checkpoint_path", std::string());
    if (j.contains("input_size")) {
      d.input_height = j.at("input_size").at(0).get<int>();
      d.input_width = j.at("input_size").at(1).get<int>();
    }
    if (j.contains("preprocess")) {
      d.preprocess.mean = j.at("preprocess").at("mean").get<std::vector<double>>();
      d.preprocess.stddev = j.at("preprocess").at("stddev").get<std::vector<double>>();
    }
    d.class_count = j.value("class_count", 0);
    d.label_names = j.value("label_names", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed backbone descriptor: ") + e.what());
  }
  return d;
}

nlohmann::json DescriptorToJson(const BackboneDescriptor& d) {
  return {{"family", d.family},
          {"checkpoint_path", d.checkpoint_path},
          {"input_size", {d.input_height, d.input_width}},
          {"preprocess", {{"mean", d.preprocess.mean}, {"stddev", d.preprocess.stddev}}},
          {"class_count", d.class_count},
          {"label_names", d.label_names}};
}

ModelBundle::ModelBundle(BundleInfo info, std::shared_ptr<nn::Sequential> extractor,
                         std::shared_ptr<nn::Sequential> head)
    : info_(std::move(info)), extractor_(std::move(extractor)), head_(std::move(head)) {
  if (info_.class_count < 1) throw ValidationError("bundle needs a positive class count");
  if (static_cast<int>(info_.label_names.size()) != info_.class_count) {
    info_.label_names.clear();
    for (int c = 0; c < info_.class_count; ++c) {
      info_.label_names.push_back("class_" + std::to_string(c));
    }
  }
  if (head_->OutputShape(info_.feature_shape).size() !=
      static_cast<std::size_t>(info_.class_count)) {
    throw ValidationError("head output does not match class count");
  }
}

Tensor3 ModelBundle::PreprocessImage(const Image& image) const {
  if (image.channels() != info_.input_channels || image.height() < 1 || image.width() < 1) {
    throw ValidationError("image " + image.shape().ToString() + " does not match model input (" +
                          std::to_string(info_.input_channels) + " channels)");
  }
  Tensor3 x = ResizeImage(image, info_.input_height, info_.input_width);
  const auto& mean = info_.preprocess.mean;
  const auto& stddev = info_.preprocess.stddev;
  if (static_cast<int>(mean.size()) != x.channels() ||
      static_cast<int>(stddev.size()) != x.channels()) {
    throw ConfigError("preprocess constants do not match channel count");
  }
  for (int c = 0; c < x.channels(); ++c) {
    for (double& v : x.plane(c)) v = (v - mean[c]) / stddev[c];
  }
  return x;
}

FeatureMap ModelBundle::ExtractFeatures(const Image& image, const std::string& sample_id) const {
  return FeatureMap(extractor_->Forward(PreprocessImage(image)),
                    {info_.model_id, sample_id, "last_conv"});
}

ClassScores ModelBundle::Head(const Tensor3& features) const {
  const Tensor3 logits = head_->Forward(features);
  return ScoresFromLogits(logits.data());
}

ClassScores ModelBundle::Classify(const Image& image) const {
  const Tensor3 logits = head_->Forward(extractor_->Forward(PreprocessImage(image)));
  return ScoresFromLogits(logits.data());
}

std::vector<nn::ParameterRef> ModelBundle::Parameters() const {
  return CollectAll(*extractor_, *head_);
}

ModelBundle LoadBackbone(const BackboneDescriptor& descriptor) {
  if (descriptor.family == "toy") return LoadToy(descriptor);
  if (descriptor.family != "resnet50" && descriptor.family != "vgg16") {
    BuildArchitecture(descriptor.family, 1, false, false);  // throws ConfigError
  }
  BundleInfo info;
  info.family = descriptor.family;
  info.input_height = descriptor.input_height;
  info.input_width = descriptor.input_width;
  info.preprocess = descriptor.preprocess;
  info.label_names = descriptor.label_names;

  const bool random = IsRandomCheckpoint(descriptor.checkpoint_path);
  int class_count = descriptor.class_count;
  if (!random) {
    if (!std::filesystem::exists(descriptor.checkpoint_path)) {
      throw IoError("checkpoint not found: " + descriptor.checkpoint_path);
    }
    const std::string fc_name = descriptor.family == "resnet50" ? "fc.weight" : "classifier.6.weight";
    const auto dims = CheckpointTensorDims(descriptor.checkpoint_path, fc_name);
    if (dims.size() != 2) {
      throw ConfigError("checkpoint " + descriptor.checkpoint_path + " lacks " + fc_name);
    }
    class_count = static_cast<int>(dims[0]);
  }
  if (class_count < 1) throw ConfigError("class_count is required for random weights");
  info.class_count = class_count;

  Architecture arch = BuildArchitecture(descriptor.family, class_count, false);
  const auto params = CollectAll(*arch.extractor, *arch.head);
  if (random) {
    uint64_t seed = 0;
    try {
      seed = std::stoull(descriptor.checkpoint_path.substr(std::string(kRandomPrefix).size()));
    } catch (const std::exception&) {
      throw ConfigError("random checkpoint needs a numeric seed: " + descriptor.checkpoint_path);
    }
    RandomInitialize(params, seed);
    info.model_id = descriptor.family + "-random-" + std::to_string(seed);
  } else {
    LoadParameters(descriptor.checkpoint_path, params);
    info.model_id = descriptor.family + "-" + FileDigest(descriptor.checkpoint_path).substr(0, 12);
  }
  info.feature_shape = arch.extractor->OutputShape({3, info.input_height, info.input_width});
  info.metadata = {{"descriptor", DescriptorToJson(descriptor)},
                   {"architecture_hash", Sha256Hex(arch.extractor->Describe() +
                                                   arch.head->Describe())}};
  return ModelBundle(std::move(info), arch.extractor, arch.head);
}

Shape3 TraceFeatureShape(const std::string& family, int input_height, int input_width) {
  Architecture arch = BuildArchitecture(family, 2, false, /*allocate=*/false);
  return arch.extractor->OutputShape({3, input_height, input_width});
}

ClassScores PredictFromFeatures(const ModelBundle& bundle, const FeatureMap& h) {
  if (h.shape() != bundle.feature_shape()) {
    throw ValidationError("feature map " + h.shape().ToString() + " does not match model shape " +
                          bundle.feature_shape().ToString());
  }
  return bundle.Head(h.values());
}

std::vector<ClassScores> PredictFromFeaturesBatch(const ModelBundle& bundle,
                                                  std::span<const FeatureMap> maps) {
  std::vector<ClassScores> scores;
  scores.reserve(maps.size());
  for (const FeatureMap& h : maps) scores.push_back(PredictFromFeatures(bundle, h));
  return scores;
}

ClassScores PredictFromImage(const ModelBundle& bundle, const Image& image) {
  return PredictFromFeatures(bundle, bundle.ExtractFeatures(image));
}

std::vector<ClassScores> PredictFromImages(const ModelBundle& bundle,
                                           std::span<const Image> images) {
  std::vector<ClassScores> scores;
  scores.reserve(images.size());
  for (const Image& image : images) scores.push_back(PredictFromImage(bundle, image));
  return scores;
}

// ----------------------------------------------------------- architectures

Architecture BuildToyArchitecture(int class_count, bool zero_bias_head) {
  Architecture arch{std::make_shared<nn::Sequential>(), std::make_shared<nn::Sequential>()};
  arch.extractor->Emplace<nn::Conv2d>("features.0", 3, 16, 3, 2, 1, true);
  arch.extractor->Emplace<nn::ReLU>();
  arch.extractor->Emplace<nn::Conv2d>("features.2", 16, 32, 3, 2, 1, true);
  arch.extractor->Emplace<nn::ReLU>();
  arch.extractor->Emplace<nn::Conv2d>("features.4", 32, 32, 3, 2, 1, true);
  arch.extractor->Emplace<nn::ReLU>();
  arch.head->Emplace<nn::AdaptiveAvgPool2d>(1, 1);
  arch.head->Emplace<nn::Linear>("fc", 32, class_count, !zero_bias_head);
  return arch;
}

Architecture BuildResNet50(int class_count, bool allocate) {
  Architecture arch{std::make_shared<nn::Sequential>(), std::make_shared<nn::Sequential>()};
  auto& features = *arch.extractor;
  features.Emplace<nn::Conv2d>("conv1", 3, 64, 7, 2, 3, false, allocate);
  features.Emplace<nn::BatchNorm2d>("bn1", 64);
  features.Emplace<nn::ReLU>();
  features.Emplace<nn::MaxPool2d>(3, 2, 1);
  const int blocks[4] = {3, 4, 6, 3};
  const int widths[4] = {64, 128, 256, 512};
  int in_channels = 64;
  for (int stage = 0; stage < 4; ++stage) {
    for (int b = 0; b < blocks[stage]; ++b) {
      const int stride = (stage > 0 && b == 0) ? 2 : 1;
      features.Emplace<nn::Bottleneck>(
          "layer" + std::to_string(stage + 1) + "." + std::to_string(b), in_channels,
          widths[stage], stride, allocate);
      in_channels = widths[stage] * nn::Bottleneck::kExpansion;
    }
  }
  arch.head->Emplace<nn::AdaptiveAvgPool2d>(1, 1);
  arch.head->Emplace<nn::Linear>("fc", in_channels, class_count, true, allocate);
  return arch;
}

Architecture BuildVgg16(int class_count, bool allocate) {
  Architecture arch{std::make_shared<nn::Sequential>(), std::make_shared<nn::Sequential>()};
  // 0 marks a 2x2 max pool; indices follow torchvision's `features` module.
  const int config[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0,
                        512, 512, 512, 0, 512, 512, 512, 0};
  int index = 0;
  int in_channels = 3;
  const int last = static_cast<int>(std::size(config)) - 1;
  for (int i = 0; i < last; ++i) {
    if (config[i] == 0) {
      arch.extractor->Emplace<nn::MaxPool2d>(2, 2, 0);
      index += 1;
    } else {
      arch.extractor->Emplace<nn::Conv2d>("features." + std::to_string(index), in_channels,
                                          config[i], 3, 1, 1, true, allocate);
      arch.extractor->Emplace<nn::ReLU>();
      in_channels = config[i];
      index += 2;
    }
  }
  // The final pool belongs to the head so the extractor ends at the last conv.
  auto& head = *arch.head;
  head.Emplace<nn::MaxPool2d>(2, 2, 0);
  head.Emplace<nn::AdaptiveAvgPool2d>(7, 7);
  head.Emplace<nn::Flatten>();
  head.Emplace<nn::Linear>("classifier.0", 512 * 7 * 7, 4096, true, allocate);
  head.Emplace<nn::ReLU>();
  head.Emplace<nn::Linear>("classifier.3", 4096, 4096, true, allocate);
  head.Emplace<nn::ReLU>();
  head.Emplace<nn::Linear>("classifier.6", 4096, class_count, true, allocate);
  return arch;
}

}  // namespace finecf
