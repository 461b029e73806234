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

// A convolutional classifier split at its last convolutional layer into a
// feature extractor (image -> C x n x n feature map) and a head (feature map
// -> class scores).

#ifndef FINECF_MODEL_GATEWAY_H_
#define FINECF_MODEL_GATEWAY_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "finecf/nn.h"
#include "finecf/tensor.h"
#include "json.hpp"

namespace finecf {

enum class ScoreMode { kProbability, kLogit };

std::string ScoreModeName(ScoreMode mode);
// Accepts "probability" or "logit"; throws ConfigError otherwise.
ScoreMode ParseScoreMode(const std::string& name);

struct ClassScores {
  std::vector<double> logits;
  std::vector<double> probabilities;
  int predicted_class = 0;

  double Score(int class_index, ScoreMode mode) const;
  // log softmax(logits)[class_index], computed without forming the probability.
  double LogProbability(int class_index) const;

  bool operator==(const ClassScores&) const = default;
};

// Stable softmax; argmax ties go to the lowest index.
ClassScores ScoresFromLogits(std::span<const double> logits);

struct Preprocess {
  // Per-channel normalization applied after resizing to the input size:
  // (x - mean) / stddev.
  std::vector<double> mean = {0.0, 0.0, 0.0};
  std::vector<double> stddev = {1.0, 1.0, 1.0};
};

// Structured backbone config. `family` is one of "toy", "resnet50", "vgg16".
// `checkpoint_path` is a checkpoint file, a toy run directory, or
// "random:<seed>" for randomly initialized weights.
struct BackboneDescriptor {
  std::string family;
  std::string checkpoint_path;
  int input_height = 224;
  int input_width = 224;
  Preprocess preprocess;
  // Required for random weights; otherwise inferred from the checkpoint.
  int class_count = 0;
  std::vector<std::string> label_names;
};

BackboneDescriptor DescriptorFromJson(const nlohmann::json& j);
nlohmann::json DescriptorToJson(const BackboneDescriptor& descriptor);

struct BundleInfo {
  std::string model_id;
  std::string family;
  int input_height = 0;
  int input_width = 0;
  int input_channels = 3;
  Shape3 feature_shape;
  int class_count = 0;
  std::vector<std::string> label_names;
  Preprocess preprocess;
  // Free-form provenance (seed, accuracy, hashes).
  nlohmann::json metadata = nlohmann::json::object();
};

// Immutable after construction; every method is const and safe to call from
// several threads at once.
class ModelBundle {
 public:
  ModelBundle(BundleInfo info, std::shared_ptr<nn::Sequential> extractor,
              std::shared_ptr<nn::Sequential> head);

  const BundleInfo& info() const { return info_; }
  const std::string& model_id() const { return info_.model_id; }
  int class_count() const { return info_.class_count; }
  const Shape3& feature_shape() const { return info_.feature_shape; }

  // Resize (bilinear) and normalize an image in [0, 1] to the network input.
  Tensor3 PreprocessImage(const Image& image) const;
  FeatureMap ExtractFeatures(const Image& image, const std::string& sample_id = "") const;
  ClassScores Head(const Tensor3& features) const;
  // Whole network in one pass, bypassing the FeatureMap boundary.
  ClassScores Classify(const Image& image) const;

  const nn::Sequential& extractor() const { return *extractor_; }
  const nn::Sequential& head() const { return *head_; }
  std::vector<nn::ParameterRef> Parameters() const;

 private:
  BundleInfo info_;
  std::shared_ptr<nn::Sequential> extractor_;
  std::shared_ptr<nn::Sequential> head_;
};

// Builds the architecture for `descriptor.family` and loads its weights.
// Unknown family -> ConfigError; missing checkpoint -> IoError.
ModelBundle LoadBackbone(const BackboneDescriptor& descriptor);

// Feature shape of a family's extractor at the given input size, from a
// shape trace through the layer graph (no weights needed).
Shape3 TraceFeatureShape(const std::string& family, int input_height, int input_width);

// Throws ValidationError if h does not match the bundle's feature shape.
ClassScores PredictFromFeatures(const ModelBundle& bundle, const FeatureMap& h);
std::vector<ClassScores> PredictFromFeaturesBatch(const ModelBundle& bundle,
                                                  std::span<const FeatureMap> maps);
// Throws ValidationError if the image has the wrong channel count or is empty.
ClassScores PredictFromImage(const ModelBundle& bundle, const Image& image);
std::vector<ClassScores> PredictFromImages(const ModelBundle& bundle,
                                           std::span<const Image> images);

// Architecture builders, exposed for tests and the trainer.
struct Architecture {
  std::shared_ptr<nn::Sequential> extractor;
  std::shared_ptr<nn::Sequential> head;
};
// Three stride-2 3x3 conv+ReLU blocks (3 -> 16 -> 32 -> 32), global average
// pooling, one linear layer.
Architecture BuildToyArchitecture(int class_count, bool zero_bias_head);
// allocate = false yields a weightless graph usable only for shape traces.
Architecture BuildResNet50(int class_count, bool allocate = true);
Architecture BuildVgg16(int class_count, bool allocate = true);

}  // namespace finecf

#endif  // FINECF_MODEL_GATEWAY_H_
