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

// Desk-scale trainer for the toy architecture (see BuildToyArchitecture).

#ifndef FINECF_TOY_TRAINER_H_
#define FINECF_TOY_TRAINER_H_

#include <cstdint>
#include <filesystem>

#include "finecf/data_hub.h"
#include "finecf/model_gateway.h"

namespace finecf {

struct ToyTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.003;
  uint64_t seed = 7;
  // Bias-free final layer, so logit-mode attributions are exactly linear.
  bool zero_bias_head = true;

  // Throws ConfigError unless epochs, batch size, learning rate and seed are
  // all positive.
  void Validate() const;
  nlohmann::json ToJson() const;
};

inline constexpr int kToyMinTrainPerClass = 50;

// Adam on softmax cross-entropy; single-threaded and bit-reproducible for a
// fixed config. Metadata records seed, validation accuracy, architecture and
// weights hashes. Throws ConfigError when the dataset has fewer than 2
// classes or fewer than 50 training samples in some class.
ModelBundle TrainToyModel(const DatasetHandle& dataset, const ToyTrainConfig& config);

// Writes dir/weights.bin and dir/metadata.json, loadable with
// LoadBackbone({.family = "toy", .checkpoint_path = dir}).
void SaveToyModel(const ModelBundle& bundle, const std::filesystem::path& dir);

// Fraction of `split` classified correctly.
double Accuracy(const ModelBundle& bundle, const DatasetHandle& dataset, Split split);

}  // namespace finecf

#endif  // FINECF_TOY_TRAINER_H_
