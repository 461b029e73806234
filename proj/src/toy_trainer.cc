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

#include "finecf/toy_trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <vector>

#include <spdlog/spdlog.h>

#include "finecf/errors.h"
#include "finecf/hashing.h"
#include "finecf/weights_io.h"

namespace finecf {

namespace {

using nn::RowMatrix;

constexpr int kInputSize = 64;
const std::vector<double> kMean = {0.5, 0.5, 0.5};
const std::vector<double> kStddev = {0.25, 0.25, 0.25};

struct AdamState {
  std::vector<double> m, v;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate) : lr_(learning_rate) {}

  void Step(std::vector<std::vector<double>*> params,
            const std::vector<std::vector<double>>& grads) {
    if (state_.empty()) {
      for (auto* p : params) state_.push_back({std::vector<double>(p->size(), 0.0),
                                                std::vector<double>(p->size(), 0.0)});
    }
    ++step_;
    const double c1 = 1.0 - std::pow(kBeta1, step_);
    const double c2 = 1.0 - std::pow(kBeta2, step_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      auto& s = state_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[k][i];
        s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
        s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
        p[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + kEpsilon);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  double lr_;
  int step_ = 0;
  std::vector<AdamState> state_;
};

// Forward/backward state of one conv+ReLU block, reused across samples.
struct ConvBlockWork {
  RowMatrix cols;
  RowMatrix pre_activation;
  RowMatrix grad_pre;
  RowMatrix grad_cols;
  Tensor3 output;
  Tensor3 grad_input;
};

Eigen::Map<const RowMatrix> AsMatrix(const Tensor3& t) {
  return Eigen::Map<const RowMatrix>(t.data().data(), t.channels(),
                                     static_cast<Eigen::Index>(t.height()) * t.width());
}

Eigen::Map<RowMatrix> AsMatrix(Tensor3& t) {
  return Eigen::Map<RowMatrix>(t.data().data(), t.channels(),
                               static_cast<Eigen::Index>(t.height()) * t.width());
}

const Tensor3& ConvBlockForward(const nn::Conv2d& conv, const Tensor3& input,
                                ConvBlockWork* work) {
  const Shape3 out_shape = conv.OutputShape(input.shape());
  if (work->output.shape() != out_shape) work->output = Tensor3(out_shape);
  if (work->grad_input.shape() != input.shape()) work->grad_input = Tensor3(input.shape());
  nn::Im2ColInto(input, conv.kernel(), conv.stride(), conv.padding(), &work->cols);
  Eigen::Map<const RowMatrix> w(conv.weight().data(), conv.out_channels(), work->cols.rows());
  work->pre_activation.noalias() = w * work->cols;
  for (int c = 0; c < conv.out_channels(); ++c) {
    work->pre_activation.row(c).array() += conv.bias()[c];
  }
  AsMatrix(work->output) = work->pre_activation.cwiseMax(0.0);
  return work->output;
}

// Accumulates weight/bias gradients and, if requested, leaves the input
// gradient in work->grad_input.
template <typename Derived>
void ConvBlockBackward(const nn::Conv2d& conv, const Eigen::MatrixBase<Derived>& grad_output,
                       std::vector<double>* grad_weight, std::vector<double>* grad_bias,
                       bool need_input_grad, ConvBlockWork* work) {
  work->grad_pre = (work->pre_activation.array() > 0.0).select(grad_output, 0.0);
  Eigen::Map<RowMatrix> gw(grad_weight->data(), conv.out_channels(), work->cols.rows());
  gw.noalias() += work->grad_pre * work->cols.transpose();
  for (int c = 0; c < conv.out_channels(); ++c) (*grad_bias)[c] += work->grad_pre.row(c).sum();
  if (!need_input_grad) return;
  Eigen::Map<const RowMatrix> w(conv.weight().data(), conv.out_channels(), work->cols.rows());
  work->grad_cols.noalias() = w.transpose() * work->grad_pre;
  nn::Col2ImInto(work->grad_cols, conv.kernel(), conv.stride(), conv.padding(),
                 &work->grad_input);
}

}  // namespace

void ToyTrainConfig::Validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (seed == 0) throw ConfigError("seed must be positive");
}

nlohmann::json ToyTrainConfig::ToJson() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"zero_bias_head", zero_bias_head}};
}

double Accuracy(const ModelBundle& bundle, const DatasetHandle& dataset, Split split) {
  const auto& samples = dataset.split(split);
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const auto& sample : samples) {
    const ClassScores scores = PredictFromImage(bundle, LoadSample(dataset, sample).image);
    correct += scores.predicted_class == sample.label ? 1 : 0;
  }
  return static_cast<double>(correct) / samples.size();
}

ModelBundle TrainToyModel(const DatasetHandle& dataset, const ToyTrainConfig& config) {
  config.Validate();
  const int class_count = dataset.class_count();
  if (class_count < 2) throw ConfigError("toy training needs at least 2 classes");
  std::vector<int> per_class(class_count, 0);
  for (const auto& s : dataset.train) {
    if (s.label < 0 || s.label >= class_count) throw DataError("label out of range in " + s.sample_id);
    ++per_class[s.label];
  }
  const int smallest = *std::min_element(per_class.begin(), per_class.end());
  if (smallest < kToyMinTrainPerClass) {
    throw ConfigError("toy training needs >= " + std::to_string(kToyMinTrainPerClass) +
                      " train samples per class, smallest class has " + std::to_string(smallest));
  }

  Architecture arch = BuildToyArchitecture(class_count, config.zero_bias_head);
  auto& conv1 = static_cast<nn::Conv2d&>(arch.extractor->layer(0));
  auto& conv2 = static_cast<nn::Conv2d&>(arch.extractor->layer(2));
  auto& conv3 = static_cast<nn::Conv2d&>(arch.extractor->layer(4));
  auto& fc = static_cast<nn::Linear&>(arch.head->layer(1));

  std::mt19937_64 rng(config.seed);
  for (nn::Conv2d* conv : {&conv1, &conv2, &conv3}) {
    const double fan_in = conv->in_channels() * conv->kernel() * conv->kernel();
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (double& w : conv->weight()) w = normal(rng);
  }
  {
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / fc.in_features()));
    for (double& w : fc.weight()) w = normal(rng);
  }

  BundleInfo info;
  info.family = "toy";
  info.input_height = kInputSize;
  info.input_width = kInputSize;
  info.class_count = class_count;
  info.label_names = dataset.class_names;
  info.preprocess.mean = kMean;
  info.preprocess.stddev = kStddev;
  info.feature_shape = arch.extractor->OutputShape({3, kInputSize, kInputSize});
  info.model_id = "toy-untrained";
  // Borrowed only for preprocessing during training.
  const ModelBundle scratch(info, arch.extractor, arch.head);

  std::vector<Tensor3> inputs;
  std::vector<int> labels;
  inputs.reserve(dataset.train.size());
  for (const auto& sample : dataset.train) {
    inputs.push_back(scratch.PreprocessImage(LoadSample(dataset, sample).image));
    labels.push_back(sample.label);
  }

  std::vector<std::vector<double>*> params = {&conv1.weight(), &conv1.bias(), &conv2.weight(),
                                              &conv2.bias(),   &conv3.weight(), &conv3.bias(),
                                              &fc.weight()};
  if (fc.has_bias()) params.push_back(&fc.bias());
  AdamOptimizer optimizer(config.learning_rate);
  std::vector<int> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> grads;
  for (auto* p : params) grads.emplace_back(p->size(), 0.0);
  ConvBlockWork block1, block2, block3;
  RowMatrix grad_a3;
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Tensor3& x = inputs[order[b]];
        const int label = labels[order[b]];
        ConvBlockForward(conv1, x, &block1);
        ConvBlockForward(conv2, block1.output, &block2);
        const Tensor3& a3 = ConvBlockForward(conv3, block2.output, &block3);
        const Tensor3 logits_t = arch.head->Forward(a3);
        const ClassScores scores = ScoresFromLogits(logits_t.data());
        epoch_loss -= scores.LogProbability(label);

        // Softmax cross-entropy through the linear layer and global pooling.
        const auto features = AsMatrix(a3);
        const Eigen::VectorXd pooled = features.rowwise().mean();
        Eigen::VectorXd grad_logits =
            Eigen::Map<const Eigen::VectorXd>(scores.probabilities.data(), class_count);
        grad_logits[label] -= 1.0;
        grad_logits *= scale;
        Eigen::Map<RowMatrix> gfc(grads[6].data(), class_count, fc.in_features());
        gfc.noalias() += grad_logits * pooled.transpose();
        if (fc.has_bias()) {
          for (int k = 0; k < class_count; ++k) grads[7][k] += grad_logits[k];
        }
        Eigen::Map<const RowMatrix> wfc(fc.weight().data(), class_count, fc.in_features());
        const Eigen::VectorXd grad_pooled = wfc.transpose() * grad_logits / features.cols();
        grad_a3 = grad_pooled.replicate(1, features.cols());

        ConvBlockBackward(conv3, grad_a3, &grads[4], &grads[5], true, &block3);
        ConvBlockBackward(conv2, AsMatrix(block3.grad_input), &grads[2], &grads[3], true, &block2);
        ConvBlockBackward(conv1, AsMatrix(block2.grad_input), &grads[0], &grads[1], false, &block1);
      }
      optimizer.Step(params, grads);
    }
    spdlog::debug("toy epoch {} mean loss {:.4f}", epoch + 1, epoch_loss / order.size());
  }

  const std::string weights_hash = ParameterHash(scratch.Parameters());
  info.model_id = "toy-" + weights_hash.substr(0, 12);
  info.metadata = {
      {"seed", config.seed},
      {"train_config", config.ToJson()},
      {"dataset_id", dataset.dataset_id},
      {"architecture_hash", Sha256Hex(arch.extractor->Describe() + arch.head->Describe())},
      {"weights_hash", weights_hash},
      {"final_train_loss", epoch_loss / order.size()},
  };
  ModelBundle bundle(info, arch.extractor, arch.head);
  info.metadata["validation_accuracy"] = Accuracy(bundle, dataset, Split::kVal);
  return ModelBundle(std::move(info), arch.extractor, arch.head);
}

void SaveToyModel(const ModelBundle& bundle, const std::filesystem::path& dir) {
  if (bundle.info().family != "toy") throw ConfigError("SaveToyModel needs a toy bundle");
  std::filesystem::create_directories(dir);
  SaveParameters(dir / "weights.bin", bundle.Parameters());
  const auto& info = bundle.info();
  nlohmann::json metadata = info.metadata;
  metadata["model_id"] = info.model_id;
  metadata["family"] = "toy";
  metadata["class_count"] = info.class_count;
  metadata["input_size"] = {info.input_height, info.input_width};
  metadata["label_names"] = info.label_names;
  metadata["preprocess"] = {{"mean", info.preprocess.mean}, {"stddev", info.preprocess.stddev}};
  metadata["zero_bias_head"] =
      !static_cast<const nn::Linear&>(bundle.head().layer(1)).has_bias();
  const auto tmp = dir / "metadata.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << metadata.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir / "metadata.json");
}

}  // namespace finecf
