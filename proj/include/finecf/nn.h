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

// Minimal inference layers for the supported backbones. Parameter names
// follow the torchvision state_dict convention so exported checkpoints load
// without renaming.

#ifndef FINECF_NN_H_
#define FINECF_NN_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "finecf/tensor.h"

namespace finecf::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ParameterRef {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<double>* values = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor3 Forward(const Tensor3& input) const = 0;
  virtual Shape3 OutputShape(const Shape3& input) const = 0;
  // One-line architecture description; hashed into checkpoint metadata.
  virtual std::string Describe() const = 0;
  virtual void CollectParameters(std::vector<ParameterRef>* out) { (void)out; }
};

// Unfolds (C, H, W) into a (C*k*k, Ho*Wo) patch matrix; out-of-bounds taps are 0.
RowMatrix Im2Col(const Tensor3& input, int kernel, int stride, int padding);
// Same, writing into `cols` (resized as needed) to avoid reallocation.
void Im2ColInto(const Tensor3& input, int kernel, int stride, int padding, RowMatrix* cols);
// Adjoint of Im2Col: scatters-adds patch gradients back to (C, H, W).
Tensor3 Col2Im(const RowMatrix& cols, const Shape3& input_shape, int kernel,
               int stride, int padding);
void Col2ImInto(const RowMatrix& cols, int kernel, int stride, int padding, Tensor3* output);
int ConvOutputSize(int input, int kernel, int stride, int padding);

class Conv2d : public Layer {
 public:
  // allocate = false builds a shape-only layer (for shape traces).
  Conv2d(std::string name, int in_channels, int out_channels, int kernel,
         int stride, int padding, bool bias, bool allocate = true);

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;
  void CollectParameters(std::vector<ParameterRef>* out) override;

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }
  bool has_bias() const { return has_bias_; }
  // (out, in, k, k) row-major.
  std::vector<double>& weight() { return weight_; }
  const std::vector<double>& weight() const { return weight_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

 private:
  std::string name_;
  int in_channels_, out_channels_, kernel_, stride_, padding_;
  bool has_bias_;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

// Inference-mode batch normalization with running statistics.
class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, double epsilon = 1e-5);

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override { return input; }
  std::string Describe() const override;
  void CollectParameters(std::vector<ParameterRef>* out) override;

  std::vector<double>& gamma() { return gamma_; }
  std::vector<double>& beta() { return beta_; }
  std::vector<double>& running_mean() { return mean_; }
  std::vector<double>& running_var() { return var_; }

 private:
  std::string name_;
  int channels_;
  double epsilon_;
  std::vector<double> gamma_, beta_, mean_, var_;
};

class ReLU : public Layer {
 public:
  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override { return input; }
  std::string Describe() const override { return "relu"; }
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int padding)
      : kernel_(kernel), stride_(stride), padding_(padding) {}

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;

 private:
  int kernel_, stride_, padding_;
};

// torchvision AdaptiveAvgPool2d bin rule: [floor(i*in/out), ceil((i+1)*in/out)).
class AdaptiveAvgPool2d : public Layer {
 public:
  AdaptiveAvgPool2d(int out_height, int out_width)
      : out_height_(out_height), out_width_(out_width) {}

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;

 private:
  int out_height_, out_width_;
};

// (C, H, W) -> (C*H*W, 1, 1), channel-major order.
class Flatten : public Layer {
 public:
  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override { return "flatten"; }
};

// Acts on any tensor with in_features elements; returns (out, 1, 1).
class Linear : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, bool bias,
         bool allocate = true);

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;
  void CollectParameters(std::vector<ParameterRef>* out) override;

  int in_features() const { return in_features_; }
  int out_features() const { return out_features_; }
  bool has_bias() const { return has_bias_; }
  // (out, in) row-major.
  std::vector<double>& weight() { return weight_; }
  const std::vector<double>& weight() const { return weight_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

 private:
  std::string name_;
  int in_features_, out_features_;
  bool has_bias_;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

// ResNet v1.5 bottleneck: the stride sits on the 3x3 convolution.
class Bottleneck : public Layer {
 public:
  Bottleneck(const std::string& name, int in_channels, int width, int stride,
             bool allocate = true);

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;
  void CollectParameters(std::vector<ParameterRef>* out) override;

  static constexpr int kExpansion = 4;

 private:
  Conv2d conv1_, conv2_, conv3_;
  BatchNorm2d bn1_, bn2_, bn3_;
  std::unique_ptr<Conv2d> downsample_conv_;
  std::unique_ptr<BatchNorm2d> downsample_bn_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& Emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void Append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor3 Forward(const Tensor3& input) const override;
  Shape3 OutputShape(const Shape3& input) const override;
  std::string Describe() const override;
  void CollectParameters(std::vector<ParameterRef>* out) override;

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace finecf::nn

#endif  // FINECF_NN_H_
