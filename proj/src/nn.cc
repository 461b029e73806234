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

#include "finecf/nn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "finecf/errors.h"

namespace finecf::nn {

namespace {

void RequireChannels(const Shape3& input, int expected, const std::string& who) {
  if (input.channels != expected) {
    throw ValidationError(who + " expects " + std::to_string(expected) +
                          " input channels, got " + input.ToString());
  }
}

}  // namespace

int ConvOutputSize(int input, int kernel, int stride, int padding) {
  return (input + 2 * padding - kernel) / stride + 1;
}

RowMatrix Im2Col(const Tensor3& input, int kernel, int stride, int padding) {
  RowMatrix cols;
  Im2ColInto(input, kernel, stride, padding, &cols);
  return cols;
}

void Im2ColInto(const Tensor3& input, int kernel, int stride, int padding, RowMatrix* cols) {
  const int channels = input.channels();
  const int height = input.height();
  const int width = input.width();
  const int out_h = ConvOutputSize(height, kernel, stride, padding);
  const int out_w = ConvOutputSize(width, kernel, stride, padding);
  cols->resize(static_cast<Eigen::Index>(channels) * kernel * kernel,
               static_cast<Eigen::Index>(out_h) * out_w);
  cols->setZero();
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = cols->row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride - padding + ky;
          if (y < 0 || y >= height) continue;
          const double* src = &input.data()[(static_cast<std::size_t>(c) * height + y) * width];
          double* dst = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride - padding + kx;
            if (x >= 0 && x < width) dst[ox] = src[x];
          }
        }
      }
    }
  }
}

Tensor3 Col2Im(const RowMatrix& cols, const Shape3& input_shape, int kernel,
               int stride, int padding) {
  Tensor3 output(input_shape);
  Col2ImInto(cols, kernel, stride, padding, &output);
  return output;
}

void Col2ImInto(const RowMatrix& cols, int kernel, int stride, int padding, Tensor3* output) {
  const Shape3 shape = output->shape();
  std::fill(output->data().begin(), output->data().end(), 0.0);
  const int out_h = ConvOutputSize(shape.height, kernel, stride, padding);
  const int out_w = ConvOutputSize(shape.width, kernel, stride, padding);
  for (int c = 0; c < shape.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row = cols.row((c * kernel + ky) * kernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int y = oy * stride - padding + ky;
          if (y < 0 || y >= shape.height) continue;
          double* dst = &output->data()[(static_cast<std::size_t>(c) * shape.height + y) * shape.width];
          const double* src = row + oy * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int x = ox * stride - padding + kx;
            if (x >= 0 && x < shape.width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel,
               int stride, int padding, bool bias, bool allocate)
    : name_(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias),
      weight_(allocate ? static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel
                       : 0,
              0.0),
      bias_(bias && allocate ? out_channels : 0, 0.0) {}

Shape3 Conv2d::OutputShape(const Shape3& input) const {
  RequireChannels(input, in_channels_, "conv " + name_);
  const int out_h = ConvOutputSize(input.height, kernel_, stride_, padding_);
  const int out_w = ConvOutputSize(input.width, kernel_, stride_, padding_);
  if (out_h < 1 || out_w < 1) {
    throw ValidationError("conv " + name_ + " input too small: " + input.ToString());
  }
  return {out_channels_, out_h, out_w};
}

Tensor3 Conv2d::Forward(const Tensor3& input) const {
  const Shape3 out_shape = OutputShape(input.shape());
  const Eigen::Index spatial = static_cast<Eigen::Index>(out_shape.height) * out_shape.width;
  Eigen::Map<const RowMatrix> w(weight_.data(), out_channels_,
                                static_cast<Eigen::Index>(in_channels_) * kernel_ * kernel_);
  Tensor3 output(out_shape);
  Eigen::Map<RowMatrix> out(output.data().data(), out_channels_, spatial);
  if (kernel_ == 1 && stride_ == 1 && padding_ == 0) {
    Eigen::Map<const RowMatrix> in(input.data().data(), in_channels_, spatial);
    out.noalias() = w * in;
  } else {
    const RowMatrix cols = Im2Col(input, kernel_, stride_, padding_);
    out.noalias() = w * cols;
  }
  if (has_bias_) {
    for (int c = 0; c < out_channels_; ++c) out.row(c).array() += bias_[c];
  }
  return output;
}

std::string Conv2d::Describe() const {
  std::ostringstream s;
  s << "conv(" << in_channels_ << "," << out_channels_ << ",k" << kernel_ << ",s"
    << stride_ << ",p" << padding_ << (has_bias_ ? ",bias" : "") << ")";
  return s.str();
}

void Conv2d::CollectParameters(std::vector<ParameterRef>* out) {
  out->push_back({name_ + ".weight", {out_channels_, in_channels_, kernel_, kernel_}, &weight_});
  if (has_bias_) out->push_back({name_ + ".bias", {out_channels_}, &bias_});
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, double epsilon)
    : name_(std::move(name)),
      channels_(channels),
      epsilon_(epsilon),
      gamma_(channels, 1.0),
      beta_(channels, 0.0),
      mean_(channels, 0.0),
      var_(channels, 1.0) {}

Tensor3 BatchNorm2d::Forward(const Tensor3& input) const {
  RequireChannels(input.shape(), channels_, "batchnorm " + name_);
  Tensor3 output = input;
  for (int c = 0; c < channels_; ++c) {
    const double scale = gamma_[c] / std::sqrt(var_[c] + epsilon_);
    const double shift = beta_[c] - mean_[c] * scale;
    for (double& v : output.plane(c)) v = v * scale + shift;
  }
  return output;
}

std::string BatchNorm2d::Describe() const {
  return "bn(" + std::to_string(channels_) + ")";
}

void BatchNorm2d::CollectParameters(std::vector<ParameterRef>* out) {
  out->push_back({name_ + ".weight", {channels_}, &gamma_});
  out->push_back({name_ + ".bias", {channels_}, &beta_});
  out->push_back({name_ + ".running_mean", {channels_}, &mean_});
  out->push_back({name_ + ".running_var", {channels_}, &var_});
}

// -------------------------------------------------------- simple layers

Tensor3 ReLU::Forward(const Tensor3& input) const {
  Tensor3 output = input;
  for (double& v : output.data()) v = std::max(v, 0.0);
  return output;
}

Shape3 MaxPool2d::OutputShape(const Shape3& input) const {
  return {input.channels, ConvOutputSize(input.height, kernel_, stride_, padding_),
          ConvOutputSize(input.width, kernel_, stride_, padding_)};
}

Tensor3 MaxPool2d::Forward(const Tensor3& input) const {
  const Shape3 out_shape = OutputShape(input.shape());
  Tensor3 output(out_shape, -std::numeric_limits<double>::infinity());
  for (int c = 0; c < out_shape.channels; ++c) {
    for (int oy = 0; oy < out_shape.height; ++oy) {
      for (int ox = 0; ox < out_shape.width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        for (int ky = 0; ky < kernel_; ++ky) {
          const int y = oy * stride_ - padding_ + ky;
          if (y < 0 || y >= input.height()) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int x = ox * stride_ - padding_ + kx;
            if (x < 0 || x >= input.width()) continue;
            best = std::max(best, input.at(c, y, x));
          }
        }
        output.at(c, oy, ox) = best;
      }
    }
  }
  return output;
}

std::string MaxPool2d::Describe() const {
  return "maxpool(k" + std::to_string(kernel_) + ",s" + std::to_string(stride_) +
         ",p" + std::to_string(padding_) + ")";
}

Shape3 AdaptiveAvgPool2d::OutputShape(const Shape3& input) const {
  return {input.channels, out_height_, out_width_};
}

Tensor3 AdaptiveAvgPool2d::Forward(const Tensor3& input) const {
  Tensor3 output(OutputShape(input.shape()));
  const int in_h = input.height();
  const int in_w = input.width();
  for (int c = 0; c < input.channels(); ++c) {
    for (int oy = 0; oy < out_height_; ++oy) {
      const int y0 = (oy * in_h) / out_height_;
      const int y1 = ((oy + 1) * in_h + out_height_ - 1) / out_height_;
      for (int ox = 0; ox < out_width_; ++ox) {
        const int x0 = (ox * in_w) / out_width_;
        const int x1 = ((ox + 1) * in_w + out_width_ - 1) / out_width_;
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += input.at(c, y, x);
        }
        output.at(c, oy, ox) = sum / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  return output;
}

std::string AdaptiveAvgPool2d::Describe() const {
  return "adaptive_avgpool(" + std::to_string(out_height_) + "," +
         std::to_string(out_width_) + ")";
}

Tensor3 Flatten::Forward(const Tensor3& input) const {
  return Tensor3(OutputShape(input.shape()),
                 std::vector<double>(input.data().begin(), input.data().end()));
}

Shape3 Flatten::OutputShape(const Shape3& input) const {
  return {static_cast<int>(input.size()), 1, 1};
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, int in_features, int out_features, bool bias,
               bool allocate)
    : name_(std::move(name)),
      in_features_(in_features),
      out_features_(out_features),
      has_bias_(bias),
      weight_(allocate ? static_cast<std::size_t>(out_features) * in_features : 0, 0.0),
      bias_(bias && allocate ? out_features : 0, 0.0) {}

Shape3 Linear::OutputShape(const Shape3& input) const {
  if (static_cast<int>(input.size()) != in_features_) {
    throw ValidationError("linear " + name_ + " expects " + std::to_string(in_features_) +
                          " features, got " + input.ToString());
  }
  return {out_features_, 1, 1};
}

Tensor3 Linear::Forward(const Tensor3& input) const {
  Tensor3 output(OutputShape(input.shape()));
  Eigen::Map<const RowMatrix> w(weight_.data(), out_features_, in_features_);
  Eigen::Map<const Eigen::VectorXd> x(input.data().data(), in_features_);
  Eigen::Map<Eigen::VectorXd> y(output.data().data(), out_features_);
  y.noalias() = w * x;
  if (has_bias_) {
    for (int o = 0; o < out_features_; ++o) y[o] += bias_[o];
  }
  return output;
}

std::string Linear::Describe() const {
  return "linear(" + std::to_string(in_features_) + "," + std::to_string(out_features_) +
         (has_bias_ ? ",bias" : "") + ")";
}

void Linear::CollectParameters(std::vector<ParameterRef>* out) {
  out->push_back({name_ + ".weight", {out_features_, in_features_}, &weight_});
  if (has_bias_) out->push_back({name_ + ".bias", {out_features_}, &bias_});
}

// ------------------------------------------------------------ Bottleneck

Bottleneck::Bottleneck(const std::string& name, int in_channels, int width, int stride,
                       bool allocate)
    : conv1_(name + ".conv1", in_channels, width, 1, 1, 0, false, allocate),
      conv2_(name + ".conv2", width, width, 3, stride, 1, false, allocate),
      conv3_(name + ".conv3", width, width * kExpansion, 1, 1, 0, false, allocate),
      bn1_(name + ".bn1", width),
      bn2_(name + ".bn2", width),
      bn3_(name + ".bn3", width * kExpansion) {
  if (stride != 1 || in_channels != width * kExpansion) {
    downsample_conv_ = std::make_unique<Conv2d>(name + ".downsample.0", in_channels,
                                                width * kExpansion, 1, stride, 0, false,
                                                allocate);
    downsample_bn_ = std::make_unique<BatchNorm2d>(name + ".downsample.1", width * kExpansion);
  }
}

Tensor3 Bottleneck::Forward(const Tensor3& input) const {
  static const ReLU relu;
  Tensor3 out = relu.Forward(bn1_.Forward(conv1_.Forward(input)));
  out = relu.Forward(bn2_.Forward(conv2_.Forward(out)));
  out = bn3_.Forward(conv3_.Forward(out));
  const Tensor3 identity =
      downsample_conv_ ? downsample_bn_->Forward(downsample_conv_->Forward(input)) : input;
  auto dst = out.data();
  auto src = identity.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i] + src[i], 0.0);
  return out;
}

Shape3 Bottleneck::OutputShape(const Shape3& input) const {
  return conv3_.OutputShape(conv2_.OutputShape(conv1_.OutputShape(input)));
}

std::string Bottleneck::Describe() const {
  return "bottleneck[" + conv1_.Describe() + conv2_.Describe() + conv3_.Describe() +
         (downsample_conv_ ? downsample_conv_->Describe() : std::string()) + "]";
}

void Bottleneck::CollectParameters(std::vector<ParameterRef>* out) {
  conv1_.CollectParameters(out);
  bn1_.CollectParameters(out);
  conv2_.CollectParameters(out);
  bn2_.CollectParameters(out);
  conv3_.CollectParameters(out);
  bn3_.CollectParameters(out);
  if (downsample_conv_) {
    downsample_conv_->CollectParameters(out);
    downsample_bn_->CollectParameters(out);
  }
}

// ------------------------------------------------------------ Sequential

Tensor3 Sequential::Forward(const Tensor3& input) const {
  Tensor3 x = input;
  for (const auto& layer : layers_) x = layer->Forward(x);
  return x;
}

Shape3 Sequential::OutputShape(const Shape3& input) const {
  Shape3 shape = input;
  for (const auto& layer : layers_) shape = layer->OutputShape(shape);
  return shape;
}

std::string Sequential::Describe() const {
  std::string description = "seq[";
  for (const auto& layer : layers_) description += layer->Describe() + ";";
  return description + "]";
}

void Sequential::CollectParameters(std::vector<ParameterRef>* out) {
  for (auto& layer : layers_) layer->CollectParameters(out);
}

}  // namespace finecf::nn
