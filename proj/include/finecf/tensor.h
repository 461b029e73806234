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

#ifndef FINECF_TENSOR_H_
#define FINECF_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace finecf {

// Row-major dense matrix used for every 2-D map (Shapley maps, kernels,
// saliency maps).
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape3&) const = default;
  std::string ToString() const;
};

// Dense channels x height x width block of doubles, channel-major.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape, double fill = 0.0);
  Tensor3(Shape3 shape, std::vector<double> values);

  const Shape3& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  bool operator==(const Tensor3&) const = default;

 private:
  Shape3 shape_;
  // Packet-aligned so vectorized reductions sum in the same order every run.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

// Image tensors hold channels x H x W values in [0, 1] before preprocessing.
using Image = Tensor3;

struct GridCoord {
  int row = 0;
  int col = 0;

  auto operator<=>(const GridCoord&) const = default;
};

struct FeatureProvenance {
  std::string model_id;
  std::string sample_id;
  std::string layer;
};

// C x n x n block of last-conv activations. A "feature column" is the
// C-vector at one spatial location.
class FeatureMap {
 public:
  FeatureMap() = default;
  // Throws ValidationError unless the tensor is spatially square and
  // non-empty.
  explicit FeatureMap(Tensor3 values, FeatureProvenance provenance = {});

  const Tensor3& values() const { return values_; }
  Tensor3& mutable_values() { return values_; }
  const FeatureProvenance& provenance() const { return provenance_; }
  FeatureProvenance& mutable_provenance() { return provenance_; }

  int channels() const { return values_.channels(); }
  int side() const { return values_.height(); }
  const Shape3& shape() const { return values_.shape(); }

  std::vector<double> Column(GridCoord at) const;
  void SetColumn(GridCoord at, std::span<const double> column);

 private:
  Tensor3 values_;
  FeatureProvenance provenance_;
};

}  // namespace finecf

#endif  // FINECF_TENSOR_H_
