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

#include "finecf/tensor.h"

#include <sstream>
#include <utility>

#include "finecf/errors.h"

namespace finecf {

std::string Shape3::ToString() const {
  std::ostringstream out;
  out << "(" << channels << ", " << height << ", " << width << ")";
  return out.str();
}

Tensor3::Tensor3(Shape3 shape, double fill)
    : shape_(shape), data_(shape.size(), fill) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw ValidationError("negative tensor dimension " + shape.ToString());
  }
}

Tensor3::Tensor3(Shape3 shape, std::vector<double> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape.size()) {
    throw ValidationError("tensor of shape " + shape.ToString() + " needs " +
                          std::to_string(shape.size()) + " values, got " +
                          std::to_string(data_.size()));
  }
}

std::span<double> Tensor3::plane(int c) {
  const std::size_t area = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<double>(data_).subspan(c * area, area);
}

std::span<const double> Tensor3::plane(int c) const {
  const std::size_t area = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<const double>(data_).subspan(c * area, area);
}

FeatureMap::FeatureMap(Tensor3 values, FeatureProvenance provenance)
    : values_(std::move(values)), provenance_(std::move(provenance)) {
  const Shape3& s = values_.shape();
  if (s.channels < 1 || s.height < 1 || s.height != s.width) {
    throw ValidationError("feature map must be C x n x n with C, n >= 1, got " +
                          s.ToString());
  }
}

std::vector<double> FeatureMap::Column(GridCoord at) const {
  if (at.row < 0 || at.col < 0 || at.row >= side() || at.col >= side()) {
    throw ValidationError("feature column index out of range");
  }
  std::vector<double> column(channels());
  for (int c = 0; c < channels(); ++c) column[c] = values_.at(c, at.row, at.col);
  return column;
}

void FeatureMap::SetColumn(GridCoord at, std::span<const double> column) {
  if (at.row < 0 || at.col < 0 || at.row >= side() || at.col >= side()) {
    throw ValidationError("feature column index out of range");
  }
  if (static_cast<int>(column.size()) != channels()) {
    throw ValidationError("feature column has " + std::to_string(column.size()) +
                          " channels, map has " + std::to_string(channels()));
  }
  for (int c = 0; c < channels(); ++c) values_.at(c, at.row, at.col) = column[c];
}

}  // namespace finecf
