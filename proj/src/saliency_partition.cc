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

#include "finecf/saliency_partition.h"

#include <algorithm>
#include <cmath>

#include "finecf/errors.h"

namespace finecf {

GaussianKernelBank BuildKernelBank(int n, double sigma) {
  if (n < 1) throw ValidationError("kernel bank needs n >= 1, got " + std::to_string(n));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("kernel bank needs sigma > 0, got " + std::to_string(sigma));
  }
  GaussianKernelBank bank;
  bank.n = n;
  bank.sigma = sigma;
  bank.kernels.reserve(static_cast<std::size_t>(n) * n);
  bank.centers.reserve(static_cast<std::size_t>(n) * n);
  const double denom = 2.0 * sigma * sigma;
  for (int k = 0; k < n * n; ++k) {
    const GridCoord c = CenterCoord(k, n);
    Grid g(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double di = i - c.row;
        const double dj = j - c.col;
        g(i, j) = std::exp(-(di * di + dj * dj) / denom);
      }
    }
    bank.kernels.push_back(std::move(g));
    bank.centers.push_back(c);
  }
  return bank;
}

PartitionBank InvertKernels(const GaussianKernelBank& bank) {
  PartitionBank out;
  out.n = bank.n;
  out.masks.reserve(bank.kernels.size());
  for (const Grid& g : bank.kernels) out.masks.push_back((1.0 - g.array()).matrix());
  return out;
}

PartitionBank OcclusionBank(int n) {
  if (n < 1) throw ValidationError("occlusion bank needs n >= 1, got " + std::to_string(n));
  PartitionBank out;
  out.n = n;
  for (int k = 0; k < n * n; ++k) {
    Grid m = Grid::Ones(n, n);
    const GridCoord c = CenterCoord(k, n);
    m(c.row, c.col) = 0.0;
    out.masks.push_back(std::move(m));
  }
  return out;
}

namespace {

void CheckBank(const FeatureMap& h, const PartitionBank& pbank) {
  if (h.side() != pbank.n) {
    throw ValidationError("feature map side " + std::to_string(h.side()) +
                          " does not match partition bank side " + std::to_string(pbank.n));
  }
}

}  // namespace

FeatureMap PartitionSlice(const FeatureMap& h, const PartitionBank& pbank, int k) {
  CheckBank(h, pbank);
  if (k < 0 || k >= static_cast<int>(pbank.masks.size())) {
    throw ValidationError("partition slice index out of range: " + std::to_string(k));
  }
  FeatureMap out = h;
  const Grid& mask = pbank.masks[k];
  const int plane = h.side() * h.side();
  Tensor3& values = out.mutable_values();
  for (int c = 0; c < h.channels(); ++c) {
    Eigen::Map<Eigen::ArrayXd> dst(values.plane(c).data(), plane);
    dst *= Eigen::Map<const Eigen::ArrayXd>(mask.data(), plane);
  }
  return out;
}

std::vector<FeatureMap> PartitionFeatures(const FeatureMap& h, const PartitionBank& pbank) {
  CheckBank(h, pbank);
  std::vector<FeatureMap> out;
  out.reserve(pbank.masks.size());
  for (int k = 0; k < static_cast<int>(pbank.masks.size()); ++k) {
    out.push_back(PartitionSlice(h, pbank, k));
  }
  return out;
}

ShapleyMap ComputeShapleyMap(const ModelBundle& bundle, const FeatureMap& h, int class_index,
                             const PartitionBank& pbank, ScoreMode mode, int chunk_size,
                             int iteration) {
  CheckBank(h, pbank);
  if (class_index < 0 || class_index >= bundle.class_count()) {
    throw ValidationError("class index " + std::to_string(class_index) + " out of range [0, " +
                          std::to_string(bundle.class_count()) + ")");
  }
  if (chunk_size < 1) throw ValidationError("chunk size must be positive");
  const int n = pbank.n;
  const int total = n * n;
  const double base = PredictFromFeatures(bundle, h).Score(class_index, mode);

  ShapleyMap result;
  result.s = Grid(n, n);
  result.class_index = class_index;
  result.score_mode = mode;
  result.iteration = iteration;
  std::vector<FeatureMap> chunk;
  for (int start = 0; start < total; start += chunk_size) {
    const int end = std::min(total, start + chunk_size);
    chunk.clear();
    for (int k = start; k < end; ++k) chunk.push_back(PartitionSlice(h, pbank, k));
    const std::vector<ClassScores> scores = PredictFromFeaturesBatch(bundle, chunk);
    for (int k = start; k < end; ++k) {
      const GridCoord c = CenterCoord(k, n);
      result.s(c.row, c.col) = base - scores[k - start].Score(class_index, mode);
    }
  }
  return result;
}

std::string PartitionMethodName(PartitionMethod method) {
  return method == PartitionMethod::kGaussian ? "gaussian" : "occlusion";
}

ShapleyEstimator::ShapleyEstimator(int n, ShapleySettings settings)
    : settings_(settings),
      bank_(settings.method == PartitionMethod::kGaussian
                ? InvertKernels(BuildKernelBank(n, settings.sigma))
                : OcclusionBank(n)) {
  if (settings_.chunk_size < 1) throw ValidationError("chunk size must be positive");
}

ShapleyMap ShapleyEstimator::Compute(const ModelBundle& bundle, const FeatureMap& h,
                                     int class_index, int iteration) const {
  return ComputeShapleyMap(bundle, h, class_index, bank_, settings_.score_mode,
                           settings_.chunk_size, iteration);
}

}  // namespace finecf
