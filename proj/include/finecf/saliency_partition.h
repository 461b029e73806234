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

// Per-location contribution scores of a feature map. Each location's score
// is the drop in class score when a Gaussian neighbourhood around it is
// suppressed.

#ifndef FINECF_SALIENCY_PARTITION_H_
#define FINECF_SALIENCY_PARTITION_H_

#include <string>
#include <vector>

#include "finecf/model_gateway.h"
#include "finecf/tensor.h"

namespace finecf {

inline constexpr double kDefaultSigma = 0.8;
inline constexpr int kDefaultShapleyChunk = 256;

// Center index of a grid location, row-major: k = row * n + col.
inline int CenterIndex(GridCoord at, int n) { return at.row * n + at.col; }
inline GridCoord CenterCoord(int k, int n) { return {k / n, k % n}; }

// n^2 Gaussian kernels, slice k centered at CenterCoord(k, n):
// G[k](i, j) = exp(-((i - row_k)^2 + (j - col_k)^2) / (2 sigma^2)).
struct GaussianKernelBank {
  int n = 0;
  double sigma = 0.0;
  std::vector<Grid> kernels;
  std::vector<GridCoord> centers;
};

// Throws ValidationError for n < 1 or sigma <= 0 (or non-finite).
GaussianKernelBank BuildKernelBank(int n, double sigma);

// Multiplicative masks applied to every channel of a feature map, one per
// center. For the Gaussian method these are 1 - G.
struct PartitionBank {
  int n = 0;
  std::vector<Grid> masks;
};

PartitionBank InvertKernels(const GaussianKernelBank& bank);
// Hard single-point occlusion: mask k is all ones except a zero at center k.
PartitionBank OcclusionBank(int n);

// Slice k of the partitioned features: h with each channel multiplied by
// masks[k]. Throws ValidationError on a spatial size mismatch.
FeatureMap PartitionSlice(const FeatureMap& h, const PartitionBank& pbank, int k);
std::vector<FeatureMap> PartitionFeatures(const FeatureMap& h, const PartitionBank& pbank);

struct ShapleyMap {
  Grid s;
  int class_index = 0;
  ScoreMode score_mode = ScoreMode::kProbability;
  int iteration = 0;

  int side() const { return static_cast<int>(s.rows()); }
};

// s(i, j) = p(h) - p(PartitionSlice(h, pbank, CenterIndex({i, j}))), with p
// the class_index score in `mode`. Slices are evaluated chunk_size at a time.
// Throws ValidationError on a shape or class mismatch.
ShapleyMap ComputeShapleyMap(const ModelBundle& bundle, const FeatureMap& h, int class_index,
                             const PartitionBank& pbank, ScoreMode mode,
                             int chunk_size = kDefaultShapleyChunk, int iteration = 0);

enum class PartitionMethod { kGaussian, kOcclusion };

std::string PartitionMethodName(PartitionMethod method);

struct ShapleySettings {
  double sigma = kDefaultSigma;
  ScoreMode score_mode = ScoreMode::kProbability;
  PartitionMethod method = PartitionMethod::kGaussian;
  int chunk_size = kDefaultShapleyChunk;
};

// Holds a prebuilt partition bank for one grid side.
class ShapleyEstimator {
 public:
  ShapleyEstimator(int n, ShapleySettings settings);

  ShapleyMap Compute(const ModelBundle& bundle, const FeatureMap& h, int class_index,
                     int iteration = 0) const;

  const ShapleySettings& settings() const { return settings_; }
  const PartitionBank& bank() const { return bank_; }

 private:
  ShapleySettings settings_;
  PartitionBank bank_;
};

}  // namespace finecf

#endif  // FINECF_SALIENCY_PARTITION_H_
