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

// Saliency-map scoring: insertion/deletion curves, the compact activation
// score and keypoint statistics.

#ifndef FINECF_EVALUATION_H_
#define FINECF_EVALUATION_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "finecf/data_hub.h"
#include "finecf/image_ops.h"
#include "finecf/model_gateway.h"
#include "finecf/tensor.h"

namespace finecf {

inline constexpr double kDefaultStepFraction = 0.018;
inline constexpr double kSupportEpsilon = 1e-8;

enum class CurveKind { kInsertion, kDeletion };

std::string CurveKindName(CurveKind kind);

struct CurvePoint {
  double fraction = 0.0;
  double probability = 0.0;
};

struct CurveResult {
  CurveKind kind = CurveKind::kDeletion;
  int class_index = 0;
  double step_fraction = kDefaultStepFraction;
  BlurSpec blur;
  std::vector<CurvePoint> points;
  double auc = 0.0;

  // Number of replacement steps (points.size() - 1).
  int steps() const { return static_cast<int>(points.size()) - 1; }
};

// ceil(1 / step_fraction), guarded against floating error. Throws
// ValidationError unless 0 < step_fraction <= 1.
int CurveStepCount(double step_fraction);

// Pixels changed after `step` steps: min(ceil(step * step_fraction * total),
// total).
int PixelsAfterStep(int step, double step_fraction, int total_pixels);

// Called after each step with the step index and a row-major mask of the
// pixels currently taken from the replacement source.
using CurveAudit = std::function<void(int step, std::span<const uint8_t> replaced)>;

struct CurveOptions {
  double step_fraction = kDefaultStepFraction;
  BlurSpec blur;
  CurveAudit audit;
};

// Deletion starts from `image` and swaps in pixels of its blurred copy;
// insertion starts from the blur and restores original pixels. Pixels go in
// descending saliency order (ties row-major). Point k has fraction
// PixelsAfterStep(k) / (H * W). Throws ValidationError when the saliency
// size differs from the image.
CurveResult DeletionCurve(const ModelBundle& bundle, const Image& image, const Grid& saliency,
                          int class_index, const CurveOptions& options = {});
CurveResult InsertionCurve(const ModelBundle& bundle, const Image& image, const Grid& saliency,
                           int class_index, const CurveOptions& options = {});

// Trapezoid rule over the fraction axis. Needs >= 2 points with strictly
// increasing fractions, else ValidationError.
double CurveAuc(std::span<const CurvePoint> points);

struct CompactScore {
  double xi = 0.0;
  double c = 0.0;
  int p_t = 0;
  int p_a = 0;
  double epsilon = kSupportEpsilon;
};

// C = sum(dom) / sum(global / max(global)) (0 for an all-zero global map),
// P_T = cell count, P_A = |{dom > epsilon}|, xi = C * P_T / P_A (0 when
// P_A = 0). Negative entries or unequal shapes -> ValidationError.
CompactScore CompactActivationScore(const Grid& dom, const Grid& global_map,
                                    double epsilon = kSupportEpsilon);

// max(s_star * channel-mean(h_star), 0).
Grid GlobalActivationMap(const Grid& s_star, const FeatureMap& h_star);

struct FineGrainedStats {
  int active_pixels = 0;
  int keypoints_hit = 0;
  int keypoints_total = 0;
  double mean_contribution = 0.0;
  // Visible keypoints outside the image, skipped.
  int warnings = 0;
};

// A visible keypoint counts as hit when its nearest pixel exceeds epsilon.
FineGrainedStats KeypointInclusion(const Grid& dom_img, std::span<const Keypoint> keypoints,
                                   double epsilon = kSupportEpsilon);

}  // namespace finecf

#endif  // FINECF_EVALUATION_H_
