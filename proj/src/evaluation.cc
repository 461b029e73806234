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

#include "finecf/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finecf/errors.h"

namespace finecf {

namespace {

constexpr double kRoundingGuard = 1e-9;

}  // namespace

std::string CurveKindName(CurveKind kind) {
  return kind == CurveKind::kInsertion ? "insertion" : "deletion";
}

int CurveStepCount(double step_fraction) {
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) {
    throw ValidationError("step fraction must lie in (0, 1], got " +
                          std::to_string(step_fraction));
  }
  return static_cast<int>(std::ceil(1.0 / step_fraction - kRoundingGuard));
}

int PixelsAfterStep(int step, double step_fraction, int total_pixels) {
  const double exact = step * step_fraction * total_pixels;
  const int count = static_cast<int>(std::ceil(exact - kRoundingGuard));
  return std::clamp(count, 0, total_pixels);
}

namespace {

CurveResult RunCurve(CurveKind kind, const ModelBundle& bundle, const Image& image,
                     const Grid& saliency, int class_index, const CurveOptions& options) {
  const int h = image.height();
  const int w = image.width();
  if (saliency.rows() != h || saliency.cols() != w) {
    throw ValidationError("saliency " + std::to_string(saliency.rows()) + "x" +
                          std::to_string(saliency.cols()) + " does not match image " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  if (class_index < 0 || class_index >= bundle.class_count()) {
    throw ValidationError("class index out of range: " + std::to_string(class_index));
  }
  const int steps = CurveStepCount(options.step_fraction);
  const int total = h * w;
  const Image blurred = BlurImage(image, options.blur);
  const Image& source = kind == CurveKind::kDeletion ? blurred : image;
  Image current = kind == CurveKind::kDeletion ? image : blurred;

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return saliency.data()[a] > saliency.data()[b];
  });

  CurveResult result;
  result.kind = kind;
  result.class_index = class_index;
  result.step_fraction = options.step_fraction;
  result.blur = options.blur;
  result.points.push_back({0.0, PredictFromImage(bundle, current).probabilities[class_index]});
  std::vector<uint8_t> mask(total, 0);
  int done = 0;
  for (int step = 1; step <= steps; ++step) {
    const int target = PixelsAfterStep(step, options.step_fraction, total);
    for (; done < target; ++done) {
      const int p = order[done];
      mask[p] = 1;
      for (int c = 0; c < image.channels(); ++c) {
        current.plane(c)[p] = source.plane(c)[p];
      }
    }
    if (options.audit) options.audit(step, mask);
    const double fraction = static_cast<double>(done) / total;
    result.points.push_back({fraction, PredictFromImage(bundle, current).probabilities[class_index]});
  }
  result.auc = CurveAuc(result.points);
  return result;
}

}  // namespace

CurveResult DeletionCurve(const ModelBundle& bundle, const Image& image, const Grid& saliency,
                          int class_index, const CurveOptions& options) {
  return RunCurve(CurveKind::kDeletion, bundle, image, saliency, class_index, options);
}

CurveResult InsertionCurve(const ModelBundle& bundle, const Image& image, const Grid& saliency,
                           int class_index, const CurveOptions& options) {
  return RunCurve(CurveKind::kInsertion, bundle, image, saliency, class_index, options);
}

double CurveAuc(std::span<const CurvePoint> points) {
  if (points.size() < 2) throw ValidationError("a curve needs at least 2 points");
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = points[i].fraction - points[i - 1].fraction;
    if (!(dx > 0.0)) throw ValidationError("curve fractions must be strictly increasing");
    area += dx * (points[i].probability + points[i - 1].probability) / 2.0;
  }
  return area;
}

CompactScore CompactActivationScore(const Grid& dom, const Grid& global_map, double epsilon) {
  if (dom.rows() != global_map.rows() || dom.cols() != global_map.cols()) {
    throw ValidationError("dominant and global maps differ in shape");
  }
  if ((dom.array() < 0.0).any() || (global_map.array() < 0.0).any()) {
    throw ValidationError("compact activation score needs non-negative maps");
  }
  CompactScore score;
  score.epsilon = epsilon;
  score.p_t = static_cast<int>(dom.size());
  score.p_a = static_cast<int>((dom.array() > epsilon).count());
  const double peak = global_map.size() > 0 ? global_map.maxCoeff() : 0.0;
  if (peak > 0.0) {
    const double normalized_sum = global_map.sum() / peak;
    score.c = dom.sum() / normalized_sum;
  }
  if (score.p_a > 0) score.xi = score.c * score.p_t / score.p_a;
  return score;
}

Grid GlobalActivationMap(const Grid& s_star, const FeatureMap& h_star) {
  const int n = h_star.side();
  if (s_star.rows() != n || s_star.cols() != n) {
    throw ValidationError("Shapley map does not match feature side " + std::to_string(n));
  }
  Grid mean = Grid::Zero(n, n);
  Eigen::Map<Eigen::ArrayXd> flat(mean.data(), mean.size());
  for (int c = 0; c < h_star.channels(); ++c) {
    flat += Eigen::Map<const Eigen::ArrayXd>(h_star.values().plane(c).data(), mean.size());
  }
  flat /= h_star.channels();
  return s_star.cwiseProduct(mean).cwiseMax(0.0);
}

FineGrainedStats KeypointInclusion(const Grid& dom_img, std::span<const Keypoint> keypoints,
                                   double epsilon) {
  FineGrainedStats stats;
  stats.active_pixels = static_cast<int>((dom_img.array() > epsilon).count());
  if (stats.active_pixels > 0) {
    stats.mean_contribution = dom_img.sum() / stats.active_pixels;
  }
  for (const Keypoint& kp : keypoints) {
    if (!kp.visible) continue;
    const long col = std::lround(kp.x);
    const long row = std::lround(kp.y);
    if (row < 0 || col < 0 || row >= dom_img.rows() || col >= dom_img.cols()) {
      ++stats.warnings;
      continue;
    }
    ++stats.keypoints_total;
    if (dom_img(row, col) > epsilon) ++stats.keypoints_hit;
  }
  return stats;
}

}  // namespace finecf
