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

#include "finecf/contrastive_explainer.h"

#include <algorithm>
#include <cmath>

#include "finecf/errors.h"

namespace finecf {

Grid NormalizedDifference(const FeatureMap& from, const FeatureMap& to) {
  if (from.shape() != to.shape()) {
    throw ValidationError("feature maps differ in shape: " + from.shape().ToString() + " vs " +
                          to.shape().ToString());
  }
  const int n = from.side();
  Grid d = Grid::Zero(n, n);
  Eigen::Map<Eigen::ArrayXd> flat(d.data(), d.size());
  for (int c = 0; c < from.channels(); ++c) {
    const Eigen::Map<const Eigen::ArrayXd> a(from.values().plane(c).data(), d.size());
    const Eigen::Map<const Eigen::ArrayXd> b(to.values().plane(c).data(), d.size());
    flat += (a - b).max(0.0);
  }
  const double total = d.sum();
  if (total > 0.0) d /= total;
  return d;
}

namespace {

WeightedMap Weighted(const ShapleyMap& s, const FeatureMap& from, const FeatureMap& to) {
  Grid n = NormalizedDifference(from, to);
  if (s.s.rows() != n.rows() || s.s.cols() != n.cols()) {
    throw ValidationError("Shapley map side " + std::to_string(s.side()) +
                          " does not match feature side " + std::to_string(from.side()));
  }
  WeightedMap out;
  out.raw = s.s.cwiseProduct(n);
  out.clamped = out.raw.cwiseMax(0.0);
  return out;
}

}  // namespace

WeightedMap InvariantMap(const ShapleyMap& s0, const FeatureMap& h0, const FeatureMap& h_star) {
  return Weighted(s0, h0, h_star);
}

WeightedMap DominantMap(const ShapleyMap& s_star, const FeatureMap& h_star, const FeatureMap& h0) {
  return Weighted(s_star, h_star, h0);
}

Grid UpsampleBilinear(const Grid& map, int height, int width) {
  const int in_h = static_cast<int>(map.rows());
  const int in_w = static_cast<int>(map.cols());
  if (in_h < 1 || in_w < 1) throw ValidationError("cannot upsample an empty map");
  if (height < in_h || width < in_w) {
    throw ValidationError("upsample target " + std::to_string(height) + "x" +
                          std::to_string(width) + " is smaller than the source");
  }
  // Source coordinate of output index o: (o + 0.5) * in / out - 0.5,
  // clamped at 0.
  auto axis = [](int o, int in, int out, int* lo, int* hi, double* frac) {
    const double src = std::max(0.0, (o + 0.5) * in / out - 0.5);
    *lo = std::min(static_cast<int>(src), in - 1);
    *hi = std::min(*lo + 1, in - 1);
    *frac = src - *lo;
  };
  Grid out(height, width);
  for (int y = 0; y < height; ++y) {
    int y0, y1;
    double fy;
    axis(y, in_h, height, &y0, &y1, &fy);
    for (int x = 0; x < width; ++x) {
      int x0, x1;
      double fx;
      axis(x, in_w, width, &x0, &x1, &fx);
      const double top = (1.0 - fx) * map(y0, x0) + fx * map(y0, x1);
      const double bottom = (1.0 - fx) * map(y1, x0) + fx * map(y1, x1);
      out(y, x) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

ContrastiveMaps BuildContrastiveMaps(const CounterfactualResult& result, int image_height,
                                     int image_width) {
  ContrastiveMaps maps;
  maps.class_p = result.original_class;
  maps.class_q = result.true_class;
  WeightedMap inv = InvariantMap(result.s0, result.h0, result.h_star);
  WeightedMap dom = DominantMap(result.s_star, result.h_star, result.h0);
  maps.raw_inv = std::move(inv.raw);
  maps.inv = std::move(inv.clamped);
  maps.raw_dom = std::move(dom.raw);
  maps.dom = std::move(dom.clamped);
  maps.inv_img = UpsampleBilinear(maps.inv, image_height, image_width);
  maps.dom_img = UpsampleBilinear(maps.dom, image_height, image_width);
  return maps;
}

}  // namespace finecf
