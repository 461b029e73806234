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

// Invariant and dominant saliency maps from a counterfactual's before/after
// feature maps.

#ifndef FINECF_CONTRASTIVE_EXPLAINER_H_
#define FINECF_CONTRASTIVE_EXPLAINER_H_

#include "finecf/counterfactual_engine.h"
#include "finecf/saliency_partition.h"
#include "finecf/tensor.h"

namespace finecf {

// D(i, j) = sum_c max(from[c, i, j] - to[c, i, j], 0), divided by its total
// (all zeros when the total is zero). Throws ValidationError on a shape
// mismatch.
Grid NormalizedDifference(const FeatureMap& from, const FeatureMap& to);

struct WeightedMap {
  Grid raw;      // s * N
  Grid clamped;  // max(raw, 0)
};

// s0 * NormalizedDifference(h0, h_star).
WeightedMap InvariantMap(const ShapleyMap& s0, const FeatureMap& h0, const FeatureMap& h_star);
// s_star * NormalizedDifference(h_star, h0).
WeightedMap DominantMap(const ShapleyMap& s_star, const FeatureMap& h_star, const FeatureMap& h0);

// Bilinear resize with half-pixel centers (no corner alignment). Throws
// ValidationError if the target is smaller than the source.
Grid UpsampleBilinear(const Grid& map, int height, int width);

struct ContrastiveMaps {
  int class_p = 0;
  int class_q = 0;
  Grid raw_inv;
  Grid raw_dom;
  Grid inv;
  Grid dom;
  Grid inv_img;
  Grid dom_img;
};

ContrastiveMaps BuildContrastiveMaps(const CounterfactualResult& result, int image_height,
                                     int image_width);

}  // namespace finecf

#endif  // FINECF_CONTRASTIVE_EXPLAINER_H_
