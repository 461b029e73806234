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

#ifndef FINECF_SRC_SYNTHETIC_SHAPES_H_
#define FINECF_SRC_SYNTHETIC_SHAPES_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "finecf/data_hub.h"

namespace finecf::synthetic {

// Every random choice for one sample, drawn from a per-sample RNG.
struct Placement {
  int label = 0;
  double body_x = 0.0, body_y = 0.0;
  double head_x = 0.0, head_y = 0.0;
  double marker_x = 0.0, marker_y = 0.0;
  double marker_radius = 0.0;
  double marker_shade = 0.0;
  bool has_distractor = false;
  int distractor_label = 0;
  double distractor_x = 0.0, distractor_y = 0.0;
  double distractor_shade = 0.0;
  std::array<double, 3> background{};
  std::array<double, 3> body_color{};
  uint64_t noise_seed = 0;
};

std::string SampleKey(Split split, int index);
// Throws DataError on malformed keys.
void ParseSampleKey(const std::string& key, Split* split, int* index);

Placement Place(const SyntheticConfig& config, uint64_t seed, Split split, int index);
Image Render(const SyntheticConfig& config, const Placement& placement);

// Part keypoints (ids 0-4: marker center, top, bottom, left, right) followed
// by body center (5) and tail (6).
std::vector<Keypoint> Keypoints(const Placement& placement);
BoundingBox PartRegion(const Placement& placement);

// True when (dx, dy) relative to the marker center is inked for `label`.
bool MarkerCovers(int label, double dx, double dy, double radius);

}  // namespace finecf::synthetic

#endif  // FINECF_SRC_SYNTHETIC_SHAPES_H_
