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

#include "synthetic_shapes.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "finecf/errors.h"
#include "finecf/hashing.h"

namespace finecf::synthetic {

namespace {

std::mt19937_64 SampleRng(uint64_t seed, Split split, int index, uint32_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(split == Split::kTrain ? 1 : 2),
                    static_cast<uint32_t>(index), stream};
  return std::mt19937_64(seq);
}

bool InEllipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace

std::string SampleKey(Split split, int index) {
  return "synthetic:" + SplitName(split) + ":" + std::to_string(index);
}

void ParseSampleKey(const std::string& key, Split* split, int* index) {
  const std::string prefix = "synthetic:";
  if (key.rfind(prefix, 0) != 0) throw DataError("not a synthetic sample key: " + key);
  const auto colon = key.find(':', prefix.size());
  if (colon == std::string::npos) throw DataError("malformed synthetic sample key: " + key);
  *split = ParseSplit(key.substr(prefix.size(), colon - prefix.size()));
  try {
    *index = std::stoi(key.substr(colon + 1));
  } catch (const std::exception&) {
    throw DataError("malformed synthetic sample key: " + key);
  }
}

bool MarkerCovers(int label, double dx, double dy, double radius) {
  const double ax = std::abs(dx);
  const double ay = std::abs(dy);
  const double r = radius;
  const double stroke = std::max(1.0, 0.25 * r);
  switch (label) {
    case 0:  // filled square
      return ax <= 0.8 * r && ay <= 0.8 * r;
    case 1:  // disk
      return dx * dx + dy * dy <= r * r;
    case 2:  // upward triangle
      return dy >= -r && dy <= r && ax <= 0.5 * (dy + r);
    case 3:  // plus
      return ax <= r && ay <= r && (ax <= 0.5 * stroke || ay <= 0.5 * stroke);
    case 4:  // diagonal cross
      return ax <= r && ay <= r && std::abs(ax - ay) <= 0.75 * stroke;
    case 5:  // horizontal bar
      return ax <= r && ay <= 0.35 * r;
    case 6:  // vertical bar
      return ay <= r && ax <= 0.35 * r;
    case 7: {  // ring
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= r && d >= r - stroke - 0.5;
    }
    default:
      return false;
  }
}

Placement Place(const SyntheticConfig& config, uint64_t seed, Split split, int index) {
  std::mt19937_64 rng = SampleRng(seed, split, index, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double s = config.image_size / 64.0;

  Placement p;
  p.label = index % config.class_count;
  p.body_x = (34.0 + uniform(-3.0, 3.0)) * s;
  p.body_y = (38.0 + uniform(-3.0, 3.0)) * s;
  p.head_x = p.body_x - 18.0 * s;
  p.head_y = p.body_y - 14.0 * s;
  p.marker_x = p.head_x + uniform(-1.0, 1.0) * s;
  p.marker_y = p.head_y + uniform(-1.0, 1.0) * s;
  p.marker_radius = 5.0 * s;
  p.marker_shade = uniform(0.05, 0.2);
  for (int c = 0; c < 3; ++c) p.background[c] = uniform(0.78, 0.92);
  const double base[3] = {0.58, 0.44, 0.30};
  for (int c = 0; c < 3; ++c) p.body_color[c] = base[c] + uniform(-0.07, 0.07);
  p.has_distractor = unit(rng) < config.distractor_probability;
  const int other = static_cast<int>(uniform(0.0, config.class_count - 1.0 - 1e-9));
  p.distractor_label = other >= p.label ? other + 1 : other;
  p.distractor_x = p.body_x + (8.0 + uniform(-3.0, 3.0)) * s;
  p.distractor_y = p.body_y + (2.0 + uniform(-2.0, 2.0)) * s;
  p.distractor_shade = uniform(0.05, 0.2) + config.distractor_fade;
  p.noise_seed = rng();
  return p;
}

Image Render(const SyntheticConfig& config, const Placement& p) {
  const int size = config.image_size;
  const double s = size / 64.0;
  Image image({3, size, size});
  std::mt19937_64 noise_rng(p.noise_seed);
  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      std::array<double, 3> color = p.background;
      if (InEllipse(px, py, p.body_x, p.body_y, 20.0 * s, 13.0 * s) ||
          InEllipse(px, py, p.head_x, p.head_y, 10.0 * s, 10.0 * s)) {
        color = p.body_color;
      }
      if (p.has_distractor &&
          MarkerCovers(p.distractor_label, px - p.distractor_x, py - p.distractor_y,
                       p.marker_radius)) {
        color.fill(p.distractor_shade);
      }
      if (MarkerCovers(p.label, px - p.marker_x, py - p.marker_y, p.marker_radius)) {
        color.fill(p.marker_shade);
      }
      for (int c = 0; c < 3; ++c) {
        image.at(c, y, x) = std::clamp(color[c] + noise(noise_rng), 0.0, 1.0);
      }
    }
  }
  return image;
}

std::vector<Keypoint> Keypoints(const Placement& p) {
  const double r = 0.8 * p.marker_radius;
  const double s = p.marker_radius / 5.0;
  return {
      {0, p.marker_x, p.marker_y, true},     {1, p.marker_x, p.marker_y - r, true},
      {2, p.marker_x, p.marker_y + r, true}, {3, p.marker_x - r, p.marker_y, true},
      {4, p.marker_x + r, p.marker_y, true}, {5, p.body_x, p.body_y, true},
      {6, p.body_x + 18.0 * s, p.body_y, true},
  };
}

BoundingBox PartRegion(const Placement& p) {
  const double half = p.marker_radius + 1.0;
  return {p.marker_x - half, p.marker_y - half, p.marker_x + half, p.marker_y + half};
}

}  // namespace finecf::synthetic
