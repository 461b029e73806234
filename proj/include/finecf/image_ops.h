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

#ifndef FINECF_IMAGE_OPS_H_
#define FINECF_IMAGE_OPS_H_

#include <filesystem>
#include <string>

#include "finecf/tensor.h"

namespace finecf {

struct BlurSpec {
  int kernel_size = 11;
  double sigma = 5.0;

  bool operator==(const BlurSpec&) const = default;
};

// Bilinear resize (half-pixel centers). Same-size input is returned as is.
Image ResizeImage(const Image& image, int height, int width);

// Per-channel Gaussian blur with reflect-101 borders.
Image BlurImage(const Image& image, const BlurSpec& spec);

// Reads any OpenCV-decodable file as RGB in [0, 1]. Throws IoError.
Image ReadImageFile(const std::filesystem::path& path);

// Writes an RGB (or single-channel) image in [0, 1] as 8-bit PNG.
void WritePng(const std::filesystem::path& path, const Image& image);

// Colormap used for overlays; recorded in explanation metadata.
inline constexpr const char* kOverlayColormap = "jet";

// Max-normalizes `heat` (H x W, non-negative), applies the jet colormap and
// alpha-blends it over `image`. An all-zero map leaves the image untouched.
Image RenderOverlay(const Image& image, const Grid& heat, double alpha = 0.5);

}  // namespace finecf

#endif  // FINECF_IMAGE_OPS_H_
