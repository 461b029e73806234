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

#include "finecf/image_ops.h"

#include <algorithm>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "finecf/errors.h"

namespace finecf {

namespace {

cv::Mat PlaneView(Image& image, int c) {
  return cv::Mat(image.height(), image.width(), CV_64FC1, image.plane(c).data());
}

cv::Mat PlaneCopy(const Image& image, int c) {
  cv::Mat plane(image.height(), image.width(), CV_64FC1);
  std::copy(image.plane(c).begin(), image.plane(c).end(), plane.ptr<double>());
  return plane;
}

}  // namespace

Image ResizeImage(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw ValidationError("resize target must be positive");
  if (image.height() == height && image.width() == width) return image;
  Image output({image.channels(), height, width});
  for (int c = 0; c < image.channels(); ++c) {
    cv::Mat dst = PlaneView(output, c);
    cv::resize(PlaneCopy(image, c), dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  return output;
}

Image BlurImage(const Image& image, const BlurSpec& spec) {
  if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0 || spec.sigma <= 0) {
    throw ValidationError("blur kernel must be odd and positive with sigma > 0");
  }
  Image output(image.shape());
  for (int c = 0; c < image.channels(); ++c) {
    cv::Mat dst = PlaneView(output, c);
    cv::GaussianBlur(PlaneCopy(image, c), dst, cv::Size(spec.kernel_size, spec.kernel_size),
                     spec.sigma, spec.sigma, cv::BORDER_REFLECT_101);
  }
  return output;
}

Image ReadImageFile(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image " + path.string());
  Image image({3, bgr.rows, bgr.cols});
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return image;
}

void WritePng(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ValidationError("PNG output needs 1 or 3 channels");
  }
  const int type = image.channels() == 3 ? CV_8UC3 : CV_8UC1;
  cv::Mat out(image.height(), image.width(), type);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < image.channels(); ++c) {
        const int dst_c = image.channels() == 3 ? 2 - c : 0;
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        row[x * image.channels() + dst_c] = static_cast<unsigned char>(v * 255.0 + 0.5);
      }
    }
  }
  const std::filesystem::path tmp = path.string() + ".tmp.png";
  if (!cv::imwrite(tmp.string(), out)) throw IoError("cannot write " + path.string());
  std::filesystem::rename(tmp, path);
}

Image RenderOverlay(const Image& image, const Grid& heat, double alpha) {
  if (heat.rows() != image.height() || heat.cols() != image.width()) {
    throw ValidationError("overlay map size differs from image size");
  }
  Image rgb = image;
  if (image.channels() == 1) {
    rgb = Image({3, image.height(), image.width()});
    for (int c = 0; c < 3; ++c) {
      std::copy(image.plane(0).begin(), image.plane(0).end(), rgb.plane(c).begin());
    }
  }
  const double peak = heat.maxCoeff();
  if (!(peak > 0.0)) return rgb;
  cv::Mat gray(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      gray.at<unsigned char>(y, x) =
          static_cast<unsigned char>(std::clamp(heat(y, x) / peak, 0.0, 1.0) * 255.0 + 0.5);
    }
  }
  cv::Mat colored;
  cv::applyColorMap(gray, colored, cv::COLORMAP_JET);
  for (int y = 0; y < image.height(); ++y) {
    const cv::Vec3b* row = colored.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        rgb.at(c, y, x) = (1.0 - alpha) * rgb.at(c, y, x) + alpha * row[x][2 - c] / 255.0;
      }
    }
  }
  return rgb;
}

}  // namespace finecf
