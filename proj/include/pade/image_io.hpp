// Copyright 2026 The PADE-ReID Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <string>

#include "pade/error.hpp"
#include "pade/image.hpp"

namespace pade {

/// Decodes an image file; anything other than 3 channels is a DecodeError.
inline RawImage load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DecodeError("cannot decode image: " + path.string());
  if (m.depth() != CV_8U) throw DecodeError("unsupported bit depth: " + path.string());
  if (m.channels() != 3) {
    throw DecodeError("expected 3 channels, got " + std::to_string(m.channels()) + ": " +
                      path.string());
  }
  RawImage out(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      out.at(y, x, 0) = row[x][2];
      out.at(y, x, 1) = row[x][1];
      out.at(y, x, 2) = row[x][0];
    }
  }
  return out;
}

inline cv::Mat to_bgr_mat(const RawImage& img) {
  require_rgb(img);
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x)
      row[x] = cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
  }
  return m;
}

inline void save_image(const std::filesystem::path& path, const RawImage& img) {
  if (!cv::imwrite(path.string(), to_bgr_mat(img))) {
    throw IoError("cannot write image: " + path.string());
  }
}

}  // namespace pade
