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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pade/error.hpp"

namespace pade {

struct Size2 {
  int height = 0;
  int width = 0;

  friend bool operator==(const Size2&, const Size2&) = default;
};

/// 8-bit interleaved raster as decoded from disk, RGB channel order.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;  // (y * width + x) * channels + c

  RawImage() = default;
  RawImage(int h, int w, int c = 3)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// Planar float image, shape (channels, height, width).
struct ImageTensor {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  Size2 size() const { return {height, width}; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

inline void require_rgb(const RawImage& img) {
  if (img.channels != 3) {
    throw DecodeError("expected a 3-channel image, got " + std::to_string(img.channels) +
                      " channel(s)");
  }
  if (img.height <= 0 || img.width <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
    throw DecodeError("image buffer does not match its declared size");
  }
}

/// Converts to planar float in [0, 255] without rescaling.
inline ImageTensor to_planar(const RawImage& img) {
  require_rgb(img);
  ImageTensor out(3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = static_cast<float>(img.at(y, x, c));
  return out;
}

/// Bilinear resampling with half-pixel centres and edge clamping
/// (align_corners = false, no antialiasing). Same-size resize is an exact copy.
inline ImageTensor resize_bilinear(const ImageTensor& src, Size2 dst) {
  if (dst.height <= 0 || dst.width <= 0) throw ConfigError("resize: target size must be positive");
  ImageTensor out(src.channels, dst.height, dst.width);
  const double sy = static_cast<double>(src.height) / dst.height;
  const double sx = static_cast<double>(src.width) / dst.width;

  struct Tap {
    int i0, i1;
    float f;
  };
  auto taps = [](int n_dst, int n_src, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(n_dst));
    for (int i = 0; i < n_dst; ++i) {
      double p = (i + 0.5) * scale - 0.5;
      p = std::clamp(p, 0.0, static_cast<double>(n_src - 1));
      const int i0 = static_cast<int>(std::floor(p));
      const int i1 = std::min(i0 + 1, n_src - 1);
      t[static_cast<std::size_t>(i)] = {i0, i1, static_cast<float>(p - i0)};
    }
    return t;
  };
  const auto ty = taps(dst.height, src.height, sy);
  const auto tx = taps(dst.width, src.width, sx);

  for (int c = 0; c < src.channels; ++c) {
    for (int y = 0; y < dst.height; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < dst.width; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const float top = src.at(c, a.i0, b.i0) * (1.0f - b.f) + src.at(c, a.i0, b.i1) * b.f;
        const float bot = src.at(c, a.i1, b.i0) * (1.0f - b.f) + src.at(c, a.i1, b.i1) * b.f;
        out.at(c, y, x) = top * (1.0f - a.f) + bot * a.f;
      }
    }
  }
  return out;
}

/// Zero-padding on all four sides.
inline ImageTensor pad_constant(const ImageTensor& src, int pad, float fill = 0.0f) {
  if (pad < 0) throw ConfigError("pad must be non-negative");
  ImageTensor out(src.channels, src.height + 2 * pad, src.width + 2 * pad, fill);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y + pad, x + pad) = src.at(c, y, x);
  return out;
}

inline ImageTensor crop(const ImageTensor& src, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h <= 0 || w <= 0 || top + h > src.height || left + w > src.width) {
    throw ConfigError("crop window outside image");
  }
  ImageTensor out(src.channels, h, w);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, top + y, left + x);
  return out;
}

inline ImageTensor flip_horizontal(const ImageTensor& src) {
  ImageTensor out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  return out;
}

/// (v / 255 - mean[c]) / std[c], in place.
inline void normalize_inplace(ImageTensor& img, const std::array<float, 3>& mean,
                              const std::array<float, 3>& std_dev) {
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    float* p = img.data.data() + plane * static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] / 255.0f - mean[c]) / std_dev[c];
  }
}

/// Inverse of normalize_inplace, clamped and rounded back to 8 bits.
inline RawImage denormalize(const ImageTensor& img, const std::array<float, 3>& mean,
                            const std::array<float, 3>& std_dev) {
  RawImage out(img.height, img.width, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float v = (img.at(c, y, x) * std_dev[c] + mean[c]) * 255.0f;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

}  // namespace pade
