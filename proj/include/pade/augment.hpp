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

// Parallel augmentation: one source image is turned into a (base, erased,
// cropped) triplet by three independent pipelines. The serial pipeline used by
// the ablation baseline lives here as well.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pade/error.hpp"
#include "pade/image.hpp"
#include "pade/rng.hpp"

namespace pade {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

struct AugmentConfig {
  Size2 train_size{256, 128};
  int pad = 30;
  double erase_prob = 1.0;
  Range erase_area_range{0.02, 0.4};
  Range erase_aspect_range{0.3, 3.33};      // height / width of the erased patch
  std::array<float, 3> erase_fill{0.0f, 0.0f, 0.0f};  // normalized space
  Range crop_scale_range{0.5, 1.0};         // fraction of the padded area
  Range crop_aspect_range{0.75, 1.333};     // relative to the padded image's aspect
  std::array<float, 3> norm_mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> norm_std{0.5f, 0.5f, 0.5f};
  std::uint64_t seed = 0;
  int max_attempts = 10;
  // Serial (baseline) pipeline only.
  double flip_prob = 0.5;
  double serial_erase_prob = 0.5;

  void validate() const {
    auto check_range = [](const Range& r, const char* name) {
      if (!(r.lo > 0.0) || !(r.lo <= r.hi)) {
        throw ConfigError(std::string("augment.") + name + ": need 0 < lo <= hi");
      }
    };
    if (train_size.height <= 0 || train_size.width <= 0) {
      throw ConfigError("augment.train_size must be positive");
    }
    if (pad < 0) throw ConfigError("augment.pad must be >= 0");
    if (!(erase_prob >= 0.0 && erase_prob <= 1.0)) {
      throw ConfigError("augment.erase_prob must lie in [0, 1]");
    }
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0) ||
        !(serial_erase_prob >= 0.0 && serial_erase_prob <= 1.0)) {
      throw ConfigError("augment: serial probabilities must lie in [0, 1]");
    }
    check_range(erase_area_range, "erase_area_range");
    check_range(erase_aspect_range, "erase_aspect_range");
    check_range(crop_scale_range, "crop_scale_range");
    check_range(crop_aspect_range, "crop_aspect_range");
    if (crop_scale_range.hi > 1.0) throw ConfigError("augment.crop_scale_range.hi must be <= 1");
    if (erase_area_range.hi >= 1.0) throw ConfigError("augment.erase_area_range.hi must be < 1");
    for (float s : norm_std)
      if (!(s > 0.0f)) throw ConfigError("augment.norm_std must be positive");
    if (max_attempts < 1) throw ConfigError("augment.max_attempts must be >= 1");
  }
};

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// What one stochastic operation drew and decided.
struct OpTrace {
  std::uint64_t seed = 0;
  bool applied = false;    // erase: the op fired (probability draw passed)
  bool fallback = false;   // rejection sampling exhausted its attempts
  int attempts = 0;
  Rect rect;               // erased patch, or crop window in padded coordinates
  std::vector<double> draws;

  friend bool operator==(const OpTrace&, const OpTrace&) = default;
};

struct RngTrace {
  OpTrace erase;
  OpTrace crop;

  friend bool operator==(const RngTrace&, const RngTrace&) = default;
};

struct ImageTriplet {
  ImageTensor base;
  ImageTensor erased;
  ImageTensor cropped;
  int source_id = -1;
  RngTrace rng_trace;
};

namespace augment_detail {

inline double log_uniform(Rng& rng, const Range& r, std::vector<double>& draws) {
  const double v = std::exp(rng.uniform(std::log(r.lo), std::log(r.hi)));
  draws.push_back(v);
  return v;
}

}  // namespace augment_detail

/// Resize to the training size and normalize. No randomness.
inline ImageTensor base_augment(const RawImage& src, const AugmentConfig& cfg) {
  require_rgb(src);
  ImageTensor out = resize_bilinear(to_planar(src), cfg.train_size);
  normalize_inplace(out, cfg.norm_mean, cfg.norm_std);
  return out;
}

/// Random erasing on an already-normalized tensor. With probability `prob` a
/// single rectangle whose area fraction and height/width ratio fall inside the
/// configured ranges is overwritten with `erase_fill`.
inline void random_erase_inplace(ImageTensor& img, const AugmentConfig& cfg, double prob, Rng& rng,
                                 OpTrace& trace) {
  const double gate = rng.uniform();
  trace.draws.push_back(gate);
  if (!(gate < prob)) return;
  trace.applied = true;

  const double area = static_cast<double>(img.height) * img.width;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    trace.attempts = attempt + 1;
    const double target = area * rng.uniform(cfg.erase_area_range.lo, cfg.erase_area_range.hi);
    trace.draws.push_back(target / area);
    const double aspect = augment_detail::log_uniform(rng, cfg.erase_aspect_range, trace.draws);
    const int h = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int w = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (h <= 0 || w <= 0 || h >= img.height || w >= img.width) continue;
    // Rounding can push the realized patch outside the requested ranges.
    const double frac = static_cast<double>(h) * w / area;
    const double ratio = static_cast<double>(h) / w;
    if (!cfg.erase_area_range.contains(frac) || !cfg.erase_aspect_range.contains(ratio)) continue;

    const int top = static_cast<int>(rng.uniform_int(0, img.height - h));
    const int left = static_cast<int>(rng.uniform_int(0, img.width - w));
    trace.rect = {top, left, h, w};
    for (int c = 0; c < img.channels; ++c)
      for (int y = top; y < top + h; ++y)
        for (int x = left; x < left + w; ++x) img.at(c, y, x) = cfg.erase_fill[c];
    return;
  }
  trace.fallback = true;
}

/// Samples a crop window on an (h x w) canvas: area fraction from
/// crop_scale_range, aspect relative to the canvas aspect. Falls back to a
/// centred window at the largest allowed scale.
inline Rect sample_crop_window(int h, int w, const AugmentConfig& cfg, Rng& rng, OpTrace& trace) {
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    trace.attempts = attempt + 1;
    const double s = rng.uniform(cfg.crop_scale_range.lo, cfg.crop_scale_range.hi);
    trace.draws.push_back(s);
    const double r = augment_detail::log_uniform(rng, cfg.crop_aspect_range, trace.draws);
    const int ch = static_cast<int>(std::lround(h * std::sqrt(s / r)));
    const int cw = static_cast<int>(std::lround(w * std::sqrt(s * r)));
    if (ch <= 0 || cw <= 0 || ch > h || cw > w) continue;
    const int top = static_cast<int>(rng.uniform_int(0, h - ch));
    const int left = static_cast<int>(rng.uniform_int(0, w - cw));
    return {top, left, ch, cw};
  }
  trace.fallback = true;
  const double s = cfg.crop_scale_range.hi;
  const int ch = std::max(1, static_cast<int>(std::lround(h * std::sqrt(s))));
  const int cw = std::max(1, static_cast<int>(std::lround(w * std::sqrt(s))));
  return {(h - ch) / 2, (w - cw) / 2, ch, cw};
}

/// Base pipeline followed by random erasing with cfg.erase_prob.
inline ImageTensor erasing_augment(const RawImage& src, const AugmentConfig& cfg,
                                   std::uint64_t seed, OpTrace* trace = nullptr) {
  ImageTensor out = base_augment(src, cfg);
  OpTrace local;
  local.seed = seed;
  Rng rng(seed);
  random_erase_inplace(out, cfg, cfg.erase_prob, rng, local);
  if (trace) *trace = std::move(local);
  return out;
}

/// resize -> zero pad -> random resized crop -> resize back -> normalize.
inline ImageTensor cropping_augment(const RawImage& src, const AugmentConfig& cfg,
                                    std::uint64_t seed, OpTrace* trace = nullptr) {
  require_rgb(src);
  OpTrace local;
  local.seed = seed;
  local.applied = true;
  Rng rng(seed);
  const ImageTensor padded =
      pad_constant(resize_bilinear(to_planar(src), cfg.train_size), cfg.pad, 0.0f);
  const Rect win = sample_crop_window(padded.height, padded.width, cfg, rng, local);
  local.rect = win;
  ImageTensor out =
      resize_bilinear(crop(padded, win.top, win.left, win.height, win.width), cfg.train_size);
  normalize_inplace(out, cfg.norm_mean, cfg.norm_std);
  if (trace) *trace = std::move(local);
  return out;
}

inline std::uint64_t erase_seed(std::uint64_t seed, std::uint64_t sample_index) {
  return derive_seed(seed, "erase", sample_index);
}
inline std::uint64_t crop_seed(std::uint64_t seed, std::uint64_t sample_index) {
  return derive_seed(seed, "crop", sample_index);
}

/// Runs the three pipelines on the same source. Child seeds are
/// derive_seed(seed, "erase" | "crop", sample_index).
inline ImageTriplet parallel_augment(const RawImage& src, const AugmentConfig& cfg,
                                     std::uint64_t seed, std::uint64_t sample_index = 0,
                                     int source_id = -1) {
  ImageTriplet t;
  t.source_id = source_id;
  t.base = base_augment(src, cfg);
  t.erased = erasing_augment(src, cfg, erase_seed(seed, sample_index), &t.rng_trace.erase);
  t.cropped = cropping_augment(src, cfg, crop_seed(seed, sample_index), &t.rng_trace.crop);
  return t;
}

/// Conventional serial chain used by the ablation baseline: resize, random
/// horizontal flip, pad, fixed-size random crop, normalize, random erasing.
inline ImageTensor serial_augment(const RawImage& src, const AugmentConfig& cfg,
                                  std::uint64_t seed, RngTrace* trace = nullptr) {
  require_rgb(src);
  Rng rng(seed);
  RngTrace local;
  local.crop.seed = local.erase.seed = seed;
  ImageTensor img = resize_bilinear(to_planar(src), cfg.train_size);
  const double flip = rng.uniform();
  local.crop.draws.push_back(flip);
  if (flip < cfg.flip_prob) img = flip_horizontal(img);
  if (cfg.pad > 0) {
    const ImageTensor padded = pad_constant(img, cfg.pad, 0.0f);
    const int top = static_cast<int>(rng.uniform_int(0, 2 * cfg.pad));
    const int left = static_cast<int>(rng.uniform_int(0, 2 * cfg.pad));
    local.crop.applied = true;
    local.crop.rect = {top, left, img.height, img.width};
    img = crop(padded, top, left, img.height, img.width);
  }
  normalize_inplace(img, cfg.norm_mean, cfg.norm_std);
  random_erase_inplace(img, cfg, cfg.serial_erase_prob, rng, local.erase);
  if (trace) *trace = std::move(local);
  return img;
}

/// Test-time occlusion: cropping pipeline always, then erasing with probability alpha.
inline ImageTensor occlusion_perturb(const RawImage& src, const AugmentConfig& cfg, double alpha,
                                     std::uint64_t seed, RngTrace* trace = nullptr) {
  RngTrace local;
  ImageTensor img = cropping_augment(src, cfg, derive_seed(seed, "crop"), &local.crop);
  local.erase.seed = derive_seed(seed, "erase");
  Rng rng(local.erase.seed);
  random_erase_inplace(img, cfg, alpha, rng, local.erase);
  if (trace) *trace = std::move(local);
  return img;
}

}  // namespace pade
