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

// Augmentation pipelines: base, erasing, cropping, the parallel triplet and
// the test-time occlusion perturbation.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "oracles.hpp"
#include "pade/augment.hpp"
#include "pade/error.hpp"
#include "pade/rng.hpp"

namespace {

using namespace pade;

RawImage noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  RawImage img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

RawImage constant_image(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RawImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

/// Left half pure red, right half pure blue.
RawImage half_red_half_blue(int h, int w) {
  RawImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = x < w / 2 ? 255 : 0;
      img.at(y, x, 2) = x < w / 2 ? 0 : 255;
    }
  return img;
}

AugmentConfig small_config() {
  AugmentConfig cfg;
  cfg.train_size = {64, 32};
  cfg.pad = 8;
  return cfg;
}

struct DiffBox {
  int count = 0;
  int top = 1 << 30, left = 1 << 30, bottom = -1, right = -1;
};

DiffBox diff_box(const ImageTensor& a, const ImageTensor& b) {
  DiffBox d;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      bool differs = false;
      for (int c = 0; c < a.channels; ++c) differs |= a.at(c, y, x) != b.at(c, y, x);
      if (!differs) continue;
      ++d.count;
      d.top = std::min(d.top, y);
      d.left = std::min(d.left, x);
      d.bottom = std::max(d.bottom, y);
      d.right = std::max(d.right, x);
    }
  return d;
}

/// x-centroid of pixels where channel `c` dominates; -1 when none.
double channel_centroid(const ImageTensor& t, int c, int other) {
  double sx = 0.0, n = 0.0;
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      if (t.at(c, y, x) - t.at(other, y, x) > 1.0f) {
        sx += x;
        n += 1.0;
      }
  return n > 0.0 ? sx / n : -1.0;
}

TEST(BaseAugment, GrayImageAtTheMeanNormalizesToZero) {
  AugmentConfig cfg;
  const float m = 128.0f / 255.0f;
  cfg.norm_mean = {m, m, m};
  const ImageTensor out = base_augment(constant_image(40, 20, 128, 128, 128), cfg);
  ASSERT_EQ(out.channels, 3);
  ASSERT_EQ(out.height, 256);
  ASSERT_EQ(out.width, 128);
  for (float v : out.data) ASSERT_EQ(v, 0.0f);
}

TEST(BaseAugment, IsDeterministic) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(50, 30, 3);
  EXPECT_EQ(base_augment(src, cfg), base_augment(src, cfg));
}

TEST(BaseAugment, CheckerboardResizeMatchesTriangleKernelOracle) {
  // 4x4 checkerboard of 0 / 255 upsampled to 8x8.
  RawImage src(4, 4);
  std::vector<double> plane(16);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const std::uint8_t v = (x + y) % 2 ? 255 : 0;
      for (int c = 0; c < 3; ++c) src.at(y, x, c) = v;
      plane[static_cast<std::size_t>(y * 4 + x)] = v;
    }
  const ImageTensor got = resize_bilinear(to_planar(src), {8, 8});
  const auto want = oracle::bilinear(plane, 4, 4, 8, 8);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        EXPECT_NEAR(got.at(c, y, x), want[static_cast<std::size_t>(y * 8 + x)], 1e-6 * 255.0)
            << "c=" << c << " y=" << y << " x=" << x;
}

TEST(BaseAugment, RandomResizesMatchOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = static_cast<int>(rng.uniform_int(2, 9)), w = static_cast<int>(rng.uniform_int(2, 9));
    const int oh = static_cast<int>(rng.uniform_int(1, 12)), ow = static_cast<int>(rng.uniform_int(1, 12));
    ImageTensor src(1, h, w);
    std::vector<double> plane;
    for (auto& v : src.data) {
      v = static_cast<float>(rng.uniform_int(0, 255));
      plane.push_back(v);
    }
    const ImageTensor got = resize_bilinear(src, {oh, ow});
    const auto want = oracle::bilinear(plane, h, w, oh, ow);
    for (int i = 0; i < oh * ow; ++i) ASSERT_NEAR(got.data[static_cast<std::size_t>(i)], want[static_cast<std::size_t>(i)], 1e-3);
  }
}

TEST(BaseAugment, RejectsNonRgbInput) {
  RawImage gray(10, 10, 1);
  EXPECT_THROW(base_augment(gray, small_config()), DecodeError);
  RawImage rgba(10, 10, 4);
  EXPECT_THROW(erasing_augment(rgba, small_config(), 1), DecodeError);
  EXPECT_THROW(cropping_augment(rgba, small_config(), 1), DecodeError);
}

TEST(ErasingAugment, ChangesExactlyOneRectangleWithinRanges) {
  const AugmentConfig cfg = small_config();
  const double area = static_cast<double>(cfg.train_size.height) * cfg.train_size.width;
  int fallbacks = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const RawImage src = noise_image(48, 24, 1000 + seed);
    const ImageTensor base = base_augment(src, cfg);
    OpTrace trace;
    const ImageTensor erased = erasing_augment(src, cfg, seed, &trace);
    ASSERT_TRUE(trace.applied);
    if (trace.fallback) {
      ++fallbacks;
      ASSERT_EQ(erased, base);
      continue;
    }
    const DiffBox d = diff_box(base, erased);
    const int bh = d.bottom - d.top + 1, bw = d.right - d.left + 1;
    ASSERT_EQ(d.count, bh * bw) << "changed pixels do not form a solid rectangle, seed " << seed;
    ASSERT_EQ((Rect{d.top, d.left, bh, bw}), trace.rect);
    const double frac = d.count / area;
    ASSERT_GE(frac, cfg.erase_area_range.lo);
    ASSERT_LE(frac, cfg.erase_area_range.hi);
    const double ratio = static_cast<double>(bh) / bw;
    ASSERT_GE(ratio, cfg.erase_aspect_range.lo);
    ASSERT_LE(ratio, cfg.erase_aspect_range.hi);
    for (int c = 0; c < 3; ++c) ASSERT_EQ(erased.at(c, d.top, d.left), cfg.erase_fill[c]);
  }
  EXPECT_LT(fallbacks, 10);
}

TEST(ErasingAugment, SameSeedReproducesTheRectangle) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(48, 24, 5);
  OpTrace a, b;
  EXPECT_EQ(erasing_augment(src, cfg, 42, &a), erasing_augment(src, cfg, 42, &b));
  EXPECT_EQ(a, b);
}

TEST(ErasingAugment, ZeroProbabilityIsIdentity) {
  AugmentConfig cfg = small_config();
  cfg.erase_prob = 0.0;
  const RawImage src = noise_image(48, 24, 6);
  OpTrace trace;
  EXPECT_EQ(erasing_augment(src, cfg, 9, &trace), base_augment(src, cfg));
  EXPECT_FALSE(trace.applied);
}

TEST(ErasingAugment, ImpossibleRangesFallBackAndRecordIt) {
  AugmentConfig cfg = small_config();
  cfg.erase_area_range = {0.9, 0.95};  // no patch narrower than the image can cover this
  cfg.erase_aspect_range = {3.0, 3.33};
  const RawImage src = noise_image(48, 24, 7);
  OpTrace trace;
  EXPECT_EQ(erasing_augment(src, cfg, 1, &trace), base_augment(src, cfg));
  EXPECT_TRUE(trace.fallback);
  EXPECT_EQ(trace.attempts, cfg.max_attempts);
}

TEST(CroppingAugment, FullFrameCropIsIdentity) {
  AugmentConfig cfg = small_config();
  cfg.crop_scale_range = {1.0, 1.0};
  cfg.crop_aspect_range = {1.0, 1.0};
  cfg.pad = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RawImage src = noise_image(40, 30, seed);
    ASSERT_EQ(cropping_augment(src, cfg, seed), base_augment(src, cfg));
  }
}

TEST(CroppingAugment, IsDeterministicAndShapeStable) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(70, 20, 8);
  OpTrace a, b;
  const ImageTensor x = cropping_augment(src, cfg, 123, &a);
  EXPECT_EQ(x, cropping_augment(src, cfg, 123, &b));
  EXPECT_EQ(a, b);
  EXPECT_EQ(x.size(), cfg.train_size);
  EXPECT_TRUE(x.all_finite());
}

TEST(CroppingAugment, ConstantImageGivesColorOrPadDerivedValues) {
  const AugmentConfig cfg = small_config();
  const RawImage src = constant_image(64, 32, 200, 100, 50);
  const std::array<float, 3> rgb{200.0f, 100.0f, 50.0f};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    OpTrace trace;
    const ImageTensor out = cropping_augment(src, cfg, seed, &trace);
    const Rect r = trace.rect;
    // Window entirely inside the unpadded image: every value is the color.
    const bool interior = r.top >= cfg.pad && r.left >= cfg.pad &&
                          r.top + r.height <= cfg.pad + cfg.train_size.height &&
                          r.left + r.width <= cfg.pad + cfg.train_size.width;
    for (int c = 0; c < 3; ++c) {
      const float color = (rgb[c] / 255.0f - cfg.norm_mean[c]) / cfg.norm_std[c];
      const float black = (0.0f - cfg.norm_mean[c]) / cfg.norm_std[c];
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
          const float v = out.at(c, y, x);
          if (interior) {
            ASSERT_NEAR(v, color, 1e-5f);
          } else {
            // A blend of the color and the zero padding.
            ASSERT_GE(v, std::min(color, black) - 1e-5f);
            ASSERT_LE(v, std::max(color, black) + 1e-5f);
          }
        }
    }
  }
}

TEST(ParallelAugment, BranchesUseDerivedSeedsOnTheSameSource) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(48, 24, 9);
  const ImageTriplet t = parallel_augment(src, cfg, 77, 3, 5);
  EXPECT_EQ(t.source_id, 5);
  EXPECT_EQ(t.base, base_augment(src, cfg));
  EXPECT_EQ(t.erased, erasing_augment(src, cfg, erase_seed(77, 3)));
  EXPECT_EQ(t.cropped, cropping_augment(src, cfg, crop_seed(77, 3)));
  EXPECT_EQ(t.rng_trace.erase.seed, derive_seed(77, "erase", 3));
  EXPECT_EQ(t.rng_trace.crop.seed, derive_seed(77, "crop", 3));
  EXPECT_NE(erase_seed(77, 3), crop_seed(77, 3));
  EXPECT_NE(erase_seed(77, 3), erase_seed(77, 4));
  EXPECT_EQ(t.base.size(), t.erased.size());
  EXPECT_EQ(t.base.size(), t.cropped.size());
}

TEST(ParallelAugment, NoPipelineFlipsTheImage) {
  const AugmentConfig cfg = small_config();
  const RawImage src = half_red_half_blue(64, 32);
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const ImageTriplet t = parallel_augment(src, cfg, seed);
    for (const ImageTensor* img : {&t.base, &t.erased, &t.cropped}) {
      const double red = channel_centroid(*img, 0, 2), blue = channel_centroid(*img, 2, 0);
      if (red < 0.0 || blue < 0.0) continue;  // one half cropped away entirely
      ASSERT_LT(red, blue) << "orientation flipped at seed " << seed;
      ++compared;
    }
  }
  EXPECT_GT(compared, 600);
}

TEST(ParallelAugment, ThousandTrialsFinishQuickly) {
  AugmentConfig cfg;  // full 256x128 size
  const RawImage src = noise_image(128, 64, 10);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ImageTriplet t = parallel_augment(src, cfg, seed);
    ASSERT_TRUE(t.erased.all_finite() && t.cropped.all_finite());
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}

TEST(SerialAugment, FlipsRoughlyHalfTheTime) {
  AugmentConfig cfg = small_config();
  cfg.pad = 0;
  cfg.serial_erase_prob = 0.0;
  const RawImage src = half_red_half_blue(64, 32);
  int flipped = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const ImageTensor out = serial_augment(src, cfg, seed);
    flipped += channel_centroid(out, 0, 2) > channel_centroid(out, 2, 0) ? 1 : 0;
  }
  EXPECT_GT(flipped, 160);
  EXPECT_LT(flipped, 240);
}

TEST(OcclusionPerturb, AlphaZeroNeverErases) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(48, 24, 12);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngTrace trace;
    const ImageTensor out = occlusion_perturb(src, cfg, 0.0, seed, &trace);
    ASSERT_FALSE(trace.erase.applied);
    ASSERT_EQ(out, cropping_augment(src, cfg, derive_seed(seed, "crop")));
  }
}

TEST(OcclusionPerturb, AlphaOneAlwaysErases) {
  const AugmentConfig cfg = small_config();
  const RawImage src = noise_image(48, 24, 13);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngTrace trace;
    occlusion_perturb(src, cfg, 1.0, seed, &trace);
    ASSERT_TRUE(trace.erase.applied);
  }
}

TEST(AugmentConfig, ValidationRejectsBadRanges) {
  AugmentConfig cfg;
  cfg.erase_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.crop_scale_range = {0.0, 1.0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = AugmentConfig{};
  cfg.pad = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(AugmentConfig{}.validate());
}

}  // namespace
