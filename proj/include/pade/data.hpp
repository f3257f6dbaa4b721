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

// Re-ID datasets: Market-1501 style directory loading and a procedural
// generator of synthetic pedestrians with a query/gallery occlusion imbalance.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pade/error.hpp"
#include "pade/image.hpp"
#include "pade/image_io.hpp"
#include "pade/rng.hpp"

namespace pade {

enum class Split { kTrain, kQuery, kGallery };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

struct Item {
  RawImage image;
  int id = 0;       // train: contiguous label; query/gallery: identity number
  int raw_id = 0;   // identity number as found on disk / generated
  int cam = 0;
  bool occluded = false;
  std::string path;  // relative to the dataset root; empty for in-memory items
};

struct ReIDDataset {
  Split split = Split::kTrain;
  std::vector<Item> items;

  std::size_t size() const { return items.size(); }

  int num_ids() const {
    std::set<int> ids;
    for (const auto& it : items) ids.insert(it.id);
    return static_cast<int>(ids.size());
  }

  /// Item indices grouped by label, labels ascending.
  std::map<int, std::vector<std::size_t>> by_identity() const {
    std::map<int, std::vector<std::size_t>> m;
    for (std::size_t i = 0; i < items.size(); ++i) m[items[i].id].push_back(i);
    return m;
  }
};

struct SkipEntry {
  std::string path;
  std::string reason;
};

struct DatasetSplits {
  ReIDDataset train{Split::kTrain, {}};
  ReIDDataset query{Split::kQuery, {}};
  ReIDDataset gallery{Split::kGallery, {}};
  std::vector<SkipEntry> skipped;
};

struct ParsedName {
  int id = 0;
  int cam = 0;
};

/// Parses `ID_cCAM..._SEQ.ext` (Market-1501 / DukeMTMC naming), e.g.
/// 0002_c3_0001.jpg or 0002_c1s1_000451_03.jpg.
inline std::optional<ParsedName> parse_reid_filename(const std::string& filename) {
  static const std::regex kPattern(R"(^(-?\d+)_c(\d+)(s\d+)?_[0-9_]+\.(jpg|jpeg|png|bmp)$)",
                                   std::regex::icase);
  std::smatch m;
  if (!std::regex_match(filename, m, kPattern)) return std::nullopt;
  return ParsedName{std::stoi(m[1].str()), std::stoi(m[2].str())};
}

namespace data_detail {

inline std::map<std::string, bool> read_occlusion_flags(const std::filesystem::path& root) {
  std::map<std::string, bool> flags;
  std::ifstream in(root / "manifest.csv");
  if (!in) return flags;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string path, id, cam, occ;
    if (std::getline(ss, path, ',') && std::getline(ss, id, ',') && std::getline(ss, cam, ',') &&
        std::getline(ss, occ, ',')) {
      flags[path] = occ == "1";
    }
  }
  return flags;
}

inline ReIDDataset load_split(const std::filesystem::path& root, Split split,
                              const std::map<std::string, bool>& flags,
                              std::vector<SkipEntry>& skipped) {
  namespace fs = std::filesystem;
  const fs::path dir = root / split_name(split);
  if (!fs::is_directory(dir)) {
    throw DataError("dataset split directory missing: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  ReIDDataset ds{split, {}};
  for (const auto& f : files) {
    const std::string rel = std::string(split_name(split)) + "/" + f.filename().string();
    const auto parsed = parse_reid_filename(f.filename().string());
    if (!parsed) {
      skipped.push_back({rel, "unparseable filename"});
      continue;
    }
    if (split == Split::kTrain && parsed->id < 0) {
      skipped.push_back({rel, "distractor identity in training split"});
      continue;
    }
    Item it;
    try {
      it.image = load_image(f);
    } catch (const DecodeError& e) {
      skipped.push_back({rel, e.what()});
      continue;
    }
    it.id = it.raw_id = parsed->id;
    it.cam = parsed->cam;
    it.path = rel;
    if (auto fl = flags.find(rel); fl != flags.end()) it.occluded = fl->second;
    ds.items.push_back(std::move(it));
  }
  return ds;
}

}  // namespace data_detail

/// Relabels training identities to 0..K-1 in ascending raw-id order.
inline void relabel_contiguous(ReIDDataset& ds) {
  std::map<int, int> remap;
  for (const auto& it : ds.items) remap.emplace(it.raw_id, 0);
  int next = 0;
  for (auto& [raw, label] : remap) label = next++;
  for (auto& it : ds.items) it.id = remap.at(it.raw_id);
}

/// Loads root/{train,query,gallery}. Files are visited in lexicographic order;
/// unparseable or undecodable files go to the skip report. If root/manifest.csv
/// exists its occluded column is attached to the items.
inline DatasetSplits load_directory(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("dataset root missing: " + root.string());
  DatasetSplits s;
  const auto flags = data_detail::read_occlusion_flags(root);
  s.train = data_detail::load_split(root, Split::kTrain, flags, s.skipped);
  s.query = data_detail::load_split(root, Split::kQuery, flags, s.skipped);
  s.gallery = data_detail::load_split(root, Split::kGallery, flags, s.skipped);
  if (s.gallery.items.empty()) throw DataError("gallery split is empty: " + (root / "gallery").string());
  if (s.query.items.empty()) throw DataError("query split is empty: " + (root / "query").string());
  relabel_contiguous(s.train);
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic pedestrians

enum class OccluderShape { kRectangle, kEllipse };

struct OcclusionProb {
  double train = 0.1;
  double query = 0.9;
  double gallery = 0.1;
};

struct SyntheticSpec {
  int num_ids = 20;          // training identities
  int num_test_ids = 20;     // held-out identities for query/gallery
  int images_per_id = 8;
  int query_per_id = 2;      // of images_per_id, how many test images become queries
  int num_cams = 4;
  Size2 image_size{64, 32};
  std::vector<OccluderShape> occluder_bank{OccluderShape::kRectangle, OccluderShape::kEllipse};
  OcclusionProb occlusion_prob;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_ids < 2 || num_test_ids < 1 || images_per_id < 1 || num_cams < 1) {
      throw ConfigError("synthetic: need num_ids >= 2, num_test_ids >= 1, images_per_id >= 1");
    }
    if (query_per_id < 1 || query_per_id >= images_per_id) {
      throw ConfigError("synthetic: query_per_id must lie in [1, images_per_id)");
    }
    if (image_size.height < 16 || image_size.width < 8) {
      throw ConfigError("synthetic: image_size must be at least 16x8");
    }
    if (occluder_bank.empty()) throw ConfigError("synthetic: occluder_bank is empty");
    for (double p : {occlusion_prob.train, occlusion_prob.query, occlusion_prob.gallery})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic: occlusion_prob must lie in [0, 1]");
  }
};

/// Identity-specific appearance, fixed for all images of the identity.
struct Appearance {
  std::array<double, 3> hair, skin, torso, torso_alt, legs, shoes, bag;
  int torso_pattern = 0;  // 0 solid, 1 horizontal bands, 2 vertical split, 3 chest block
  int bag_side = 0;       // 0 none, 1 left, 2 right
  double build = 1.0;     // relative body width
};

namespace synth_detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline Appearance make_appearance(int identity, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "appearance", static_cast<std::uint64_t>(identity)));
  constexpr double kGolden = 0.61803398874989484820;
  Appearance a;
  // Golden-ratio hue spacing keeps torso colours of nearby identities apart.
  const double torso_hue = std::fmod(0.13 + identity * kGolden, 1.0);
  const double leg_hue = std::fmod(0.57 + identity * kGolden * 2.3 + rng.uniform(0, 0.15), 1.0);
  a.torso = hsv_to_rgb(torso_hue, rng.uniform(0.55, 1.0), rng.uniform(0.55, 1.0));
  a.torso_alt = hsv_to_rgb(torso_hue + rng.uniform(0.25, 0.75), rng.uniform(0.3, 1.0),
                           rng.uniform(0.3, 1.0));
  a.legs = hsv_to_rgb(leg_hue, rng.uniform(0.2, 0.9), rng.uniform(0.15, 0.8));
  a.shoes = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.05, 0.5));
  a.hair = hsv_to_rgb(rng.uniform(0.02, 0.12), rng.uniform(0.3, 0.9), rng.uniform(0.05, 0.6));
  a.skin = hsv_to_rgb(rng.uniform(0.03, 0.1), rng.uniform(0.25, 0.6), rng.uniform(0.45, 0.95));
  a.bag = hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 1.0), rng.uniform(0.2, 0.9));
  a.torso_pattern = static_cast<int>(rng.uniform_int(0, 3));
  a.bag_side = static_cast<int>(rng.uniform_int(0, 2));
  a.build = rng.uniform(0.85, 1.15);
  return a;
}

struct Canvas {
  int h, w;
  std::vector<double> px;  // (y*w + x)*3 + c, in [0, 1]
  Canvas(int h_, int w_) : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_ * 3, 0.0) {}
  void put(int y, int x, const std::array<double, 3>& c) {
    if (y < 0 || y >= h || x < 0 || x >= w) return;
    for (int k = 0; k < 3; ++k) px[(static_cast<std::size_t>(y) * w + x) * 3 + k] = c[k];
  }
  void fill_rect(double y0, double x0, double y1, double x1, const std::array<double, 3>& c) {
    for (int y = static_cast<int>(std::lround(y0)); y < static_cast<int>(std::lround(y1)); ++y)
      for (int x = static_cast<int>(std::lround(x0)); x < static_cast<int>(std::lround(x1)); ++x)
        put(y, x, c);
  }
  void fill_ellipse(double cy, double cx, double ry, double rx, const std::array<double, 3>& c) {
    for (int y = static_cast<int>(cy - ry) - 1; y <= static_cast<int>(cy + ry) + 1; ++y)
      for (int x = static_cast<int>(cx - rx) - 1; x <= static_cast<int>(cx + rx) + 1; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) put(y, x, c);
      }
  }
};

inline std::array<double, 3> shade(const std::array<double, 3>& c, double gain,
                                   const std::array<double, 3>& tint) {
  return {c[0] * gain * tint[0], c[1] * gain * tint[1], c[2] * gain * tint[2]};
}

}  // namespace synth_detail

/// Renders one image of an identity. Pose, lighting and background vary with
/// the per-image rng; camera adds a colour tint.
inline RawImage render_pedestrian(const Appearance& a, int cam, Size2 size, bool occlude,
                                  const std::vector<OccluderShape>& bank, Rng& rng) {
  using synth_detail::shade;
  const double H = size.height, W = size.width;
  synth_detail::Canvas cv(size.height, size.width);

  Rng cam_rng(derive_seed(0xCA3E7A, "camera", static_cast<std::uint64_t>(cam)));
  const std::array<double, 3> tint{cam_rng.uniform(0.9, 1.1), cam_rng.uniform(0.9, 1.1),
                                   cam_rng.uniform(0.9, 1.1)};
  const double gain = rng.uniform(0.8, 1.2);

  // Background: vertical gradient between two random muted colours.
  const auto bg0 = synth_detail::hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.3), rng.uniform(0.3, 0.8));
  const auto bg1 = synth_detail::hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.3), rng.uniform(0.3, 0.8));
  for (int y = 0; y < size.height; ++y) {
    const double t = y / (H - 1);
    const std::array<double, 3> c{bg0[0] * (1 - t) + bg1[0] * t, bg0[1] * (1 - t) + bg1[1] * t,
                                  bg0[2] * (1 - t) + bg1[2] * t};
    for (int x = 0; x < size.width; ++x) cv.put(y, x, c);
  }

  const double cx = W / 2 + rng.uniform(-0.08, 0.08) * W;
  const double top = rng.uniform(0.02, 0.07) * H;
  const double bottom = H - rng.uniform(0.01, 0.05) * H;
  const double body_h = bottom - top;
  const double half_w = 0.22 * W * a.build * rng.uniform(0.92, 1.08);

  const double head_r = 0.065 * body_h;
  const double head_cy = top + head_r;
  const double torso_y0 = head_cy + head_r * 1.1;
  const double torso_y1 = top + 0.55 * body_h;
  const double legs_y1 = bottom - 0.04 * body_h;

  // Legs and shoes.
  const double leg_gap = 0.12 * half_w;
  cv.fill_rect(torso_y1, cx - half_w * 0.9, legs_y1, cx - leg_gap, shade(a.legs, gain, tint));
  cv.fill_rect(torso_y1, cx + leg_gap, legs_y1, cx + half_w * 0.9, shade(a.legs, gain, tint));
  cv.fill_rect(legs_y1, cx - half_w * 0.95, bottom, cx - leg_gap, shade(a.shoes, gain, tint));
  cv.fill_rect(legs_y1, cx + leg_gap, bottom, cx + half_w * 0.95, shade(a.shoes, gain, tint));

  // Torso with identity pattern.
  const auto t0 = shade(a.torso, gain, tint);
  const auto t1 = shade(a.torso_alt, gain, tint);
  for (int y = static_cast<int>(std::lround(torso_y0)); y < static_cast<int>(std::lround(torso_y1)); ++y) {
    for (int x = static_cast<int>(std::lround(cx - half_w)); x < static_cast<int>(std::lround(cx + half_w)); ++x) {
      bool alt = false;
      const double ry = (y - torso_y0) / (torso_y1 - torso_y0);
      switch (a.torso_pattern) {
        case 1: alt = static_cast<int>(ry * 6.0) % 2 == 1; break;
        case 2: alt = x >= cx; break;
        case 3: alt = ry > 0.2 && ry < 0.55 && std::abs(x + 0.5 - cx) < 0.45 * half_w; break;
        default: break;
      }
      cv.put(y, x, alt ? t1 : t0);
    }
  }
  // Arms.
  cv.fill_rect(torso_y0 + 1, cx - half_w - 0.22 * half_w, torso_y1 - 0.05 * body_h, cx - half_w, t0);
  cv.fill_rect(torso_y0 + 1, cx + half_w, torso_y1 - 0.05 * body_h, cx + half_w + 0.22 * half_w, t0);

  // Head and hair.
  cv.fill_ellipse(head_cy, cx, head_r, head_r * 0.85, shade(a.skin, gain, tint));
  cv.fill_rect(head_cy - head_r, cx - head_r * 0.85, head_cy - head_r * 0.3, cx + head_r * 0.85,
               shade(a.hair, gain, tint));

  if (a.bag_side != 0) {
    const double bx = a.bag_side == 1 ? cx - half_w - 0.5 * half_w : cx + half_w;
    cv.fill_rect(torso_y0 + 0.35 * (torso_y1 - torso_y0), bx, torso_y1 + 0.05 * body_h,
                 bx + 0.5 * half_w, shade(a.bag, gain, tint));
  }

  if (occlude) {
    const double g = rng.uniform(0.3, 0.7);
    const std::array<double, 3> grey{g, g, g};
    const auto shape = bank[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(bank.size()) - 1))];
    // Obstacles mostly hide the lower body or one side of the person.
    const int where = static_cast<int>(rng.uniform_int(0, 2));
    double y0, y1, x0, x1;
    if (where == 0) {
      y0 = H * rng.uniform(0.4, 0.6);
      y1 = H;
      x0 = W * rng.uniform(0.0, 0.2);
      x1 = W * rng.uniform(0.8, 1.0);
    } else {
      y0 = H * rng.uniform(0.1, 0.35);
      y1 = H * rng.uniform(0.75, 1.0);
      const double width = W * rng.uniform(0.4, 0.6);
      x0 = where == 1 ? 0.0 : W - width;
      x1 = x0 + width;
    }
    if (shape == OccluderShape::kRectangle) {
      cv.fill_rect(y0, x0, y1, x1, grey);
    } else {
      cv.fill_ellipse((y0 + y1) / 2, (x0 + x1) / 2, (y1 - y0) / 2 * 1.15, (x1 - x0) / 2 * 1.15, grey);
    }
  }

  RawImage out(size.height, size.width, 3);
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = cv.px[(static_cast<std::size_t>(y) * size.width + x) * 3 + c] * 255.0 +
                         rng.uniform(-6.0, 6.0);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return out;
}

/// Training identities 0..num_ids-1 and held-out identities
/// num_ids..num_ids+num_test_ids-1. Image k of an identity is taken by camera
/// 1 + k % num_cams; the first query_per_id images of a test identity are
/// queries, the rest gallery.
inline DatasetSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  DatasetSplits s;
  auto make_item = [&](int identity, int k, double occ_prob, const char* tag) {
    const Appearance a = synth_detail::make_appearance(identity, spec.seed);
    Rng rng(derive_seed(spec.seed, tag,
                        static_cast<std::uint64_t>(identity) * 100003ULL + static_cast<std::uint64_t>(k)));
    Item it;
    it.raw_id = it.id = identity;
    it.cam = 1 + k % spec.num_cams;
    it.occluded = rng.bernoulli(occ_prob);
    it.image = render_pedestrian(a, it.cam, spec.image_size, it.occluded, spec.occluder_bank, rng);
    return it;
  };
  for (int id = 0; id < spec.num_ids; ++id)
    for (int k = 0; k < spec.images_per_id; ++k)
      s.train.items.push_back(make_item(id, k, spec.occlusion_prob.train, "train"));
  for (int t = 0; t < spec.num_test_ids; ++t) {
    const int id = spec.num_ids + t;
    for (int k = 0; k < spec.images_per_id; ++k) {
      if (k < spec.query_per_id) {
        s.query.items.push_back(make_item(id, k, spec.occlusion_prob.query, "query"));
      } else {
        s.gallery.items.push_back(make_item(id, k, spec.occlusion_prob.gallery, "gallery"));
      }
    }
  }
  return s;
}

inline std::string reid_filename(const Item& it, int seq) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d_c%d_%04d.png", it.raw_id, it.cam, seq);
  return buf;
}

/// Writes root/{train,query,gallery}/*.png plus root/manifest.csv
/// (path,id,cam,occluded). Item paths are updated to the written names.
inline void write_dataset(DatasetSplits& s, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::ofstream manifest;
  fs::create_directories(root);
  manifest.open(root / "manifest.csv");
  if (!manifest) throw IoError("cannot write " + (root / "manifest.csv").string());
  manifest << "path,id,cam,occluded\n";
  for (ReIDDataset* ds : {&s.train, &s.query, &s.gallery}) {
    const fs::path dir = root / split_name(ds->split);
    fs::create_directories(dir);
    std::map<int, int> seq;
    for (auto& it : ds->items) {
      const std::string name = reid_filename(it, seq[it.raw_id]++);
      it.path = std::string(split_name(ds->split)) + "/" + name;
      save_image(dir / name, it.image);
      manifest << it.path << ',' << it.raw_id << ',' << it.cam << ',' << (it.occluded ? 1 : 0) << '\n';
    }
  }
  if (!manifest) throw IoError("failed writing manifest");
}

}  // namespace pade
