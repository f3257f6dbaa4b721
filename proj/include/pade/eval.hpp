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

// Test-time descriptors, mAP / CMC retrieval metrics and the occlusion sweep.

#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pade/augment.hpp"
#include "pade/autograd.hpp"
#include "pade/config.hpp"
#include "pade/data.hpp"
#include "pade/error.hpp"
#include "pade/model.hpp"

namespace pade {

/// Concatenated [enhanced global | enhanced local 1 .. n] per image, one row each.
inline Matrix extract_descriptors(std::span<const ImageTensor> images, const Model& model,
                                  int batch_size = 64) {
  ag::NoGradGuard no_grad;
  const int dim = model.descriptor_dim();
  const Eigen::Index d = model.config.embed_dim;
  Matrix out(static_cast<Eigen::Index>(images.size()), dim);
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(images.size() - start, static_cast<std::size_t>(batch_size));
    const BranchInput in[] = {{Branch::kBase, images.subspan(start, count)}};
    const EnhancedBundle e = model.enhance(forward_branches(in, model.backbone, model.config));
    const auto rows = static_cast<Eigen::Index>(count);
    const auto r0 = static_cast<Eigen::Index>(start);
    out.block(r0, 0, rows, d) = e.g1_enhanced.value();
    for (std::size_t i = 0; i < e.locals_enhanced.size(); ++i)
      out.block(r0, static_cast<Eigen::Index>(i + 1) * d, rows, d) = e.locals_enhanced[i].value();
  }
  return out;
}

/// Descriptor of one raw image: deterministic base pipeline, no stochastic ops.
inline RowVector extract_descriptor(const RawImage& image, const Model& model,
                                    const AugmentConfig& aug) {
  const ImageTensor t = base_augment(image, aug);
  return extract_descriptors(std::span<const ImageTensor>(&t, 1), model).row(0);
}

inline std::vector<ImageTensor> base_tensors(const ReIDDataset& ds, const AugmentConfig& aug) {
  std::vector<ImageTensor> out;
  out.reserve(ds.items.size());
  for (const auto& it : ds.items) out.push_back(base_augment(it.image, aug));
  return out;
}

struct RetrievalMeta {
  std::vector<int> ids;
  std::vector<int> cams;

  static RetrievalMeta of(const ReIDDataset& ds) {
    RetrievalMeta m;
    for (const auto& it : ds.items) {
      m.ids.push_back(it.id);
      m.cams.push_back(it.cam);
    }
    return m;
  }
};

struct RetrievalResult {
  Matrix dist;                // Q x G
  std::vector<double> ap;     // per query; 0 for excluded queries
  std::vector<bool> valid;    // query had at least one valid positive
  double map = 0.0;
  std::vector<double> cmc;    // cmc[k]: fraction of valid queries with first hit at rank <= k + 1
  int num_valid = 0;
  int num_excluded = 0;

  double rank1() const { return cmc.empty() ? 0.0 : cmc.front(); }
};

inline Matrix distance_matrix(const Matrix& query, const Matrix& gallery,
                              Metric metric = Metric::kEuclidean) {
  if (query.cols() != gallery.cols()) {
    throw ConfigError("distance: query and gallery descriptor dimensions differ (" +
                      std::to_string(query.cols()) + " vs " + std::to_string(gallery.cols()) + ")");
  }
  Matrix d(query.rows(), gallery.rows());
  if (metric == Metric::kEuclidean) {
    for (Eigen::Index i = 0; i < query.rows(); ++i)
      for (Eigen::Index j = 0; j < gallery.rows(); ++j)
        d(i, j) = (query.row(i) - gallery.row(j)).norm();
  } else {
    const Eigen::VectorXd qn = query.rowwise().norm().cwiseMax(1e-12);
    const Eigen::VectorXd gn = gallery.rowwise().norm().cwiseMax(1e-12);
    for (Eigen::Index i = 0; i < query.rows(); ++i)
      for (Eigen::Index j = 0; j < gallery.rows(); ++j)
        d(i, j) = 1.0 - query.row(i).dot(gallery.row(j)) / (qn(i) * gn(j));
  }
  return d;
}

/// Standard Re-ID protocol on a precomputed distance matrix. Gallery entries
/// sharing both identity and camera with the query are ignored; ties in
/// distance are broken by gallery index. AP is the mean over positives of the
/// precision at each positive's rank.
inline RetrievalResult evaluate_distances(Matrix dist, const RetrievalMeta& query,
                                          const RetrievalMeta& gallery, int max_rank = 20) {
  const auto nq = dist.rows();
  const auto ng = dist.cols();
  if (static_cast<Eigen::Index>(query.ids.size()) != nq ||
      static_cast<Eigen::Index>(query.cams.size()) != nq ||
      static_cast<Eigen::Index>(gallery.ids.size()) != ng ||
      static_cast<Eigen::Index>(gallery.cams.size()) != ng) {
    throw ConfigError("evaluate: metadata does not match distance matrix");
  }
  if (max_rank < 1) throw ConfigError("evaluate: max_rank must be >= 1");
  RetrievalResult r;
  r.ap.assign(static_cast<std::size_t>(nq), 0.0);
  r.valid.assign(static_cast<std::size_t>(nq), false);
  std::vector<long long> first_hit_counts(static_cast<std::size_t>(max_rank), 0);
  double ap_sum = 0.0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(ng));
  for (Eigen::Index q = 0; q < nq; ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      const double da = dist(q, a), db = dist(q, b);
      return da < db || (da == db && a < b);
    });
    const int qid = query.ids[static_cast<std::size_t>(q)];
    const int qcam = query.cams[static_cast<std::size_t>(q)];
    long long rank = 0, hits = 0, first_hit = -1;
    double precision_sum = 0.0;
    for (Eigen::Index g : order) {
      const int gid = gallery.ids[static_cast<std::size_t>(g)];
      const int gcam = gallery.cams[static_cast<std::size_t>(g)];
      if (gid == qid && gcam == qcam) continue;
      ++rank;
      if (gid == qid) {
        ++hits;
        if (first_hit < 0) first_hit = rank;
        precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
      }
    }
    if (hits == 0) {
      ++r.num_excluded;
      continue;
    }
    r.valid[static_cast<std::size_t>(q)] = true;
    ++r.num_valid;
    const double ap = precision_sum / static_cast<double>(hits);
    r.ap[static_cast<std::size_t>(q)] = ap;
    ap_sum += ap;
    if (first_hit <= max_rank) ++first_hit_counts[static_cast<std::size_t>(first_hit - 1)];
  }
  r.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  if (r.num_valid > 0) {
    r.map = ap_sum / r.num_valid;
    long long cum = 0;
    for (int k = 0; k < max_rank; ++k) {
      cum += first_hit_counts[static_cast<std::size_t>(k)];
      r.cmc[static_cast<std::size_t>(k)] = static_cast<double>(cum) / r.num_valid;
    }
  }
  r.dist = std::move(dist);
  return r;
}

inline RetrievalResult compute_map_cmc(const Matrix& query_desc, const RetrievalMeta& query,
                                       const Matrix& gallery_desc, const RetrievalMeta& gallery,
                                       Metric metric = Metric::kEuclidean, int max_rank = 20) {
  return evaluate_distances(distance_matrix(query_desc, gallery_desc, metric), query, gallery,
                            max_rank);
}

/// Clean evaluation of a model on a query/gallery pair.
inline RetrievalResult evaluate_model(const Model& model, const ReIDDataset& query,
                                      const ReIDDataset& gallery, const RunConfig& cfg) {
  const auto qt = base_tensors(query, cfg.augment);
  const auto gt = base_tensors(gallery, cfg.augment);
  return compute_map_cmc(extract_descriptors(qt, model, cfg.eval.batch_size), RetrievalMeta::of(query),
                         extract_descriptors(gt, model, cfg.eval.batch_size),
                         RetrievalMeta::of(gallery), cfg.eval.metric, cfg.eval.max_rank);
}

// ---------------------------------------------------------------------------
// Occlusion sweep

struct SweepRow {
  double alpha = 0.0;
  double map = 0.0;
  double rank1 = 0.0;
  int erased_images = 0;  // perturbed images whose erase step fired
  int total_images = 0;
};

inline std::uint64_t sweep_alpha_seed(std::uint64_t seed, double alpha) {
  return derive_seed(seed, "alpha", static_cast<std::uint64_t>(std::llround(alpha * 1e6)));
}

/// For every alpha, queries (and the gallery unless disabled) are re-rendered
/// with the cropping pipeline (always) followed by erasing with probability
/// alpha, using seeds fixed per (alpha, split, index).
inline std::vector<SweepRow> occlusion_sweep(const Model& model, const ReIDDataset& query,
                                             const ReIDDataset& gallery, const RunConfig& cfg,
                                             const std::vector<double>& alphas) {
  const RetrievalMeta qm = RetrievalMeta::of(query);
  const RetrievalMeta gm = RetrievalMeta::of(gallery);
  Matrix clean_gallery;
  if (!cfg.eval.perturb_gallery)
    clean_gallery = extract_descriptors(base_tensors(gallery, cfg.augment), model, cfg.eval.batch_size);

  std::vector<SweepRow> rows;
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("sweep: alpha outside [0, 1]");
    const std::uint64_t aseed = sweep_alpha_seed(cfg.eval.sweep_seed, alpha);
    SweepRow row;
    row.alpha = alpha;
    auto perturb = [&](const ReIDDataset& ds, const char* tag) {
      std::vector<ImageTensor> out;
      out.reserve(ds.items.size());
      for (std::size_t i = 0; i < ds.items.size(); ++i) {
        RngTrace trace;
        out.push_back(occlusion_perturb(ds.items[i].image, cfg.augment, alpha,
                                        derive_seed(aseed, tag, i), &trace));
        row.erased_images += trace.erase.applied && !trace.erase.fallback ? 1 : 0;
        ++row.total_images;
      }
      return out;
    };
    const Matrix qd = extract_descriptors(perturb(query, "query"), model, cfg.eval.batch_size);
    const Matrix gd = cfg.eval.perturb_gallery
                          ? extract_descriptors(perturb(gallery, "gallery"), model, cfg.eval.batch_size)
                          : clean_gallery;
    const RetrievalResult r = compute_map_cmc(qd, qm, gd, gm, cfg.eval.metric, cfg.eval.max_rank);
    row.map = r.map;
    row.rank1 = r.rank1();
    rows.push_back(row);
  }
  return rows;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "alpha,map,rank1,erased_images,total_images\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.6f,%.6f,%d,%d\n", r.alpha, r.map, r.rank1,
                  r.erased_images, r.total_images);
    out << buf;
  }
}

/// Line plot of mAP and Rank-1 against alpha.
inline void plot_sweep(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  constexpr int kW = 640, kH = 420, kLeft = 70, kRight = 30, kTop = 40, kBottom = 60;
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double a) { return kLeft + static_cast<int>(std::lround(a * pw)); };
  auto py = [&](double v) { return kTop + static_cast<int>(std::lround((1.0 - v) * ph)); };
  const cv::Scalar axis(0, 0, 0), grid(220, 220, 220);
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    cv::line(img, {kLeft, py(v)}, {kLeft + pw, py(v)}, grid, 1);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    cv::putText(img, buf, {kLeft - 40, py(v) + 5}, font, 0.45, axis, 1, cv::LINE_8);
    cv::putText(img, buf, {px(v) - 10, kTop + ph + 22}, font, 0.45, axis, 1, cv::LINE_8);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, axis, 1);
  cv::putText(img, "erase probability (alpha)", {kLeft + pw / 2 - 110, kH - 15}, font, 0.5, axis,
              1, cv::LINE_8);
  cv::putText(img, "occlusion sweep", {kLeft, 25}, font, 0.6, axis, 1, cv::LINE_8);

  auto series = [&](auto value, const cv::Scalar& color, const char* label, int legend_y) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const cv::Point p{px(rows[i].alpha), py(value(rows[i]))};
      cv::circle(img, p, 4, color, cv::FILLED, cv::LINE_8);
      if (i > 0) cv::line(img, {px(rows[i - 1].alpha), py(value(rows[i - 1]))}, p, color, 2, cv::LINE_8);
    }
    cv::line(img, {kLeft + pw - 120, legend_y}, {kLeft + pw - 95, legend_y}, color, 2, cv::LINE_8);
    cv::putText(img, label, {kLeft + pw - 88, legend_y + 5}, font, 0.45, axis, 1, cv::LINE_8);
  };
  series([](const SweepRow& r) { return r.map; }, cv::Scalar(200, 80, 0), "mAP", kTop + 20);
  series([](const SweepRow& r) { return r.rank1; }, cv::Scalar(0, 0, 210), "Rank-1", kTop + 40);
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot " + path.string());
}

}  // namespace pade
