/**
 * Copyright 2026 The LGNet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Segmentation and detection metrics for small targets: pixel-level IoU and
// nIoU, object-level detection probability Pd and false-alarm rate Fa.

#pragma once

#include "lgnet/core.hpp"

#include <string>
#include <utility>
#include <vector>

namespace lgnet {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr double kDefaultCentroidTol = 3.0;

/// pixel = 1 iff prob > threshold. Throws if threshold is outside (0, 1).
TargetMask binarize(const ImagePixels& prob, double threshold = kDefaultThreshold);

/// 8-connected foreground region. Pixels are row-major linear indices in
/// ascending order.
struct Component {
  std::vector<Eigen::Index> pixels;
  double centroid_row = 0;
  double centroid_col = 0;

  Eigen::Index area() const { return static_cast<Eigen::Index>(pixels.size()); }
};

/// Components ordered by their first pixel in raster order.
std::vector<Component> connected_components(const TargetMask& mask);

struct ComponentMatch {
  std::vector<Component> pred_components;
  std::vector<Component> gt_components;
  std::vector<std::pair<int, int>> matches;  // (pred_idx, gt_idx)
};

/// A (pred, gt) pair is a candidate when the components share a pixel or
/// their centroids are at most `centroid_tol` apart. Candidates are taken
/// greedily by increasing centroid distance, ties by (pred_idx, gt_idx),
/// keeping the assignment one-to-one.
ComponentMatch match_components(const TargetMask& pred, const TargetMask& gt,
                                double centroid_tol = kDefaultCentroidTol);

/// Counts for one image. gt_pixels and pred_pixels are the two pixel sets
/// whose overlap is tp (the formula is symmetric in them).
struct ImageCounts {
  Eigen::Index tp = 0;
  Eigen::Index gt_pixels = 0;
  Eigen::Index pred_pixels = 0;
  Eigen::Index matched_targets = 0;  // N_pred: matched gt components
  Eigen::Index gt_targets = 0;       // N_all
  Eigen::Index false_pixels = 0;     // pixels of unmatched pred components
  Eigen::Index total_pixels = 0;     // H * W
};

struct MetricOptions {
  double threshold = kDefaultThreshold;
  double centroid_tol = kDefaultCentroidTol;
};

ImageCounts count_image(const TargetMask& pred, const TargetMask& gt, double centroid_tol = kDefaultCentroidTol);

/// Per-image counts; merge is concatenation, so per-worker accumulators can
/// be combined in any order.
class MetricAccumulator {
 public:
  void add(const TargetMask& pred, const TargetMask& gt, double centroid_tol = kDefaultCentroidTol);
  void add(const ImageCounts& counts);
  void merge(const MetricAccumulator& other);

  Eigen::Index n() const { return static_cast<Eigen::Index>(images_.size()); }
  const std::vector<ImageCounts>& images() const { return images_; }

 private:
  std::vector<ImageCounts> images_;
};

/// Dataset-level IoU: sums before the ratio. 1 if no image has any pred or gt pixel.
double iou(const MetricAccumulator& acc);

/// Mean of per-image IoU; an image with empty pred and gt scores 1.
double niou(const MetricAccumulator& acc);

/// Mean matched fraction over images with at least one gt target. Images
/// without targets are skipped with a warning; 1 when none has a target.
double pd(const MetricAccumulator& acc);

/// Mean over images of unmatched predicted pixels / image pixels.
double fa(const MetricAccumulator& acc);

struct MetricReport {
  double iou = 0;
  double niou = 0;
  double pd = 0;
  double fa = 0;
  Eigen::Index n = 0;
  double threshold = kDefaultThreshold;
  double centroid_tol = kDefaultCentroidTol;

  std::string to_json() const;
  /// One "key value" pair per line.
  std::string to_text() const;
  static MetricReport from_json(const std::string& text);
};

MetricReport make_report(const MetricAccumulator& acc, const MetricOptions& options = {});

}  // namespace lgnet
