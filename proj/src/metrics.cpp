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

#include "lgnet/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace lgnet {

using Eigen::Index;

TargetMask binarize(const ImagePixels& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("binarize: threshold must lie in (0, 1), got " + std::to_string(threshold));
  TargetMask m;
  m.pixels = (prob.array().cast<double>() > threshold).cast<std::uint8_t>();
  return m;
}

namespace {

// Label image (-1 background) plus components, seeded in raster order.
std::vector<int> label(const TargetMask& mask, std::vector<Component>& out) {
  const Index h = mask.height(), w = mask.width();
  std::vector<int> labels(static_cast<std::size_t>(h * w), -1);
  std::deque<Index> queue;
  for (Index start = 0; start < h * w; ++start) {
    if (!mask.pixels.data()[start] || labels[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(out.size());
    Component comp;
    labels[static_cast<std::size_t>(start)] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const Index p = queue.front();
      queue.pop_front();
      comp.pixels.push_back(p);
      const Index r = p / w, c = p % w;
      for (Index dr = -1; dr <= 1; ++dr)
        for (Index dc = -1; dc <= 1; ++dc) {
          const Index rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const Index q = rr * w + cc;
          if (!mask.pixels.data()[q] || labels[static_cast<std::size_t>(q)] >= 0) continue;
          labels[static_cast<std::size_t>(q)] = id;
          queue.push_back(q);
        }
    }
    std::sort(comp.pixels.begin(), comp.pixels.end());
    double sr = 0, sc = 0;
    for (Index p : comp.pixels) {
      sr += static_cast<double>(p / w);
      sc += static_cast<double>(p % w);
    }
    comp.centroid_row = sr / static_cast<double>(comp.area());
    comp.centroid_col = sc / static_cast<double>(comp.area());
    out.push_back(std::move(comp));
  }
  return labels;
}

void require_same_size(const TargetMask& a, const TargetMask& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument(std::string(what) + ": pred and gt sizes differ");
}

}  // namespace

std::vector<Component> connected_components(const TargetMask& mask) {
  std::vector<Component> comps;
  label(mask, comps);
  return comps;
}

ComponentMatch match_components(const TargetMask& pred, const TargetMask& gt, double centroid_tol) {
  require_same_size(pred, gt, "match_components");
  if (centroid_tol < 0) throw std::invalid_argument("match_components: centroid_tol must be >= 0");
  ComponentMatch m;
  const auto pred_labels = label(pred, m.pred_components);
  const auto gt_labels = label(gt, m.gt_components);

  std::set<std::pair<int, int>> overlapping;
  for (std::size_t i = 0; i < pred_labels.size(); ++i)
    if (pred_labels[i] >= 0 && gt_labels[i] >= 0) overlapping.emplace(pred_labels[i], gt_labels[i]);

  std::vector<std::tuple<double, int, int>> candidates;
  for (int p = 0; p < static_cast<int>(m.pred_components.size()); ++p)
    for (int g = 0; g < static_cast<int>(m.gt_components.size()); ++g) {
      const auto& a = m.pred_components[static_cast<std::size_t>(p)];
      const auto& b = m.gt_components[static_cast<std::size_t>(g)];
      const double d = std::hypot(a.centroid_row - b.centroid_row, a.centroid_col - b.centroid_col);
      if (d <= centroid_tol || overlapping.count({p, g})) candidates.emplace_back(d, p, g);
    }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> pred_used(m.pred_components.size(), 0), gt_used(m.gt_components.size(), 0);
  for (const auto& [d, p, g] : candidates) {
    if (pred_used[static_cast<std::size_t>(p)] || gt_used[static_cast<std::size_t>(g)]) continue;
    pred_used[static_cast<std::size_t>(p)] = gt_used[static_cast<std::size_t>(g)] = 1;
    m.matches.emplace_back(p, g);
  }
  return m;
}

ImageCounts count_image(const TargetMask& pred, const TargetMask& gt, double centroid_tol) {
  require_same_size(pred, gt, "count_image");
  ImageCounts c;
  const auto p = pred.pixels.array().cast<Index>();
  const auto g = gt.pixels.array().cast<Index>();
  c.tp = (p * g).sum();
  c.pred_pixels = p.sum();
  c.gt_pixels = g.sum();
  c.total_pixels = pred.pixels.size();

  const auto m = match_components(pred, gt, centroid_tol);
  c.gt_targets = static_cast<Index>(m.gt_components.size());
  c.matched_targets = static_cast<Index>(m.matches.size());
  std::vector<char> matched(m.pred_components.size(), 0);
  for (const auto& [pi, gi] : m.matches) matched[static_cast<std::size_t>(pi)] = 1;
  for (std::size_t i = 0; i < m.pred_components.size(); ++i)
    if (!matched[i]) c.false_pixels += m.pred_components[i].area();
  return c;
}

void MetricAccumulator::add(const TargetMask& pred, const TargetMask& gt, double centroid_tol) {
  images_.push_back(count_image(pred, gt, centroid_tol));
}

void MetricAccumulator::add(const ImageCounts& c) {
  if (c.tp < 0 || c.tp > std::min(c.gt_pixels, c.pred_pixels))
    throw std::invalid_argument("MetricAccumulator: tp exceeds min(gt_pixels, pred_pixels)");
  if (c.matched_targets < 0 || c.matched_targets > c.gt_targets)
    throw std::invalid_argument("MetricAccumulator: matched_targets exceeds gt_targets");
  if (c.false_pixels < 0 || c.false_pixels > c.total_pixels)
    throw std::invalid_argument("MetricAccumulator: false_pixels exceeds total_pixels");
  images_.push_back(c);
}

void MetricAccumulator::merge(const MetricAccumulator& other) {
  images_.insert(images_.end(), other.images_.begin(), other.images_.end());
}

namespace {
void require_images(const MetricAccumulator& acc, const char* what) {
  if (acc.n() < 1) throw std::invalid_argument(std::string(what) + ": accumulator is empty");
}
}  // namespace

double iou(const MetricAccumulator& acc) {
  require_images(acc, "iou");
  Index inter = 0, uni = 0;
  for (const auto& c : acc.images()) {
    inter += c.tp;
    uni += c.gt_pixels + c.pred_pixels - c.tp;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double niou(const MetricAccumulator& acc) {
  require_images(acc, "niou");
  double sum = 0;
  for (const auto& c : acc.images()) {
    const Index uni = c.gt_pixels + c.pred_pixels - c.tp;
    sum += uni == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(uni);
  }
  return sum / static_cast<double>(acc.n());
}

double pd(const MetricAccumulator& acc) {
  require_images(acc, "pd");
  double sum = 0;
  Index used = 0;
  for (const auto& c : acc.images()) {
    if (c.gt_targets == 0) continue;
    sum += static_cast<double>(c.matched_targets) / static_cast<double>(c.gt_targets);
    ++used;
  }
  if (used < acc.n()) {
    std::ostringstream os;
    os << "pd: " << (acc.n() - used) << " of " << acc.n() << " images have no ground-truth target and are excluded";
    warn(os.str());
  }
  if (used == 0) return 1.0;
  return sum / static_cast<double>(used);
}

double fa(const MetricAccumulator& acc) {
  require_images(acc, "fa");
  double sum = 0;
  for (const auto& c : acc.images())
    if (c.total_pixels > 0) sum += static_cast<double>(c.false_pixels) / static_cast<double>(c.total_pixels);
  return sum / static_cast<double>(acc.n());
}

MetricReport make_report(const MetricAccumulator& acc, const MetricOptions& options) {
  MetricReport r;
  r.iou = iou(acc);
  r.niou = niou(acc);
  r.pd = pd(acc);
  r.fa = fa(acc);
  r.n = acc.n();
  r.threshold = options.threshold;
  r.centroid_tol = options.centroid_tol;
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["iou"] = iou;
  j["niou"] = niou;
  j["pd"] = pd;
  j["fa"] = fa;
  j["n"] = n;
  j["threshold"] = threshold;
  j["centroid_tol"] = centroid_tol;
  return j.dump();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "iou " << iou << "\nniou " << niou << "\npd " << pd << "\nfa " << fa << "\nn " << n << "\nthreshold "
     << threshold << "\ncentroid_tol " << centroid_tol << '\n';
  return os.str();
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  r.iou = j.at("iou").get<double>();
  r.niou = j.at("niou").get<double>();
  r.pd = j.at("pd").get<double>();
  r.fa = j.at("fa").get<double>();
  r.n = j.at("n").get<Index>();
  r.threshold = j.value("threshold", kDefaultThreshold);
  r.centroid_tol = j.value("centroid_tol", kDefaultCentroidTol);
  return r;
}

}  // namespace lgnet
