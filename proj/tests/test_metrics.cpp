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

#include "doctest.h"
#include "metric_oracle.hpp"

#include "lgnet/metrics.hpp"

#include <string>
#include <vector>

using namespace lgnet;
using namespace lgnet::testing;

namespace {

TargetMask mask_from(std::initializer_list<std::initializer_list<int>> rows) {
  TargetMask m;
  m.pixels = MaskPixels::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (int v : row) m.pixels(r, c++) = static_cast<std::uint8_t>(v);
    ++r;
  }
  return m;
}

TargetMask blank(Eigen::Index h, Eigen::Index w) {
  TargetMask m;
  m.pixels = MaskPixels::Zero(h, w);
  return m;
}

void square(TargetMask& m, Eigen::Index r, Eigen::Index c, Eigen::Index size) {
  m.pixels.block(r, c, size, size).setOnes();
}

struct SilenceWarnings {
  std::vector<std::string> seen;
  SilenceWarnings() {
    set_warning_sink([this](std::string_view s) { seen.emplace_back(s); });
  }
  ~SilenceWarnings() { set_warning_sink({}); }
};

}  // namespace

TEST_CASE("binarize uses a strict threshold") {
  CHECK(binarize(ImagePixels::Constant(4, 4, 0.9f)).pixels.cast<int>().sum() == 16);
  CHECK(binarize(ImagePixels::Constant(4, 4, 0.5f)).pixels.cast<int>().sum() == 0);
  ImagePixels p(3, 5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  const auto m = binarize(p, 0.3);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) CHECK(m.pixels(r, c) == (p(r, c) > 0.3f ? 1 : 0));
  CHECK_THROWS_AS(binarize(p, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(binarize(p, 0.0), std::invalid_argument);
}

TEST_CASE("iou examples") {
  MetricAccumulator same;
  std::mt19937_64 rng(3);
  auto gt = random_mask(rng, 20, 20);
  same.add(gt, gt);
  CHECK(iou(same) == 1.0);

  MetricAccumulator disjoint;
  auto a = blank(10, 10), b = blank(10, 10);
  square(a, 0, 0, 2);
  square(b, 5, 5, 2);
  disjoint.add(a, b);
  CHECK(iou(disjoint) == 0.0);

  MetricAccumulator hand;
  hand.add(mask_from({{1, 1}, {0, 0}}), mask_from({{0, 1}, {0, 1}}));
  CHECK(hand.images()[0].tp == 1);
  CHECK(iou(hand) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(niou(hand) == iou(hand));

  MetricAccumulator empty;
  empty.add(blank(8, 8), blank(8, 8));
  CHECK(iou(empty) == 1.0);
  CHECK(niou(empty) == 1.0);
}

TEST_CASE("niou averages per-image ratios") {
  MetricAccumulator acc;
  auto g = blank(8, 8);
  square(g, 1, 1, 2);
  acc.add(g, g);
  auto p = blank(8, 8);
  square(p, 1, 1, 2);
  auto g2 = p;
  g2.pixels(1, 3) = g2.pixels(2, 3) = g2.pixels(3, 1) = g2.pixels(3, 2) = 1;  // 8 px, p has 4 -> 0.5
  acc.add(p, g2);
  CHECK(niou(acc) == doctest::Approx(0.75).epsilon(1e-15));

  MetricAccumulator twice;
  twice.add(p, g2);
  twice.add(p, g2);
  CHECK(niou(twice) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("match_components") {
  auto g = blank(20, 20);
  square(g, 5, 5, 3);
  auto m = match_components(g, g);
  CHECK(m.matches.size() == 1);

  auto far = blank(20, 20);
  square(far, 5, 15, 3);  // centroid 10 px away
  CHECK(match_components(far, g, 3.0).matches.empty());

  auto two = blank(20, 20);
  square(two, 5, 5, 2);
  square(two, 5, 9, 2);
  auto wide = blank(20, 20);
  wide.pixels.block(5, 5, 2, 6).setOnes();
  auto mm = match_components(wide, two);
  CHECK(mm.gt_components.size() == 2);
  CHECK(mm.pred_components.size() == 1);
  REQUIRE(mm.matches.size() == 1);
  // both gt blobs overlap at equal centroid distance; the lower gt index wins
  CHECK(mm.matches[0] == std::pair<int, int>{0, 0});

  // an overlap-free pair within tolerance still matches
  auto near = blank(20, 20);
  square(near, 6, 9, 1);  // centroid exactly 3 px away
  CHECK(match_components(near, g, 3.0).matches.size() == 1);

  // diagonal neighbours are one component
  CHECK(connected_components(mask_from({{1, 0}, {0, 1}})).size() == 1);
}

TEST_CASE("pd and fa anchors") {
  auto g = blank(40, 40);
  square(g, 2, 2, 2);
  square(g, 20, 20, 2);
  square(g, 30, 5, 2);
  auto p = blank(40, 40);
  square(p, 2, 2, 2);
  square(p, 20, 20, 2);
  MetricAccumulator acc;
  acc.add(p, g);
  CHECK(pd(acc) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  MetricAccumulator all;
  all.add(g, g);
  CHECK(pd(all) == 1.0);
  CHECK(fa(all) == 0.0);

  auto gt100 = blank(100, 100);
  square(gt100, 10, 10, 3);
  auto pred100 = gt100;
  pred100.pixels.block(60, 60, 1, 5).setOnes();
  MetricAccumulator f;
  f.add(pred100, gt100);
  CHECK(fa(f) == doctest::Approx(5e-4).epsilon(1e-15));
}

TEST_CASE("pd skips images without targets and warns") {
  SilenceWarnings w;
  auto g = blank(16, 16);
  square(g, 3, 3, 2);
  MetricAccumulator acc;
  acc.add(g, g);
  acc.add(blank(16, 16), blank(16, 16));
  CHECK(pd(acc) == 1.0);
  REQUIRE(w.seen.size() == 1);
  CHECK(w.seen[0].find("1 of 2") != std::string::npos);

  MetricAccumulator none;
  none.add(blank(16, 16), blank(16, 16));
  CHECK(pd(none) == 1.0);
}

TEST_CASE("metrics agree with the brute-force oracle") {
  SilenceWarnings w;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<long> ext(4, 32);
  MetricAccumulator acc;
  std::vector<OracleImage> oracle;
  for (int i = 0; i < 120; ++i) {
    const long h = ext(rng), wd = ext(rng);
    auto gt = random_mask(rng, h, wd);
    auto pr = perturbed_mask(gt, rng);
    acc.add(pr, gt);
    const auto o = oracle_image(pr, gt, kDefaultCentroidTol);
    oracle.push_back(o);
    const auto& c = acc.images().back();
    CHECK(c.tp == o.tp);
    CHECK(c.gt_targets == o.targets);
    CHECK(c.matched_targets == o.matched);
    CHECK(c.false_pixels == o.false_px);
  }
  const auto om = oracle_metrics(oracle);
  CHECK(std::abs(iou(acc) - om.iou) <= 1e-12);
  CHECK(std::abs(niou(acc) - om.niou) <= 1e-12);
  CHECK(std::abs(pd(acc) - om.pd) <= 1e-12);
  CHECK(std::abs(fa(acc) - om.fa) <= 1e-12);
}

TEST_CASE("metric properties") {
  SilenceWarnings w;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    auto gt = random_mask(rng, 24, 24);
    auto pr = perturbed_mask(gt, rng);
    MetricAccumulator acc;
    acc.add(pr, gt);
    const double before = iou(acc);
    CHECK(before >= 0);
    CHECK(before <= 1);
    CHECK(niou(acc) == before);
    CHECK(fa(acc) >= 0);
    CHECK(pd(acc) <= 1);
    for (Eigen::Index k = 0; k < gt.pixels.size(); ++k)
      if (gt.pixels.data()[k] && !pr.pixels.data()[k]) {
        pr.pixels.data()[k] = 1;
        break;
      }
    MetricAccumulator after;
    after.add(pr, gt);
    CHECK(iou(after) >= before);
  }

  // pd depends only on the binarized mask
  auto gt = blank(16, 16);
  square(gt, 4, 4, 3);
  ImagePixels lo = ImagePixels::Zero(16, 16), hi = ImagePixels::Zero(16, 16);
  lo.block(4, 4, 3, 3).setConstant(0.6f);
  hi.block(4, 4, 3, 3).setConstant(0.99f);
  MetricAccumulator a, b;
  a.add(binarize(lo), gt);
  b.add(binarize(hi), gt);
  CHECK(pd(a) == pd(b));
}

TEST_CASE("accumulator merge and report serialization") {
  std::mt19937_64 rng(5);
  MetricAccumulator x, y, all;
  for (int i = 0; i < 6; ++i) {
    auto gt = random_mask(rng, 16, 16);
    gt.pixels(0, 0) = 1;
    auto pr = perturbed_mask(gt, rng);
    (i % 2 ? x : y).add(pr, gt);
    all.add(pr, gt);
  }
  MetricAccumulator xy = x, yx = y;
  xy.merge(y);
  yx.merge(x);
  CHECK(xy.n() == 6);
  CHECK(iou(xy) == doctest::Approx(iou(all)).epsilon(1e-15));
  CHECK(iou(yx) == doctest::Approx(iou(all)).epsilon(1e-15));
  CHECK(niou(yx) == doctest::Approx(niou(all)).epsilon(1e-15));

  const auto r = make_report(all, {0.4, 2.0});
  const auto back = MetricReport::from_json(r.to_json());
  CHECK(back.iou == r.iou);
  CHECK(back.fa == r.fa);
  CHECK(back.n == 6);
  CHECK(back.threshold == 0.4);
  CHECK(back.centroid_tol == 2.0);
  CHECK(r.to_text().find("niou ") != std::string::npos);

  ImageCounts bad;
  bad.tp = 3;
  bad.gt_pixels = 2;
  bad.pred_pixels = 5;
  CHECK_THROWS_AS(all.add(bad), std::invalid_argument);
  CHECK_THROWS_AS(iou(MetricAccumulator{}), std::invalid_argument);
}
