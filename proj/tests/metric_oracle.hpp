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

// Brute-force metric oracle (test-only). Labels with union-find, matches by
// repeated global minimum search, counts pixels with plain loops.
#pragma once

#include "lgnet/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace lgnet::testing {

struct OracleBlob {
  std::vector<long> pixels;
  double r = 0, c = 0;
};

inline std::vector<OracleBlob> oracle_blobs(const TargetMask& m) {
  const long h = m.height(), w = m.width();
  std::vector<long> parent(static_cast<std::size_t>(h * w));
  std::iota(parent.begin(), parent.end(), 0L);
  auto find = [&](long x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  auto on = [&](long r, long c) { return r >= 0 && r < h && c >= 0 && c < w && m.pixels(r, c) != 0; };
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      if (!on(r, c)) continue;
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc)
          if (on(r + dr, c + dc)) {
            const long a = find(r * w + c), b = find((r + dr) * w + c + dc);
            parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
          }
    }
  // the root is each set's smallest index, so ordering by root is raster order
  std::map<long, OracleBlob> by_root;
  for (long p = 0; p < h * w; ++p)
    if (m.pixels.data()[p]) by_root[find(p)].pixels.push_back(p);
  std::vector<OracleBlob> out;
  for (auto& [root, b] : by_root) {
    for (long p : b.pixels) {
      b.r += double(p / w);
      b.c += double(p % w);
    }
    b.r /= double(b.pixels.size());
    b.c /= double(b.pixels.size());
    out.push_back(b);
  }
  return out;
}

struct OracleImage {
  long tp = 0, gt = 0, pred = 0, matched = 0, targets = 0, false_px = 0, total = 0;
};

inline OracleImage oracle_image(const TargetMask& pred, const TargetMask& gt, double tol) {
  OracleImage o;
  o.total = pred.pixels.size();
  for (long r = 0; r < pred.height(); ++r)
    for (long c = 0; c < pred.width(); ++c) {
      const bool p = pred.pixels(r, c) != 0, g = gt.pixels(r, c) != 0;
      o.tp += p && g;
      o.pred += p;
      o.gt += g;
    }
  const auto pb = oracle_blobs(pred);
  const auto gb = oracle_blobs(gt);
  o.targets = static_cast<long>(gb.size());
  auto shares = [](const OracleBlob& a, const OracleBlob& b) {
    for (long x : a.pixels)
      if (std::find(b.pixels.begin(), b.pixels.end(), x) != b.pixels.end()) return true;
    return false;
  };
  std::vector<bool> pu(pb.size()), gu(gb.size());
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    long bi = -1, bj = -1;
    for (std::size_t i = 0; i < pb.size(); ++i)
      for (std::size_t j = 0; j < gb.size(); ++j) {
        if (pu[i] || gu[j]) continue;
        const double d = std::sqrt((pb[i].r - gb[j].r) * (pb[i].r - gb[j].r) + (pb[i].c - gb[j].c) * (pb[i].c - gb[j].c));
        if (!(d <= tol || shares(pb[i], gb[j]))) continue;
        if (d < best) {  // strict: first (i, j) in scan order wins ties
          best = d;
          bi = long(i);
          bj = long(j);
        }
      }
    if (bi < 0) break;
    pu[static_cast<std::size_t>(bi)] = gu[static_cast<std::size_t>(bj)] = true;
    ++o.matched;
  }
  for (std::size_t i = 0; i < pb.size(); ++i)
    if (!pu[i]) o.false_px += long(pb[i].pixels.size());
  return o;
}

struct OracleMetrics {
  double iou = 0, niou = 0, pd = 0, fa = 0;
};

inline OracleMetrics oracle_metrics(const std::vector<OracleImage>& imgs) {
  OracleMetrics m;
  long inter = 0, uni = 0, with_targets = 0;
  for (const auto& o : imgs) {
    inter += o.tp;
    uni += o.gt + o.pred - o.tp;
    const long u = o.gt + o.pred - o.tp;
    m.niou += u == 0 ? 1.0 : double(o.tp) / double(u);
    if (o.targets > 0) {
      m.pd += double(o.matched) / double(o.targets);
      ++with_targets;
    }
    m.fa += double(o.false_px) / double(o.total);
  }
  m.iou = uni == 0 ? 1.0 : double(inter) / double(uni);
  m.niou /= double(imgs.size());
  m.pd = with_targets == 0 ? 1.0 : m.pd / double(with_targets);
  m.fa /= double(imgs.size());
  return m;
}

/// Sparse random blobs so masks have several components of varied size.
inline TargetMask random_mask(std::mt19937_64& rng, long h, long w) {
  std::uniform_int_distribution<int> blobs(0, 4), rad(0, 2);
  std::uniform_int_distribution<long> row(0, h - 1), col(0, w - 1);
  std::bernoulli_distribution speck(0.01);
  TargetMask m;
  m.pixels = MaskPixels::Zero(h, w);
  const int nb = blobs(rng);
  for (int b = 0; b < nb; ++b) {
    const long r0 = row(rng), c0 = col(rng);
    const int rr = rad(rng);
    for (long r = r0 - rr; r <= r0 + rr; ++r)
      for (long c = c0 - rr; c <= c0 + rr; ++c)
        if (r >= 0 && r < h && c >= 0 && c < w) m.pixels(r, c) = 1;
  }
  for (long i = 0; i < h * w; ++i)
    if (speck(rng)) m.pixels.data()[i] = 1;
  return m;
}

/// Prediction that perturbs gt: shifted copy plus noise, so matches, misses
/// and false alarms all occur.
inline TargetMask perturbed_mask(const TargetMask& gt, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> shift(-3, 3);
  const int dr = shift(rng), dc = shift(rng);
  TargetMask p;
  p.pixels = MaskPixels::Zero(gt.height(), gt.width());
  for (long r = 0; r < gt.height(); ++r)
    for (long c = 0; c < gt.width(); ++c) {
      const long sr = r - dr, sc = c - dc;
      if (sr >= 0 && sr < gt.height() && sc >= 0 && sc < gt.width()) p.pixels(r, c) = gt.pixels(sr, sc);
    }
  const auto extra = random_mask(rng, gt.height(), gt.width());
  std::bernoulli_distribution keep(0.85);
  for (long i = 0; i < p.pixels.size(); ++i) {
    if (p.pixels.data()[i] && !keep(rng)) p.pixels.data()[i] = 0;
    if (extra.pixels.data()[i] && keep(rng) && !keep(rng)) p.pixels.data()[i] = 1;
  }
  return p;
}

}  // namespace lgnet::testing
