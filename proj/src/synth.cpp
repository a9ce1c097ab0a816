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

#include "lgnet/datagen.hpp"

#include "lgnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lgnet {

namespace {

using Eigen::Index;
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kPlacementAttempts = 400;
constexpr int kSceneAttempts = 25;
// Targets sit where the background is close to its base level, which keeps
// the measured contrast and SNR near their design values.
constexpr double kMaxLocalDeviation = 0.02;

struct Offset {
  int dy, dx;
};

std::vector<Offset> disk(double radius) {
  std::vector<Offset> out;
  const int r = static_cast<int>(std::floor(radius));
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dy * dy + dx * dx <= radius * radius) out.push_back({dy, dx});
  return out;
}

// Largest disk radius, in quarter-pixel steps, whose area fits the budget.
double radius_for_budget(Index budget) {
  double best = 0;
  for (double r = 0; r <= 16; r += 0.25)
    if (static_cast<Index>(disk(r).size()) <= budget) best = r;
  return best;
}

Field background(const SceneParams& p, std::mt19937_64& rng) {
  Field b = Field::Constant(p.height, p.width, p.base_level);
  switch (p.background) {
    case Background::flat:
      break;
    case Background::gradient: {
      std::uniform_real_distribution<double> angle(0, 2 * M_PI);
      const double a = angle(rng);
      const double diag = std::hypot(double(p.height), double(p.width));
      for (Index y = 0; y < p.height; ++y)
        for (Index x = 0; x < p.width; ++x) {
          const double t = (std::cos(a) * (x - p.width / 2.0) + std::sin(a) * (y - p.height / 2.0)) / diag;
          b(y, x) += 2 * p.clutter_std * t;
        }
      break;
    }
    case Background::clutter: {
      // bilinear interpolation of a coarse random grid gives smooth low-frequency structure
      const Index cell = 16;
      const Index gh = p.height / cell + 2, gw = p.width / cell + 2;
      std::normal_distribution<double> n01(0, 1);
      Field g(gh, gw);
      for (Index i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
      Field f(p.height, p.width);
      for (Index y = 0; y < p.height; ++y)
        for (Index x = 0; x < p.width; ++x) {
          const double gy = double(y) / cell, gx = double(x) / cell;
          const Index y0 = Index(gy), x0 = Index(gx);
          const double ty = gy - y0, tx = gx - x0;
          f(y, x) = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                    ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
        }
      const double mean = f.mean();
      const double sd = std::sqrt((f.array() - mean).square().mean());
      if (sd > 0) b.array() += (f.array() - mean) * (p.clutter_std / sd);
      break;
    }
  }
  return b;
}

void check_params(const SceneParams& p) {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synth_scene: " + m); };
  if (p.height < kMinImageExtent || p.width < kMinImageExtent)
    fail("image must be at least " + std::to_string(kMinImageExtent) + " pixels on each side");
  if (p.num_targets < 1) fail("num_targets must be >= 1");
  if (!(p.target_area_ratio > 0) || p.target_area_ratio >= kSpieMaxAreaRatio)
    fail("target_area_ratio must lie in (0, " + std::to_string(kSpieMaxAreaRatio) + ")");
  if (!(p.contrast > 0)) fail("contrast must be positive");
  if (p.noise_sigma < 0 || p.clutter_std < 0) fail("noise_sigma and clutter_std must be >= 0");
  if (!(p.base_level > 0 && p.base_level < 1)) fail("base_level must lie in (0, 1)");
  const double budget = p.target_area_ratio * double(p.height * p.width) / p.num_targets;
  if (budget < 1) {
    std::ostringstream os;
    os << "infeasible: " << p.num_targets << " targets on " << p.height << "x" << p.width
       << " leave less than one mask pixel each under target_area_ratio " << p.target_area_ratio;
    fail(os.str());
  }
}

}  // namespace

SyntheticScene synth_scene(const SceneParams& p) {
  check_params(p);
  std::mt19937_64 rng(p.rng_seed);
  const Index budget = static_cast<Index>(p.target_area_ratio * double(p.height * p.width) / p.num_targets);
  const double radius = radius_for_budget(budget);
  const auto shape = disk(radius);
  const double sigma = std::max(0.6, (radius + 0.5) / 1.5);
  const double amplitude = p.contrast * p.base_level;
  const int margin = static_cast<int>(std::ceil(radius)) + 2;
  if (2 * margin >= p.height || 2 * margin >= p.width) throw std::invalid_argument("synth_scene: image too small for the target size");

  std::string last_failure;
  for (int scene = 0; scene < kSceneAttempts; ++scene) {
    const Field bg = background(p, rng);
    std::uniform_int_distribution<Index> ry(margin, p.height - 1 - margin), rx(margin, p.width - 1 - margin);
    std::vector<std::pair<Index, Index>> centres;
    for (int attempt = 0; attempt < kPlacementAttempts && static_cast<int>(centres.size()) < p.num_targets; ++attempt) {
      const Index cy = ry(rng), cx = rx(rng);
      bool clear = true;
      for (const auto& [oy, ox] : centres)
        if (std::hypot(double(cy - oy), double(cx - ox)) < 2 * radius + 3) clear = false;
      if (!clear) continue;
      double local = 0;
      for (const auto& o : shape) local += bg(cy + o.dy, cx + o.dx);
      local /= double(shape.size());
      if (std::abs(local - p.base_level) > kMaxLocalDeviation) continue;
      centres.emplace_back(cy, cx);
    }
    if (static_cast<int>(centres.size()) < p.num_targets) {
      last_failure = "could not place " + std::to_string(p.num_targets) + " separated targets";
      continue;
    }

    Field img = bg;
    TargetMask mask;
    mask.pixels = MaskPixels::Zero(p.height, p.width);
    const int reach = static_cast<int>(std::ceil(3 * sigma));
    for (const auto& [cy, cx] : centres) {
      for (const auto& o : shape) mask.pixels(cy + o.dy, cx + o.dx) = 1;
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx) {
          const Index y = cy + dy, x = cx + dx;
          if (y < 0 || y >= p.height || x < 0 || x >= p.width) continue;
          img(y, x) += amplitude * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
        }
    }
    std::normal_distribution<double> noise(0, p.noise_sigma);
    SyntheticScene s;
    s.image.pixels.resize(p.height, p.width);
    for (Index i = 0; i < img.size(); ++i) {
      const double v = std::clamp(img.data()[i] + (p.noise_sigma > 0 ? noise(rng) : 0.0), 0.0, 1.0);
      s.image.pixels.data()[i] = static_cast<float>(std::round(v * 255.0) / 255.0);
    }
    s.mask = std::move(mask);
    s.image.id = "synth_" + std::to_string(p.rng_seed);

    if (static_cast<int>(connected_components(s.mask).size()) != p.num_targets) {
      last_failure = "targets merged into fewer components";
      continue;
    }
    const auto r = spie_check(s.mask, s.image);
    if (r.is_small_target) return s;
    std::ostringstream os;
    os << "small-target check failed (area " << r.area_ratio << ", contrast " << r.contrast_ratio << ", snr " << r.snr
       << ")";
    last_failure = os.str();
  }
  throw std::invalid_argument("synth_scene: infeasible parameters, " + last_failure);
}

}  // namespace lgnet
