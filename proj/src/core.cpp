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

#include "lgnet/core.hpp"

#include <cctype>
#include <cmath>
#include <iostream>
#include <mutex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace lgnet {

namespace {
std::mutex sink_mutex;
WarningSink& sink_slot() {
  static WarningSink sink;
  return sink;
}
}  // namespace

void set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex);
  sink_slot() = std::move(sink);
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex);
  if (sink_slot())
    sink_slot()(message);
  else
    std::cerr << "warning: " << message << '\n';
}

std::string_view to_string(PriorSource s) {
  switch (s) {
    case PriorSource::vlm: return "vlm";
    case PriorSource::templated: return "template";
    case PriorSource::human: return "human";
  }
  return "?";
}

std::string_view to_string(PromptStyle s) {
  switch (s) {
    case PromptStyle::system: return "system";
    case PromptStyle::few_shot: return "few_shot";
    case PromptStyle::zero_shot: return "zero_shot";
  }
  return "?";
}

PromptStyle parse_prompt_style(std::string_view s) {
  if (s == "system") return PromptStyle::system;
  if (s == "few_shot" || s == "few-shot") return PromptStyle::few_shot;
  if (s == "zero_shot" || s == "zero-shot") return PromptStyle::zero_shot;
  throw std::invalid_argument("unknown prompt style '" + std::string(s) + "'");
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::langir_irstd: return "langir_irstd";
    case Subset::langir_sirst: return "langir_sirst";
    case Subset::synthetic: return "synthetic";
  }
  return "?";
}

Subset parse_subset(std::string_view s) {
  if (s == "langir_irstd" || s == "irstd") return Subset::langir_irstd;
  if (s == "langir_sirst" || s == "sirst") return Subset::langir_sirst;
  if (s == "synthetic") return Subset::synthetic;
  throw std::invalid_argument("unknown subset '" + std::string(s) + "'");
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

LanguagePrior LanguagePrior::from_text(std::string text, PriorSource source, PromptStyle style) {
  LanguagePrior p;
  p.word_count = count_words(text);
  p.text = std::move(text);
  p.source = source;
  p.style = style;
  return p;
}

bool ValidationReport::mentions(std::string_view needle) const {
  for (const auto& issue : issues)
    if (issue.find(needle) != std::string::npos) return true;
  return false;
}

ValidationReport validate_sample(const Sample& sample) {
  ValidationReport report;
  const auto& img = sample.image;
  if (img.id.empty()) report.issues.emplace_back("empty sample id");
  if (img.height() < kMinImageExtent || img.width() < kMinImageExtent) {
    std::ostringstream os;
    os << "image too small: " << img.height() << "x" << img.width() << " (minimum " << kMinImageExtent << ")";
    report.issues.push_back(os.str());
  }
  if (img.pixels.size() > 0) {
    if (!img.pixels.allFinite()) {
      report.issues.emplace_back("pixel out of range: non-finite value");
    } else if (img.pixels.minCoeff() < 0.0f || img.pixels.maxCoeff() > 1.0f) {
      std::ostringstream os;
      os << "pixel out of range: values span [" << img.pixels.minCoeff() << ", " << img.pixels.maxCoeff() << "]";
      report.issues.push_back(os.str());
    }
  }
  if (sample.mask) {
    const auto& m = sample.mask->pixels;
    if (m.rows() != img.height() || m.cols() != img.width()) {
      std::ostringstream os;
      os << "shape mismatch: mask " << m.rows() << "x" << m.cols() << " vs image " << img.height() << "x"
         << img.width();
      report.issues.push_back(os.str());
    }
    if (m.size() > 0 && m.maxCoeff() > 1) report.issues.emplace_back("mask not binary");
  } else if (sample.split == Split::train) {
    report.issues.emplace_back("missing mask for train sample");
  }
  if (sample.prior) {
    const auto& p = *sample.prior;
    if (p.word_count != count_words(p.text)) report.issues.emplace_back("prior word_count does not match text");
    if (p.text.empty()) report.issues.emplace_back("empty prior text");
  }
  return report;
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;
  std::unordered_set<std::string> train(manifest.train_ids.begin(), manifest.train_ids.end());
  if (train.size() != manifest.train_ids.size()) report.issues.emplace_back("duplicate train id");
  std::unordered_set<std::string> test;
  for (const auto& id : manifest.test_ids) {
    if (!test.insert(id).second) report.issues.emplace_back("duplicate test id " + id);
    if (train.count(id)) report.issues.push_back("id " + id + " appears in both train and test splits");
  }
  for (const auto* ids : {&manifest.train_ids, &manifest.test_ids})
    for (const auto& id : *ids)
      if (id.empty()) report.issues.emplace_back("empty id in split list");
  return report;
}

SpieReport spie_check(const TargetMask& mask, const IRImage& image) {
  if (mask.height() != image.height() || mask.width() != image.width())
    throw std::invalid_argument("spie_check: shape mismatch between mask and image");
  const Eigen::Index total = mask.pixels.size();
  double t_sum = 0, b_sum = 0;
  Eigen::Index t_count = 0;
  for (Eigen::Index i = 0; i < total; ++i) {
    const double v = image.pixels.data()[i];
    if (mask.pixels.data()[i]) {
      t_sum += v;
      ++t_count;
    } else {
      b_sum += v;
    }
  }
  if (t_count == 0) throw std::invalid_argument("no target");
  const Eigen::Index b_count = total - t_count;
  if (b_count == 0) throw std::invalid_argument("spie_check: mask covers the whole image, no background");
  const double t_mean = t_sum / static_cast<double>(t_count);
  const double b_mean = b_sum / static_cast<double>(b_count);
  double b_sq = 0;
  for (Eigen::Index i = 0; i < total; ++i)
    if (!mask.pixels.data()[i]) {
      const double d = image.pixels.data()[i] - b_mean;
      b_sq += d * d;
    }
  const double b_std = std::sqrt(b_sq / static_cast<double>(b_count));
  const double diff = std::abs(t_mean - b_mean);
  auto ratio = [](double num, double den) {
    if (den > 0) return num / den;
    return num == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  };

  SpieReport r;
  r.area_ratio = static_cast<double>(t_count) / static_cast<double>(total);
  r.contrast_ratio = ratio(diff, b_mean);
  r.snr = ratio(diff, b_std);
  r.is_small_target = r.area_ratio < kSpieMaxAreaRatio && r.contrast_ratio < kSpieMaxContrastRatio && r.snr < kSpieMaxSnr;
  return r;
}

}  // namespace lgnet
