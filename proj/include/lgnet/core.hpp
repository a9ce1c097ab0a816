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

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lgnet {

using ImagePixels = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskPixels = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Eigen::Index kMinImageExtent = 16;

/// Receives recoverable warnings (excluded images, retries). Defaults to stderr.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

/// Single-channel infrared frame with intensities in [0, 1].
struct IRImage {
  ImagePixels pixels;
  std::string id;

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
};

/// Binary ground truth; every value is 0 or 1.
struct TargetMask {
  MaskPixels pixels;

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
  Eigen::Index foreground() const { return pixels.cast<Eigen::Index>().sum(); }
};

enum class PriorSource { vlm, templated, human };
enum class PromptStyle { system, few_shot, zero_shot };

std::string_view to_string(PriorSource s);
std::string_view to_string(PromptStyle s);
PromptStyle parse_prompt_style(std::string_view s);

/// Number of whitespace-delimited tokens.
int count_words(std::string_view text);

/// Textual description of where the target is.
struct LanguagePrior {
  std::string text;
  int word_count = 0;
  PriorSource source = PriorSource::vlm;
  PromptStyle style = PromptStyle::system;

  static LanguagePrior from_text(std::string text, PriorSource source = PriorSource::vlm,
                                 PromptStyle style = PromptStyle::system);
};

enum class Split { train, test };

struct Sample {
  IRImage image;
  std::optional<TargetMask> mask;
  std::optional<LanguagePrior> prior;
  Split split = Split::train;
};

enum class Subset { langir_irstd, langir_sirst, synthetic };

std::string_view to_string(Subset s);
Subset parse_subset(std::string_view s);

struct DatasetManifest {
  std::string root_path;
  Subset subset = Subset::synthetic;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Collected invariant violations; empty means valid.
struct ValidationReport {
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
  bool mentions(std::string_view needle) const;
};

/// Checks every Sample invariant and reports each violation. Never throws.
ValidationReport validate_sample(const Sample& sample);

/// Disjoint splits, nonempty ids. File resolution is checked by the LangIR reader.
ValidationReport validate_manifest(const DatasetManifest& manifest);

/// Small-target criteria measured with the mask complement as background.
struct SpieReport {
  double area_ratio = 0;
  double contrast_ratio = 0;
  double snr = 0;
  bool is_small_target = false;
};

inline constexpr double kSpieMaxAreaRatio = 0.0015;
inline constexpr double kSpieMaxContrastRatio = 0.15;
inline constexpr double kSpieMaxSnr = 1.5;

/// Throws std::invalid_argument("no target") for an empty mask.
SpieReport spie_check(const TargetMask& mask, const IRImage& image);

}  // namespace lgnet
