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

// Prompt assembly for description generation, description checks and
// keyword statistics, and the synthetic scene/description generator.

#pragma once

#include "lgnet/core.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lgnet {

using Bytes = std::vector<std::uint8_t>;

/// Standard padded base64. Throws on empty input.
std::string encode_image_base64(const Bytes& bytes);
/// Throws std::invalid_argument on characters outside the alphabet or bad padding.
Bytes decode_base64(std::string_view text);

inline constexpr int kDefaultMaxWords = 50;

inline constexpr std::string_view kSystemRole = "You are an expert who can locate the small target in the infrared image.";
inline constexpr std::string_view kZeroShotTask = "Detect the small target in the infrared image.";

/// Task sentence with the word limit filled in.
std::string system_task_text(int max_words = kDefaultMaxWords);

struct FewShotExample {
  std::string image_b64;
  std::string description;

  friend bool operator==(const FewShotExample&, const FewShotExample&) = default;
};

struct PromptPayload {
  PromptStyle style = PromptStyle::system;
  std::string system_role;
  std::string task_text;
  std::string image_b64;
  std::vector<FewShotExample> few_shot_examples;
  int max_words = kDefaultMaxWords;

  friend bool operator==(const PromptPayload&, const PromptPayload&) = default;
};

/// Few-shot prompts pair the plain question with caller-supplied exemplars,
/// which must be nonempty for that style and empty otherwise.
PromptPayload build_prompt(const Bytes& image_bytes, PromptStyle style, int max_words = kDefaultMaxWords,
                           std::vector<FewShotExample> few_shot_examples = {});

/// Reports an exceeded word limit and a missing positional keyword.
ValidationReport validate_description(std::string_view text, int max_words = kDefaultMaxWords);

struct CountTable {
  long left = 0;
  long right = 0;
  long center = 0;
  long lower = 0;
  long upper = 0;

  CountTable& operator+=(const CountTable& o);
  friend CountTable operator+(CountTable a, const CountTable& b) { return a += b; }
  friend bool operator==(const CountTable&, const CountTable&) = default;
};

/// Lower-cased tokens split on anything that is not a letter or digit.
std::vector<std::string> keyword_tokens(std::string_view text);

/// Counts every exact, case-insensitive occurrence of the five positional keywords.
CountTable word_count_stats(const std::vector<LanguagePrior>& descriptions);

enum class Background { flat, gradient, clutter };
std::string_view to_string(Background b);
Background parse_background(std::string_view s);

struct SceneParams {
  Eigen::Index height = 256;
  Eigen::Index width = 256;
  int num_targets = 1;
  double target_area_ratio = 0.001;  // total mask budget as a fraction of the image
  double contrast = 0.08;            // blob peak over local background, relative to base level
  double noise_sigma = 0.02;
  double base_level = 0.5;
  double clutter_std = 0.05;
  Background background = Background::clutter;
  std::uint64_t rng_seed = 0;
};

struct SyntheticScene {
  IRImage image;
  TargetMask mask;
};

/// Gaussian blobs on a background with sensor noise, quantized to 8 bits.
/// Each target is its own 8-connected component and the result always
/// passes spie_check; parameters that cannot meet it throw std::invalid_argument.
SyntheticScene synth_scene(const SceneParams& params);

enum class DescriptionMode { quadrant, positional };
DescriptionMode parse_description_mode(std::string_view s);

/// Templated prior from the mask's largest component. Throws on an empty mask.
LanguagePrior synth_description(const TargetMask& mask, DescriptionMode mode = DescriptionMode::positional);

}  // namespace lgnet
