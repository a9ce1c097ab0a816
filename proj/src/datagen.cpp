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

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace lgnet {

std::string encode_image_base64(const Bytes& bytes) {
  if (bytes.empty()) throw std::invalid_argument("encode_image_base64: empty input");
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes decode_base64(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("decode_base64: length is not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '=') {
      if (i + 2 < text.size()) throw std::invalid_argument("decode_base64: padding before the final block end");
      ++pad;
      continue;
    }
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '+' || ch == '/';
    if (!ok || pad > 0) throw std::invalid_argument("decode_base64: invalid character at offset " + std::to_string(i));
  }
  Bytes out(3 * text.size() / 4);
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw std::invalid_argument("decode_base64: malformed input");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string system_task_text(int max_words) {
  return "Locate the small target within the infrared image and respond succinctly within " + std::to_string(max_words) +
         " words, detailing the region where the target is situated.";
}

PromptPayload build_prompt(const Bytes& image_bytes, PromptStyle style, int max_words,
                           std::vector<FewShotExample> few_shot_examples) {
  if (max_words < 1) throw std::invalid_argument("build_prompt: max_words must be positive");
  const bool few = style == PromptStyle::few_shot;
  if (few && few_shot_examples.empty())
    throw std::invalid_argument("build_prompt: few_shot style needs at least one exemplar");
  if (!few && !few_shot_examples.empty())
    throw std::invalid_argument("build_prompt: exemplars are only used by the few_shot style");
  PromptPayload p;
  p.style = style;
  p.max_words = max_words;
  p.image_b64 = encode_image_base64(image_bytes);
  p.few_shot_examples = std::move(few_shot_examples);
  switch (style) {
    case PromptStyle::system:
      p.system_role = std::string(kSystemRole);
      p.task_text = system_task_text(max_words);
      break;
    case PromptStyle::few_shot:
    case PromptStyle::zero_shot:
      p.task_text = std::string(kZeroShotTask);
      break;
  }
  return p;
}

std::vector<std::string> keyword_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

CountTable count_keywords(std::string_view text) {
  CountTable t;
  for (const auto& tok : keyword_tokens(text)) {
    if (tok == "left") ++t.left;
    else if (tok == "right") ++t.right;
    else if (tok == "center") ++t.center;
    else if (tok == "lower") ++t.lower;
    else if (tok == "upper") ++t.upper;
  }
  return t;
}

}  // namespace

CountTable& CountTable::operator+=(const CountTable& o) {
  left += o.left;
  right += o.right;
  center += o.center;
  lower += o.lower;
  upper += o.upper;
  return *this;
}

CountTable word_count_stats(const std::vector<LanguagePrior>& descriptions) {
  CountTable t;
  for (const auto& d : descriptions) t += count_keywords(d.text);
  return t;
}

ValidationReport validate_description(std::string_view text, int max_words) {
  ValidationReport r;
  const int words = count_words(text);
  if (words > max_words)
    r.issues.push_back("word limit exceeded: " + std::to_string(words) + " > " + std::to_string(max_words));
  const CountTable k = count_keywords(text);
  if (k.left + k.right + k.center + k.lower + k.upper == 0)
    r.issues.emplace_back("missing positional keyword (left, right, center, lower, upper)");
  return r;
}

std::string_view to_string(Background b) {
  switch (b) {
    case Background::flat: return "flat";
    case Background::gradient: return "gradient";
    case Background::clutter: return "clutter";
  }
  return "?";
}

Background parse_background(std::string_view s) {
  if (s == "flat") return Background::flat;
  if (s == "gradient") return Background::gradient;
  if (s == "clutter") return Background::clutter;
  throw std::invalid_argument("unknown background '" + std::string(s) + "'");
}

DescriptionMode parse_description_mode(std::string_view s) {
  if (s == "quadrant") return DescriptionMode::quadrant;
  if (s == "positional") return DescriptionMode::positional;
  throw std::invalid_argument("unknown description mode '" + std::string(s) + "'");
}

namespace {

std::string number_word(std::size_t n) {
  static const char* words[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};
  return n < 10 ? words[n] : std::to_string(n);
}

}  // namespace

LanguagePrior synth_description(const TargetMask& mask, DescriptionMode mode) {
  const auto comps = connected_components(mask);
  if (comps.empty()) throw std::invalid_argument("synth_description: empty mask");
  const Component* best = &comps.front();
  for (const auto& c : comps)
    if (c.area() > best->area()) best = &c;
  const double h = static_cast<double>(mask.height()), w = static_cast<double>(mask.width());
  const double row = best->centroid_row, col = best->centroid_col;

  std::string text;
  if (mode == DescriptionMode::quadrant) {
    const std::string vert = row <= h / 2 ? "top" : "bottom";
    const std::string horiz = col <= w / 2 ? "left" : "right";
    text = "The small target lies in the " + vert + "-" + horiz + " quadrant.";
  } else {
    const std::string vert = row < h / 3 ? "upper" : (row >= 2 * h / 3 ? "lower" : "");
    const std::string horiz = col < w / 3 ? "left" : (col >= 2 * w / 3 ? "right" : "");
    std::string where;
    if (vert.empty() && horiz.empty())
      where = "near the center of the image";
    else if (vert.empty())
      where = "on the " + horiz + " side of the image, close to the vertical center";
    else if (horiz.empty())
      where = "in the " + vert + " part of the image, close to the horizontal center";
    else
      where = "in the " + vert + " " + horiz + " region of the image";
    const std::string size = best->area() <= 4 ? "tiny point-like" : (best->area() <= 12 ? "small" : "compact");
    std::ostringstream os;
    if (comps.size() == 1)
      os << "A " << size << " bright target appears " << where
         << ", standing out as a faint warm spot against the surrounding background.";
    else
      os << "There are " << number_word(comps.size()) << " small targets in the scene; the most prominent is a " << size
         << " bright spot " << where << ".";
    text = os.str();
  }
  return LanguagePrior::from_text(std::move(text), PriorSource::templated, PromptStyle::system);
}

}  // namespace lgnet
