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

// LangIR dataset layout:
//
//   root/images/        XDU<id>.png          | Misc_<id>.png
//   root/masks/         XDU<id>.png          | Misc_<id>_pixels0.png
//   root/descriptions/  XDU<id>_description.txt | Misc_<id>_description.txt
//   root/trainval.txt, root/test.txt  one sample name per line

#pragma once

#include "lgnet/core.hpp"
#include "lgnet/datagen.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lgnet {

struct LangIRLayout {
  Subset subset = Subset::langir_irstd;
  std::string image_name_template;
  std::string mask_name_template;
  std::string description_name_template;

  /// Throws for Subset::synthetic, which has no on-disk layout of its own.
  static LangIRLayout for_subset(Subset subset);

  std::string image_name(const std::string& id) const;
  std::string mask_name(const std::string& id) const;
  std::string description_name(const std::string& id) const;
  /// Sample name as listed in split files, e.g. "XDU7".
  std::string sample_name(const std::string& id) const;
  /// Accepts either a bare id or a prefixed sample name.
  std::string id_from_name(std::string name) const;
};

inline constexpr const char* kTrainSplitFile = "trainval.txt";
inline constexpr const char* kTestSplitFile = "test.txt";

/// 8-bit grayscale PNG. Colour inputs are reduced to gray by libpng.
IRImage read_png_image(const std::filesystem::path& path);
/// Foreground is any pixel above 127.
TargetMask read_png_mask(const std::filesystem::path& path);
/// Pixels are quantized to round(255 * v); values already on that grid round-trip exactly.
void write_png_image(const std::filesystem::path& path, const IRImage& image);
/// Written as 0 / 255.
void write_png_mask(const std::filesystem::path& path, const TargetMask& mask);
Bytes read_file_bytes(const std::filesystem::path& path);

/// Writes images, masks, descriptions and split files. Ids must be unique;
/// samples without a mask or prior are written without that file.
DatasetManifest write_langir(const std::filesystem::path& root, const LangIRLayout& layout,
                             const std::vector<Sample>& samples);

struct LangIRDataset {
  DatasetManifest manifest;
  LangIRLayout layout;
  std::vector<Sample> samples;  // train split first, then test, in file order
};

/// Reads a LangIR root. The subset is detected from the image names unless
/// given. A missing image or mask throws naming the id and the expected file;
/// a missing description leaves the prior empty.
LangIRDataset read_langir(const std::filesystem::path& root, std::optional<Subset> subset = std::nullopt);

Subset detect_subset(const std::filesystem::path& root);

}  // namespace lgnet
