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

#include "lgnet/langir.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace lgnet {

namespace fs = std::filesystem;

namespace {

std::string fill(const std::string& tmpl, const std::string& id) {
  const auto pos = tmpl.find("<id>");
  if (pos == std::string::npos) throw std::logic_error("name template without <id>: " + tmpl);
  return tmpl.substr(0, pos) + id + tmpl.substr(pos + 4);
}

std::string prefix_of(const LangIRLayout& l) { return l.image_name_template.substr(0, l.image_name_template.find("<id>")); }

}  // namespace

LangIRLayout LangIRLayout::for_subset(Subset subset) {
  LangIRLayout l;
  l.subset = subset;
  switch (subset) {
    case Subset::langir_irstd:
      l.image_name_template = "XDU<id>.png";
      l.mask_name_template = "XDU<id>.png";
      l.description_name_template = "XDU<id>_description.txt";
      return l;
    case Subset::langir_sirst:
      l.image_name_template = "Misc_<id>.png";
      l.mask_name_template = "Misc_<id>_pixels0.png";
      l.description_name_template = "Misc_<id>_description.txt";
      return l;
    case Subset::synthetic:
      break;
  }
  throw std::invalid_argument("unknown LangIR subset '" + std::string(to_string(subset)) +
                              "' (expected langir_irstd or langir_sirst)");
}

std::string LangIRLayout::image_name(const std::string& id) const { return fill(image_name_template, id); }
std::string LangIRLayout::mask_name(const std::string& id) const { return fill(mask_name_template, id); }
std::string LangIRLayout::description_name(const std::string& id) const { return fill(description_name_template, id); }
std::string LangIRLayout::sample_name(const std::string& id) const { return prefix_of(*this) + id; }

std::string LangIRLayout::id_from_name(std::string name) const {
  const std::string prefix = prefix_of(*this);
  if (name.size() > 4 && name.compare(name.size() - 4, 4, ".png") == 0) name.resize(name.size() - 4);
  if (name.rfind(prefix, 0) == 0) name.erase(0, prefix.size());
  return name;
}

namespace {

struct PngImage {
  png_image info{};
  std::vector<std::uint8_t> pixels;
};

PngImage read_gray(const fs::path& path) {
  PngImage img;
  img.info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img.info, path.c_str()))
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.info.message);
  img.info.format = PNG_FORMAT_GRAY;
  img.pixels.resize(PNG_IMAGE_SIZE(img.info));
  if (!png_image_finish_read(&img.info, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = img.info.message;
    png_image_free(&img.info);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  return img;
}

void write_gray(const fs::path& path, const std::uint8_t* data, Eigen::Index h, Eigen::Index w) {
  png_image info{};
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(w);
  info.height = static_cast<png_uint_32>(h);
  info.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&info, path.c_str(), 0, data, 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + info.message);
}

}  // namespace

IRImage read_png_image(const fs::path& path) {
  auto png = read_gray(path);
  IRImage out;
  out.pixels.resize(png.info.height, png.info.width);
  for (std::size_t i = 0; i < png.pixels.size(); ++i) out.pixels.data()[i] = static_cast<float>(png.pixels[i]) / 255.0f;
  return out;
}

TargetMask read_png_mask(const fs::path& path) {
  auto png = read_gray(path);
  TargetMask out;
  out.pixels.resize(png.info.height, png.info.width);
  for (std::size_t i = 0; i < png.pixels.size(); ++i) out.pixels.data()[i] = png.pixels[i] > 127 ? 1 : 0;
  return out;
}

void write_png_image(const fs::path& path, const IRImage& image) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.pixels.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image.pixels.data()[i], 0.0f, 1.0f);
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  write_gray(path, bytes.data(), image.height(), image.width());
}

void write_png_mask(const fs::path& path, const TargetMask& mask) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(mask.pixels.size()));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.pixels.data()[i] ? 255 : 0;
  write_gray(path, bytes.data(), mask.height(), mask.width());
}

Bytes read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> read_split(const fs::path& path, const LangIRLayout& layout) {
  std::vector<std::string> ids;
  if (!fs::exists(path)) return ids;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line.erase(0, start);
    if (!line.empty()) ids.push_back(layout.id_from_name(line));
  }
  return ids;
}

}  // namespace

DatasetManifest write_langir(const fs::path& root, const LangIRLayout& layout, const std::vector<Sample>& samples) {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (s.image.id.empty()) throw std::invalid_argument("write_langir: sample without id");
    if (!seen.insert(s.image.id).second) throw std::invalid_argument("write_langir: duplicate id " + s.image.id);
  }
  for (const char* dir : {"images", "masks", "descriptions"}) fs::create_directories(root / dir);
  DatasetManifest m;
  m.root_path = root.string();
  m.subset = layout.subset;
  std::ostringstream train, test;
  for (const auto& s : samples) {
    const auto& id = s.image.id;
    write_png_image(root / "images" / layout.image_name(id), s.image);
    if (s.mask) write_png_mask(root / "masks" / layout.mask_name(id), *s.mask);
    if (s.prior) write_text(root / "descriptions" / layout.description_name(id), s.prior->text);
    (s.split == Split::train ? train : test) << layout.sample_name(id) << '\n';
    (s.split == Split::train ? m.train_ids : m.test_ids).push_back(id);
  }
  write_text(root / kTrainSplitFile, train.str());
  write_text(root / kTestSplitFile, test.str());
  return m;
}

Subset detect_subset(const fs::path& root) {
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw std::runtime_error("not a LangIR root (no images/ directory): " + root.string());
  for (const auto& e : fs::directory_iterator(images)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("XDU", 0) == 0) return Subset::langir_irstd;
    if (name.rfind("Misc_", 0) == 0) return Subset::langir_sirst;
  }
  throw std::runtime_error("cannot detect LangIR subset from image names in " + images.string());
}

LangIRDataset read_langir(const fs::path& root, std::optional<Subset> subset) {
  LangIRDataset ds;
  ds.layout = LangIRLayout::for_subset(subset ? *subset : detect_subset(root));
  ds.manifest.root_path = root.string();
  ds.manifest.subset = ds.layout.subset;
  if (!fs::exists(root / kTrainSplitFile) && !fs::exists(root / kTestSplitFile))
    throw std::runtime_error("LangIR root " + root.string() + " has neither trainval.txt nor test.txt");
  ds.manifest.train_ids = read_split(root / kTrainSplitFile, ds.layout);
  ds.manifest.test_ids = read_split(root / kTestSplitFile, ds.layout);
  const auto check = validate_manifest(ds.manifest);
  if (!check.ok()) throw std::runtime_error("invalid LangIR split files: " + check.issues.front());

  auto load = [&](const std::string& id, Split split) {
    const fs::path image = root / "images" / ds.layout.image_name(id);
    const fs::path mask = root / "masks" / ds.layout.mask_name(id);
    const fs::path desc = root / "descriptions" / ds.layout.description_name(id);
    if (!fs::exists(image)) throw std::runtime_error("sample " + id + ": missing image file " + image.filename().string());
    if (!fs::exists(mask)) throw std::runtime_error("sample " + id + ": missing mask file " + mask.filename().string());
    Sample s;
    s.image = read_png_image(image);
    s.image.id = id;
    s.mask = read_png_mask(mask);
    if (fs::exists(desc)) s.prior = LanguagePrior::from_text(read_text(desc), PriorSource::vlm, PromptStyle::system);
    s.split = split;
    ds.samples.push_back(std::move(s));
  };
  for (const auto& id : ds.manifest.train_ids) load(id, Split::train);
  for (const auto& id : ds.manifest.test_ids) load(id, Split::test);
  return ds;
}

}  // namespace lgnet
