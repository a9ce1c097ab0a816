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

#include "lgnet/clip.hpp"
#include "lgnet/embeddings.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace lgnet;

namespace {

const std::filesystem::path kTiny = std::filesystem::path(LGNET_TEST_DATA) / "tiny_clip";

nlohmann::json expected() {
  std::ifstream in(kTiny / "expected.json");
  return nlohmann::json::parse(in);
}

ImageEmbedding img(std::initializer_list<float> v) { return {Eigen::Map<const Eigen::VectorXf>(v.begin(), v.size())}; }
TextEmbedding txt(std::initializer_list<float> v) { return {Eigen::Map<const Eigen::VectorXf>(v.begin(), v.size())}; }

IRImage gray_image(const nlohmann::json& e) {
  IRImage im;
  im.id = e["name"];
  const int h = e["height"], w = e["width"];
  im.pixels.resize(h, w);
  const auto px = e["pixels"].get<std::vector<int>>();
  for (int i = 0; i < h * w; ++i) im.pixels.data()[i] = static_cast<float>(px[i]) / 255.0f;
  return im;
}

float max_rel(const Eigen::VectorXf& got, const std::vector<float>& want) {
  const Eigen::Map<const Eigen::VectorXf> w(want.data(), static_cast<Eigen::Index>(want.size()));
  return (got - w).cwiseAbs().maxCoeff() / std::max(1.0f, w.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("target descriptor sums and keeps its shape") {
  auto a = build_target_descriptor(img({1, 2}), txt({0, 0}));
  CHECK(a.vector == Eigen::Vector2f(1, 2));
  CHECK(a.has_language);
  auto b = build_target_descriptor(img({1, 2}), std::nullopt);
  CHECK(b.vector == Eigen::Vector2f(1, 2));
  CHECK_FALSE(b.has_language);
  CHECK(b.dim() == a.dim());
  CHECK(build_target_descriptor(img({0.5f, -1}), txt({0.5f, 1})).vector == Eigen::Vector2f(1, 0));
  CHECK_THROWS_AS(build_target_descriptor(img({1, 2}), txt({1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(build_target_descriptor(ImageEmbedding{}, std::nullopt), std::invalid_argument);

  // commutative and linear in the text term
  const auto x = img({0.25f, -3, 7}), y = img({1, 1, -2});
  const auto c = txt({2, 0.5f, 0.125f});
  CHECK(build_target_descriptor(x, TextEmbedding{y.vector}).vector ==
        build_target_descriptor(y, TextEmbedding{x.vector}).vector);
  CHECK(build_target_descriptor(x, TextEmbedding{y.vector + c.vector}).vector ==
        build_target_descriptor(x, TextEmbedding{y.vector}).vector + c.vector);
}

TEST_CASE("stub provider") {
  auto p = stub_provider(11, 64);
  CHECK(p->dim() == 64);
  const auto left = p->encode_text(LanguagePrior::from_text("left"));
  const auto right = p->encode_text(LanguagePrior::from_text("right"));
  CHECK(left.vector == p->encode_text(LanguagePrior::from_text("left")).vector);
  CHECK(left.vector.dot(left.vector) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((left.vector - right.vector).cwiseAbs().maxCoeff() > 0.0f);
  CHECK(left.vector != stub_provider(12, 64)->encode_text(LanguagePrior::from_text("left")).vector);

  // shared keywords pull sentences together
  const auto a = p->encode_text(LanguagePrior::from_text("the target is in the upper left region"));
  const auto b = p->encode_text(LanguagePrior::from_text("upper left, near the edge"));
  const auto c = p->encode_text(LanguagePrior::from_text("lower right corner"));
  CHECK(a.vector.dot(b.vector) > a.vector.dot(c.vector));

  IRImage im;
  im.pixels = ImagePixels::Constant(16, 16, 0.5f);
  const auto e1 = p->encode_image(im);
  CHECK(e1.vector.size() == 64);
  CHECK(e1.vector.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(e1.vector == p->encode_image(im).vector);
  im.pixels(3, 3) = 0.9f;
  CHECK(e1.vector != p->encode_image(im).vector);
  CHECK_THROWS_AS(stub_provider(0, 0), std::invalid_argument);

  Sample s{im, std::nullopt, LanguagePrior::from_text("left"), Split::train};
  CHECK(describe(*p, s, true).has_language);
  CHECK_FALSE(describe(*p, s, false).has_language);
  CHECK(describe(*p, s, false).dim() == describe(*p, s, true).dim());
}

TEST_CASE("registry and missing weights") {
  CHECK(pretrained_model_dim("ViT-B-16") == 512);
  CHECK(pretrained_model_dim("openai/clip-vit-base-patch16") == 512);
  CHECK_FALSE(pretrained_model_dim("resnet").has_value());
  const auto nowhere = std::filesystem::temp_directory_path() / "lgnet_no_weights_here";
  CHECK_THROWS_WITH_AS(pretrained_provider("ViT-B-16", "cpu", nowhere), doctest::Contains("ViT-B-16"), std::runtime_error);
  CHECK_THROWS_AS(pretrained_provider("ViT-B-16", "cuda", kTiny), std::invalid_argument);
  // a registered id must match the checkpoint width
  CHECK_THROWS_WITH_AS(pretrained_provider("ViT-B-16", "cpu", kTiny), doctest::Contains("512"), std::runtime_error);
}

TEST_CASE("tokenizer matches reference ids") {
  const auto tok = clip::Tokenizer::load(kTiny / "vocab.json", kTiny / "merges.txt");
  for (const auto& t : expected()["texts"]) {
    CHECK_MESSAGE(tok.encode(t["text"].get<std::string>()) == t["ids"].get<std::vector<int>>(), t["text"]);
  }
  const std::vector<std::string> words{"it", "'s", "a", "$$", "1", "2", "x", "'", "y"};
  CHECK(tok.pretokenize("  It's A\t$$12 x' y") == words);
  std::string long_text;
  for (int i = 0; i < 200; ++i) long_text += "left ";
  const auto ids = tok.encode(long_text);
  CHECK(ids.size() == 77);
  CHECK(ids.front() == tok.bos());
  CHECK(ids.back() == tok.eos());
}

TEST_CASE("preprocessing matches reference pixel values") {
  for (const auto& e : expected()["images"]) {
    const auto pv = clip::preprocess(gray_image(e), 32);
    const auto want = e["pixel_values"].get<std::vector<float>>();
    REQUIRE(pv.size() == static_cast<Eigen::Index>(want.size()));
    const Eigen::Map<const Eigen::VectorXf> flat(pv.data(), pv.size());
    CHECK_MESSAGE(max_rel(flat, want) < 1e-5f, e["name"]);
  }
}

TEST_CASE("tiny CLIP features match reference") {
  const auto model = clip::Model::load(kTiny);
  const auto tok = clip::Tokenizer::load(kTiny / "vocab.json", kTiny / "merges.txt");
  const auto ex = expected();
  for (const auto& t : ex["texts"]) {
    const auto f = model.text_features(tok.encode(t["text"].get<std::string>()));
    CHECK_MESSAGE(max_rel(f, t["embedding"].get<std::vector<float>>()) < 1e-4f, t["text"]);
  }
  for (const auto& e : ex["images"]) {
    const auto f = model.image_features(clip::preprocess(gray_image(e), model.config().image_size));
    CHECK_MESSAGE(max_rel(f, e["embedding"].get<std::vector<float>>()) < 1e-4f, e["name"]);
  }

  auto p = pretrained_provider("tiny", "cpu", kTiny);
  CHECK(p->dim() == 16);
  const auto im = gray_image(ex["images"][0]);
  const auto a = p->encode_image(im), b = p->encode_image(im);
  CHECK(a.vector == b.vector);
  CHECK(a.vector.allFinite());
  CHECK(a.vector.norm() == doctest::Approx(1.0).epsilon(1e-5));
  const auto t = p->encode_text(LanguagePrior::from_text("upper left"));
  CHECK(t.vector.allFinite());
  CHECK(build_target_descriptor(a, t).dim() == 16);
}

TEST_CASE("safetensors half precision") {
  const auto dir = std::filesystem::temp_directory_path() / "lgnet_st_test";
  std::filesystem::create_directories(dir);
  const std::string header = R"({"a":{"dtype":"F16","shape":[2],"data_offsets":[0,4]},"b":{"dtype":"BF16","shape":[1],"data_offsets":[4,6]}})";
  std::ofstream out(dir / "t.safetensors", std::ios::binary);
  const std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xFF));
  out << header;
  // 1.0 = 0x3C00, -2.0 = 0xC000 (f16); 0.5 = 0x3F00 (bf16)
  for (unsigned char c : {0x00, 0x3C, 0x00, 0xC0, 0x00, 0x3F}) out.put(static_cast<char>(c));
  out.close();
  const auto t = clip::read_safetensors(dir / "t.safetensors");
  CHECK(t.at("a").values == std::vector<float>{1.0f, -2.0f});
  CHECK(t.at("b").values == std::vector<float>{0.5f});
  std::filesystem::remove_all(dir);
}
