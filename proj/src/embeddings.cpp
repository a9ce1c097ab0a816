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

#include "lgnet/embeddings.hpp"

#include "lgnet/clip.hpp"
#include "lgnet/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <stdexcept>

namespace lgnet {
namespace {

using Index = Eigen::Index;

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class StubProvider final : public EmbeddingProvider {
 public:
  StubProvider(std::uint64_t seed, Index dim) : seed_(seed), dim_(dim) {}

  Index dim() const override { return dim_; }
  std::string name() const override { return "stub"; }

  TextEmbedding encode_text(const LanguagePrior& prior) const override {
    EmbeddingVector v = 0.5f * hashed("text\x1f" + prior.text);
    for (const auto& tok : keyword_tokens(prior.text)) v += hashed("token\x1f" + tok);
    return {v.normalized()};
  }

  ImageEmbedding encode_image(const IRImage& image) const override {
    std::string key = "image\x1f" + std::to_string(image.height()) + "x" + std::to_string(image.width()) + "\x1f";
    key.reserve(key.size() + static_cast<std::size_t>(image.pixels.size()));
    for (Index i = 0; i < image.pixels.size(); ++i) {
      const float p = std::clamp(image.pixels.data()[i], 0.0f, 1.0f);
      key += static_cast<char>(std::lround(p * 255.0f));
    }
    return {hashed(key).normalized()};
  }

 private:
  EmbeddingVector hashed(std::string_view key) const {
    std::uint64_t state = fnv1a(key) ^ (seed_ * 0xD6E8FEB86659FD93ull);
    EmbeddingVector v(dim_);
    for (Index i = 0; i < dim_; ++i) {
      v[i] = static_cast<float>(static_cast<double>(splitmix(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    }
    return v;
  }

  std::uint64_t seed_;
  Index dim_;
};

struct RegistryEntry {
  const char* id;
  const char* dir;
  Index dim;
};

constexpr RegistryEntry kRegistry[] = {
    {"vit-b-16", "clip-vit-base-patch16", 512},
    {"openai/clip-vit-base-patch16", "clip-vit-base-patch16", 512},
    {"vit-b-32", "clip-vit-base-patch32", 512},
    {"openai/clip-vit-base-patch32", "clip-vit-base-patch32", 512},
    {"vit-l-14", "clip-vit-large-patch14", 768},
    {"openai/clip-vit-large-patch14", "clip-vit-large-patch14", 768},
};

const RegistryEntry* lookup(const std::string& model_id) {
  std::string key = model_id;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto& e : kRegistry)
    if (key == e.id) return &e;
  return nullptr;
}

std::filesystem::path env_path(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? std::filesystem::path(v) : std::filesystem::path{};
}

class ClipProvider final : public EmbeddingProvider {
 public:
  ClipProvider(std::string model_id, const std::filesystem::path& dir)
      : model_id_(std::move(model_id)),
        tokenizer_(clip::Tokenizer::load(dir / "vocab.json", dir / "merges.txt")),
        model_(clip::Model::load(dir)) {}

  Index dim() const override { return model_.config().projection_dim; }
  std::string name() const override { return model_id_; }

  TextEmbedding encode_text(const LanguagePrior& prior) const override {
    const auto ids = tokenizer_.encode(prior.text, static_cast<std::size_t>(model_.config().max_positions));
    return {model_.text_features(ids).normalized()};
  }

  ImageEmbedding encode_image(const IRImage& image) const override {
    return {model_.image_features(clip::preprocess(image, model_.config().image_size)).normalized()};
  }

 private:
  std::string model_id_;
  clip::Tokenizer tokenizer_;
  clip::Model model_;
};

}  // namespace

TargetDescriptor build_target_descriptor(const ImageEmbedding& image, const std::optional<TextEmbedding>& text) {
  if (image.vector.size() == 0) throw std::invalid_argument("image embedding is empty");
  TargetDescriptor td;
  td.vector = image.vector;
  if (text) {
    if (text->vector.size() != image.vector.size()) {
      throw std::invalid_argument("embedding dimension mismatch: image " + std::to_string(image.vector.size()) +
                                  ", text " + std::to_string(text->vector.size()));
    }
    td.vector += text->vector;
    td.has_language = true;
  }
  return td;
}

TargetDescriptor describe(const EmbeddingProvider& provider, const Sample& sample, bool use_language) {
  std::optional<TextEmbedding> text;
  if (use_language && sample.prior) text = provider.encode_text(*sample.prior);
  return build_target_descriptor(provider.encode_image(sample.image), text);
}

std::unique_ptr<EmbeddingProvider> stub_provider(std::uint64_t seed, Index dim) {
  if (dim <= 0) throw std::invalid_argument("stub_provider: dim must be positive");
  return std::make_unique<StubProvider>(seed, dim);
}

std::optional<Index> pretrained_model_dim(const std::string& model_id) {
  if (const auto* e = lookup(model_id)) return e->dim;
  return std::nullopt;
}

std::filesystem::path resolve_weights_dir(const std::string& model_id, const std::filesystem::path& weights_dir) {
  if (!weights_dir.empty()) return weights_dir;
  const auto* e = lookup(model_id);
  const std::string sub = e ? e->dir : model_id;
  if (const auto root = env_path("LGNET_CLIP_DIR"); !root.empty()) {
    if (std::filesystem::exists(root / sub / "config.json")) return root / sub;
    if (std::filesystem::exists(root / "config.json")) return root;
    return root / sub;
  }
  auto cache = env_path("XDG_CACHE_HOME");
  if (cache.empty()) cache = env_path("HOME") / ".cache";
  return cache / "lgnet" / sub;
}

std::unique_ptr<EmbeddingProvider> pretrained_provider(const std::string& model_id, const std::string& device,
                                                       const std::filesystem::path& weights_dir) {
  if (device != "cpu") throw std::invalid_argument("pretrained_provider: unsupported device '" + device + "' (cpu only)");
  const auto dir = resolve_weights_dir(model_id, weights_dir);
  for (const char* f : {"config.json", "model.safetensors", "vocab.json", "merges.txt"}) {
    if (!std::filesystem::exists(dir / f)) {
      throw std::runtime_error("pretrained weights for model '" + model_id + "' not found: missing " + (dir / f).string() +
                               " (set LGNET_CLIP_DIR or pass a weights directory)");
    }
  }
  auto p = std::make_unique<ClipProvider>(model_id, dir);
  if (const auto want = pretrained_model_dim(model_id); want && *want != p->dim()) {
    throw std::runtime_error("model '" + model_id + "' at " + dir.string() + " has embedding width " +
                             std::to_string(p->dim()) + ", expected " + std::to_string(*want));
  }
  return p;
}

}  // namespace lgnet
