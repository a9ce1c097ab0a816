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

// Text and image embeddings and the target descriptor built from them.

#pragma once

#include "lgnet/core.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace lgnet {

using EmbeddingVector = Eigen::VectorXf;

struct TextEmbedding {
  EmbeddingVector vector;
};

struct ImageEmbedding {
  EmbeddingVector vector;
};

/// Image embedding plus the text embedding when a prior was supplied. The
/// dimension never depends on has_language.
struct TargetDescriptor {
  EmbeddingVector vector;
  bool has_language = false;

  Eigen::Index dim() const { return vector.size(); }
};

/// TD = I_e + T_e, or I_e alone when text is absent. Throws on a dimension
/// mismatch or an empty image embedding.
TargetDescriptor build_target_descriptor(const ImageEmbedding& image, const std::optional<TextEmbedding>& text);

/// Joint text/image encoder. Implementations are read-only after construction
/// and may be called from several threads.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Eigen::Index dim() const = 0;
  virtual std::string name() const = 0;
  virtual TextEmbedding encode_text(const LanguagePrior& prior) const = 0;
  virtual ImageEmbedding encode_image(const IRImage& image) const = 0;
};

/// Encodes a sample: image always, text only when use_language and a prior
/// is present.
TargetDescriptor describe(const EmbeddingProvider& provider, const Sample& sample, bool use_language);

/// Offline provider hashing tokens and pixel bytes to unit vectors. Texts
/// sharing keywords land close together, so the stub still carries a
/// positional signal.
std::unique_ptr<EmbeddingProvider> stub_provider(std::uint64_t seed, Eigen::Index dim = 512);

/// Embedding width of a registered model id ("ViT-B-16", ...), if known.
std::optional<Eigen::Index> pretrained_model_dim(const std::string& model_id);

/// Directory searched for a model: weights_dir if given, otherwise
/// $LGNET_CLIP_DIR/<name> (or $LGNET_CLIP_DIR itself), otherwise
/// ~/.cache/lgnet/<name>.
std::filesystem::path resolve_weights_dir(const std::string& model_id, const std::filesystem::path& weights_dir = {});

/// CLIP provider over a Hugging Face style checkpoint (config.json,
/// model.safetensors, vocab.json, merges.txt). Features are L2-normalised.
/// Only device "cpu" exists. Missing files raise std::runtime_error naming
/// the model.
std::unique_ptr<EmbeddingProvider> pretrained_provider(const std::string& model_id, const std::string& device = "cpu",
                                                       const std::filesystem::path& weights_dir = {});

}  // namespace lgnet
