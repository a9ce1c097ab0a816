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

// CLIP text and vision towers evaluated with Eigen, loaded from Hugging Face
// checkpoints. Inference only.

#pragma once

#include "lgnet/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lgnet::clip {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct StoredTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t numel() const;
};

/// Reads a .safetensors file. F32, F16 and BF16 are widened to float.
std::map<std::string, StoredTensor> read_safetensors(const std::filesystem::path& path);

/// Byte-level BPE with the CLIP pre-tokenizer: whitespace collapse,
/// lowercase, contraction/letter/digit/symbol split, "</w>" word suffix.
/// Non-ASCII bytes are grouped with letters and are not case-folded.
class Tokenizer {
 public:
  static Tokenizer load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt);

  /// bos + tokens + eos, truncated to max_length ids in total.
  std::vector<int> encode(std::string_view text, std::size_t max_length = 77) const;
  std::vector<std::string> pretokenize(std::string_view text) const;

  int bos() const { return bos_; }
  int eos() const { return eos_; }

 private:
  std::vector<int> bpe(const std::string& word) const;

  std::unordered_map<std::string, int> vocab_;
  std::unordered_map<std::string, int> ranks_;  // "a b" -> merge priority
  std::string byte_char_[256];
  int bos_ = -1, eos_ = -1;
};

struct EncoderConfig {
  Eigen::Index hidden = 0;
  Eigen::Index intermediate = 0;
  int layers = 0;
  int heads = 0;
  double layer_norm_eps = 1e-5;
  bool quick_gelu = true;
};

struct ModelConfig {
  EncoderConfig text, vision;
  Eigen::Index projection_dim = 0;
  Eigen::Index max_positions = 77;
  int eos_token_id = -1;
  int image_size = 224;
  int patch_size = 16;

  static ModelConfig from_json_file(const std::filesystem::path& path);
};

/// Resize (shortest side, bicubic, antialiased like PIL) then centre crop to
/// size x size. Gray is replicated to three channels and normalised with the
/// CLIP mean/std. Returns [3, size*size], channel-major.
RowMatrix preprocess(const IRImage& image, int size);

/// 8-bit single-channel bicubic resample matching PIL's fixed-point path.
Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> resize_bicubic(
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& src, Eigen::Index out_h,
    Eigen::Index out_w);

class Model {
 public:
  static Model load(const std::filesystem::path& dir);

  const ModelConfig& config() const { return config_; }

  /// Projected (not normalised) features.
  Eigen::VectorXf text_features(const std::vector<int>& ids) const;
  Eigen::VectorXf image_features(const RowMatrix& pixel_values) const;

 private:
  struct Linear {
    RowMatrix weight;  // [out, in]
    Eigen::RowVectorXf bias;
    bool has_bias = false;
  };
  struct Norm {
    Eigen::RowVectorXf weight, bias;
  };
  struct Layer {
    Norm ln1, ln2;
    Linear q, k, v, out, fc1, fc2;
  };
  struct Encoder {
    EncoderConfig cfg;
    std::vector<Layer> layers;
  };

  static RowMatrix apply(const Linear& l, const RowMatrix& x);
  static RowMatrix layer_norm(const Norm& n, const RowMatrix& x, double eps);
  static RowMatrix run(const Encoder& enc, RowMatrix x, bool causal);

  ModelConfig config_;
  RowMatrix token_embedding_, text_positions_;
  Encoder text_, vision_;
  Norm text_final_norm_;
  Linear text_projection_;
  RowMatrix patch_weight_;  // [hidden, 3*p*p]
  Eigen::RowVectorXf class_embedding_;
  RowMatrix vision_positions_;
  Norm pre_norm_, post_norm_;
  Linear visual_projection_;
};

}  // namespace lgnet::clip
