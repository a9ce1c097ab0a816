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

// Language-guided encoder/decoder for small-target segmentation.
//
// Topology: E1..E5 residual U-blocks with 2x max-pooling between them, a
// bottleneck block D6 at E5's resolution, then D5..D1 going back up. The
// target descriptor gates E5 and D6 through language fusion blocks; every
// other encoder/decoder pair meets in a channel-attention fusion block. The
// output block merges the six decoder side outputs into the final map.

#pragma once

#include "lgnet/nn.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lgnet {

inline constexpr int kEncoderStages = 5;
inline constexpr int kDecoderStages = 6;

struct LGNetConfig {
  Index in_channels = 1;
  std::array<Index, kEncoderStages> stage_channels{16, 32, 64, 128, 256};
  std::array<Index, kEncoderStages> ublock_heights{7, 6, 5, 4, 4};
  Index descriptor_dim = 512;
  Index input_height = 512;
  Index input_width = 512;
  /// Initial foreground probability of every side output (bias logit(p),
  /// fuse weights 1/6). 0 keeps zero biases and random fuse weights.
  double output_prior = 0.01;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  friend bool operator==(const LGNetConfig&, const LGNetConfig&) = default;
};

/// Residual U-block: a local conv-bn-relu transform L(x) plus a U-shaped
/// path U over `height` levels (height-1 poolings, a dilated bottom conv, and
/// skip-concatenating decoder convs); returns U(L(x)) + L(x).
template <typename Scalar>
class ResidualUBlock {
 public:
  ResidualUBlock() = default;
  ResidualUBlock(ParameterSet<Scalar>& ps, const std::string& name, int height, Index in, Index mid, Index out);

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const;

  int height() const { return height_; }
  /// Smallest spatial extent the block accepts: 2^(height-1).
  Index min_extent() const { return Index(1) << (height_ - 1); }

 private:
  std::string name_;
  int height_ = 1;
  ConvBnRelu<Scalar> local_;
  std::vector<ConvBnRelu<Scalar>> down_;
  ConvBnRelu<Scalar> bottom_;
  std::vector<ConvBnRelu<Scalar>> up_;  // up_[0] produces the block output
};

/// GAP -> depth-wise conv -> batch norm -> sigmoid, giving [N, C, 1, 1] weights.
template <typename Scalar>
class ChannelGate {
 public:
  ChannelGate() = default;
  ChannelGate(ParameterSet<Scalar>& ps, const std::string& name, Index channels)
      : conv_(ps, name + ".dwconv", channels, channels, 1, ConvSpec{1, 0, 1, channels}, false),
        bn_(ps, name + ".bn", channels) {}

  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const {
    return sigmoid(bn_(conv_(global_avg_pool(x)), training));
  }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm2d<Scalar> bn_;
};

template <typename Scalar>
struct FusionResult {
  Var<Scalar> out;
  Var<Scalar> enc_gate;
  Var<Scalar> dec_gate;
};

/// Gates encoder and decoder features by their own channel attention and adds them.
template <typename Scalar>
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParameterSet<Scalar>& ps, const std::string& name, Index channels)
      : enc_(ps, name + ".enc_gate", channels), dec_(ps, name + ".dec_gate", channels) {}

  FusionResult<Scalar> operator()(const Var<Scalar>& enc, const Var<Scalar>& dec, bool training) const {
    require_same_shape(enc->value.shape(), dec->value.shape(), "fusion_block");
    FusionResult<Scalar> r;
    r.enc_gate = enc_(enc, training);
    r.dec_gate = dec_(dec, training);
    r.out = add(scale_channels(enc, r.enc_gate), scale_channels(dec, r.dec_gate));
    return r;
  }

 private:
  ChannelGate<Scalar> enc_;
  ChannelGate<Scalar> dec_;
};

/// Two-layer perceptron mapping a [N, D, 1, 1] descriptor to [N, C, 1, 1].
template <typename Scalar>
class TargetMlp {
 public:
  TargetMlp() = default;
  TargetMlp(ParameterSet<Scalar>& ps, const std::string& name, Index descriptor_dim, Index out_len)
      : fc1_(ps, name + ".fc1", descriptor_dim, out_len, 1, ConvSpec{}, true),
        fc2_(ps, name + ".fc2", out_len, out_len, 1, ConvSpec{}, true) {}

  Var<Scalar> operator()(const Var<Scalar>& td) const { return fc2_(relu(fc1_(td))); }

  const Conv2d<Scalar>& fc2() const { return fc2_; }

 private:
  Conv2d<Scalar> fc1_;
  Conv2d<Scalar> fc2_;
};

/// sigmoid(BN(grouped 1x1 conv over interleave(v1, v2), groups = 2)).
/// The 2C interleaved values are a 2C-channel 1x1 map; each group sees C of
/// them and emits C/2 weights.
template <typename Scalar>
class LanguageAttention {
 public:
  LanguageAttention() = default;
  LanguageAttention(ParameterSet<Scalar>& ps, const std::string& name, Index channels)
      : conv_(ps, name + ".gpconv", 2 * channels, channels, 1, ConvSpec{1, 0, 1, 2}, false),
        bn_(ps, name + ".bn", channels) {}

  Var<Scalar> operator()(const Var<Scalar>& v1, const Var<Scalar>& v2, bool training) const {
    return sigmoid(bn_(conv_(interleave(v1, v2)), training));
  }

  const Conv2d<Scalar>& conv() const { return conv_; }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm2d<Scalar> bn_;
};

template <typename Scalar>
struct LanguageFusionResult {
  Var<Scalar> out;
  Var<Scalar> weights;  // [N, C, 1, 1]
};

/// out[c] = w_c * feat[c] with w = attention(GAP(feat), MLP(td)).
template <typename Scalar>
class LanguageFusion {
 public:
  LanguageFusion() = default;
  LanguageFusion(ParameterSet<Scalar>& ps, const std::string& name, Index descriptor_dim, Index channels)
      : mlp_(ps, name + ".mlp", descriptor_dim, channels), attention_(ps, name + ".attn", channels) {}

  LanguageFusionResult<Scalar> operator()(const Var<Scalar>& feat, const Var<Scalar>& td, bool training) const {
    LanguageFusionResult<Scalar> r;
    r.weights = attention_(global_avg_pool(feat), mlp_(td), training);
    r.out = scale_channels(feat, r.weights);
    return r;
  }

  const TargetMlp<Scalar>& mlp() const { return mlp_; }
  const LanguageAttention<Scalar>& attention() const { return attention_; }

 private:
  TargetMlp<Scalar> mlp_;
  LanguageAttention<Scalar> attention_;
};

template <typename Scalar>
struct OutputBlockResult {
  Var<Scalar> final_logits;                            // [N, 1, H, W]
  std::array<Var<Scalar>, kDecoderStages> side_logits;  // D1..D6, upsampled to [N, 1, H, W]
  Var<Scalar> scale;                                   // sigmoid scaling weights [N, 1, H, W]
};

/// Projects each decoder to one channel at its native resolution, upsamples,
/// derives scaling weights from the three shallow maps and applies them to
/// the three deep maps, then merges all six with a point-wise conv.
template <typename Scalar>
class OutputBlock {
 public:
  OutputBlock() = default;
  OutputBlock(ParameterSet<Scalar>& ps, const std::string& name, const std::array<Index, kDecoderStages>& channels);

  OutputBlockResult<Scalar> operator()(const std::array<Var<Scalar>, kDecoderStages>& decoders, Index height,
                                       Index width) const;

 private:
  std::array<Conv2d<Scalar>, kDecoderStages> side_;
  Conv2d<Scalar> scale_;
  Conv2d<Scalar> fuse_;
};

/// Intermediate attention values recorded on every forward pass.
template <typename Scalar>
struct ForwardDiagnostics {
  Tensor<Scalar> lang_enc_weights;  // E5 language attention
  Tensor<Scalar> lang_dec_weights;  // D6 language attention
  std::vector<Tensor<Scalar>> fusion_gates;
  Tensor<Scalar> scale;
};

/// Differentiable result of a forward pass.
template <typename Scalar>
struct ForwardPass {
  Var<Scalar> final_logits;
  std::array<Var<Scalar>, kDecoderStages> side_logits;
  Var<Scalar> final_prob;
  std::array<Var<Scalar>, kDecoderStages> side_prob;
  ForwardDiagnostics<Scalar> diagnostics;
};

/// Probability maps of one forward pass, [N, 1, H, W] each.
template <typename Scalar>
struct ForwardOutputs {
  Tensor<Scalar> final;
  std::array<Tensor<Scalar>, kDecoderStages> side_outputs;
};

template <typename Scalar>
class LGNet {
 public:
  explicit LGNet(const LGNetConfig& config);
  LGNet(const LGNet&) = delete;
  LGNet& operator=(const LGNet&) = delete;

  /// images: [N, in_channels, H, W]; descriptors: [N, descriptor_dim, 1, 1].
  ForwardPass<Scalar> forward(const Var<Scalar>& images, const Var<Scalar>& descriptors, bool training) const;

  const LGNetConfig& config() const { return config_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  const LanguageFusion<Scalar>& language_fusion_encoder() const { return lang_enc_; }
  const LanguageFusion<Scalar>& language_fusion_decoder() const { return lang_dec_; }

 private:
  LGNetConfig config_;
  ParameterSet<Scalar> params_;
  std::array<ResidualUBlock<Scalar>, kEncoderStages> enc_;
  std::array<ResidualUBlock<Scalar>, kDecoderStages> dec_;  // dec_[i] is D(i+1)
  LanguageFusion<Scalar> lang_enc_;
  LanguageFusion<Scalar> lang_dec_;
  std::array<FusionBlock<Scalar>, kEncoderStages> fuse_;  // fuse_[i] feeds D(i+1)
  OutputBlock<Scalar> out_;
};

template <typename Scalar>
ForwardOutputs<Scalar> probabilities(const ForwardPass<Scalar>& pass) {
  ForwardOutputs<Scalar> out;
  out.final = pass.final_prob->value;
  for (int i = 0; i < kDecoderStages; ++i) out.side_outputs[static_cast<std::size_t>(i)] = pass.side_prob[static_cast<std::size_t>(i)]->value;
  return out;
}

/// Sum of the seven mean-BCE terms (six side outputs plus the final map),
/// computed from logits so the gradient stays alive for saturated pixels.
/// `gt` is [N, 1, H, W] with values in {0, 1}.
template <typename Scalar>
Var<Scalar> deep_supervision_loss(const ForwardPass<Scalar>& pass, const Tensor<Scalar>& gt) {
  std::vector<Var<Scalar>> terms;
  for (const auto& s : pass.side_logits) terms.push_back(bce_with_logits(s, gt));
  terms.push_back(bce_with_logits(pass.final_logits, gt));
  return sum_scalars(terms);
}

inline constexpr double kBceClamp = 1e-7;

/// Mean BCE of a probability map with p clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
double bce_probability(const Tensor<Scalar>& prob, const Tensor<Scalar>& gt) {
  require_same_shape(prob.shape(), gt.shape(), "bce_probability");
  const auto p = prob.data().template cast<double>().array().max(kBceClamp).min(1.0 - kBceClamp);
  const auto g = gt.data().template cast<double>().array();
  return -(g * p.log() + (1.0 - g) * (1.0 - p).log()).mean();
}

/// Value-only loss over probability maps (equal weights, seven terms).
template <typename Scalar>
double deep_supervision_loss(const ForwardOutputs<Scalar>& outputs, const Tensor<Scalar>& gt) {
  double total = bce_probability(outputs.final, gt);
  for (const auto& s : outputs.side_outputs) total += bce_probability(s, gt);
  return total;
}

extern template class ResidualUBlock<float>;
extern template class ResidualUBlock<double>;
extern template class OutputBlock<float>;
extern template class OutputBlock<double>;
extern template class LGNet<float>;
extern template class LGNet<double>;

}  // namespace lgnet
