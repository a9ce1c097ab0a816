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

#include "lgnet/lgnet.hpp"

#include <cmath>

#include <sstream>
#include <stdexcept>

namespace lgnet {

void LGNetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("LGNetConfig: " + msg); };
  if (in_channels < 1) fail("in_channels must be positive");
  for (int i = 0; i < kEncoderStages; ++i) {
    if (stage_channels[static_cast<std::size_t>(i)] < 1) fail("stage_channels must be positive");
    if (ublock_heights[static_cast<std::size_t>(i)] < 1) fail("ublock_heights must be positive");
  }
  if (stage_channels[4] % 2 != 0) fail("stage_channels[4] must be even for the grouped language attention");
  if (descriptor_dim < 1) fail("descriptor_dim must be positive");
  if (!(output_prior >= 0 && output_prior < 1)) fail("output_prior must be in [0, 1)");
  if (input_height < 1 || input_width < 1) fail("input size must be positive");
  // E5 runs at input / 16 and must fit its own U-block.
  Index h = input_height, w = input_width;
  for (int i = 0; i < kEncoderStages; ++i) {
    const Index need = Index(1) << (ublock_heights[static_cast<std::size_t>(i)] - 1);
    if (h < need || w < need) {
      std::ostringstream os;
      os << "stage E" << (i + 1) << " sees " << h << "x" << w << " but U-block height "
         << ublock_heights[static_cast<std::size_t>(i)] << " needs at least " << need;
      fail(os.str());
    }
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
}

template <typename Scalar>
ResidualUBlock<Scalar>::ResidualUBlock(ParameterSet<Scalar>& ps, const std::string& name, int height, Index in,
                                       Index mid, Index out)
    : name_(name), height_(height) {
  if (height < 1) throw std::invalid_argument(name + ": U-block height must be >= 1");
  local_ = ConvBnRelu<Scalar>(ps, name + ".local", in, out);
  for (int l = 0; l < height; ++l)
    down_.emplace_back(ps, name + ".down" + std::to_string(l), l == 0 ? out : mid, mid);
  bottom_ = ConvBnRelu<Scalar>(ps, name + ".bottom", mid, mid, 2);
  for (int l = 0; l < height; ++l)
    up_.emplace_back(ps, name + ".up" + std::to_string(l), 2 * mid, l == 0 ? out : mid);
}

template <typename Scalar>
Var<Scalar> ResidualUBlock<Scalar>::operator()(const Var<Scalar>& x, bool training) const {
  const Shape& s = x->value.shape();
  if (s.h < min_extent() || s.w < min_extent()) {
    std::ostringstream os;
    os << name_ << ": input " << s.h << "x" << s.w << " too small for U-block height " << height_ << " (needs "
       << min_extent() << ")";
    throw std::invalid_argument(os.str());
  }
  auto local = local_(x, training);
  std::vector<Var<Scalar>> skips;
  auto h = local;
  for (int l = 0; l < height_; ++l) {
    if (l > 0) h = max_pool2(h);
    h = down_[static_cast<std::size_t>(l)](h, training);
    skips.push_back(h);
  }
  auto d = bottom_(h, training);
  for (int l = height_ - 1; l >= 0; --l) {
    const auto& skip = skips[static_cast<std::size_t>(l)];
    d = upsample_bilinear(d, skip->value.h(), skip->value.w());
    d = up_[static_cast<std::size_t>(l)](concat_channels<Scalar>({d, skip}), training);
  }
  return add(d, local);
}

template <typename Scalar>
OutputBlock<Scalar>::OutputBlock(ParameterSet<Scalar>& ps, const std::string& name,
                                 const std::array<Index, kDecoderStages>& channels) {
  for (int i = 0; i < kDecoderStages; ++i)
    side_[static_cast<std::size_t>(i)] =
        Conv2d<Scalar>(ps, name + ".side" + std::to_string(i + 1), channels[static_cast<std::size_t>(i)], 1, 1, ConvSpec{}, true);
  scale_ = Conv2d<Scalar>(ps, name + ".scale", 3, 1, 1, ConvSpec{}, true);
  fuse_ = Conv2d<Scalar>(ps, name + ".fuse", kDecoderStages, 1, 1, ConvSpec{}, true);
}

template <typename Scalar>
OutputBlockResult<Scalar> OutputBlock<Scalar>::operator()(const std::array<Var<Scalar>, kDecoderStages>& decoders,
                                                          Index height, Index width) const {
  OutputBlockResult<Scalar> r;
  for (std::size_t i = 0; i < decoders.size(); ++i) {
    r.side_logits[i] = upsample_bilinear(side_[i](decoders[i]), height, width);
    const Shape& s = r.side_logits[i]->value.shape();
    if (s.h != height || s.w != width) throw std::logic_error("output_block: side output resolution mismatch");
  }
  r.scale = sigmoid(scale_(concat_channels<Scalar>({r.side_logits[0], r.side_logits[1], r.side_logits[2]})));
  std::vector<Var<Scalar>> merged{r.side_logits[0], r.side_logits[1], r.side_logits[2]};
  for (std::size_t i = 3; i < decoders.size(); ++i) merged.push_back(mul(r.side_logits[i], r.scale));
  r.final_logits = fuse_(concat_channels(merged));
  return r;
}

template <typename Scalar>
LGNet<Scalar>::LGNet(const LGNetConfig& config) : config_(config), params_(config.seed) {
  config_.validate();
  const auto& c = config_.stage_channels;
  const auto& ht = config_.ublock_heights;
  auto mid = [](Index ch) { return std::max<Index>(1, ch / 2); };
  for (std::size_t i = 0; i < kEncoderStages; ++i) {
    const Index in = i == 0 ? config_.in_channels : c[i - 1];
    enc_[i] = ResidualUBlock<Scalar>(params_, "enc" + std::to_string(i + 1), static_cast<int>(ht[i]), in, mid(c[i]), c[i]);
  }
  // D6 is the bottleneck at E5's resolution; D(i+1) for i < 5 emits the
  // channel count of E(i) so it can be fused with that encoder output.
  dec_[5] = ResidualUBlock<Scalar>(params_, "dec6", static_cast<int>(ht[4]), c[4], mid(c[4]), c[4]);
  for (std::size_t i = 0; i < kEncoderStages; ++i) {
    const Index in = c[i];
    const Index out = i == 0 ? c[0] : c[i - 1];
    dec_[i] = ResidualUBlock<Scalar>(params_, "dec" + std::to_string(i + 1), static_cast<int>(ht[i]), in, mid(out), out);
  }
  lang_enc_ = LanguageFusion<Scalar>(params_, "lang_enc5", config_.descriptor_dim, c[4]);
  lang_dec_ = LanguageFusion<Scalar>(params_, "lang_dec6", config_.descriptor_dim, c[4]);
  for (std::size_t i = 0; i < kEncoderStages; ++i)
    fuse_[i] = FusionBlock<Scalar>(params_, "fuse" + std::to_string(i + 1), c[i]);
  std::array<Index, kDecoderStages> dec_channels{c[0], c[0], c[1], c[2], c[3], c[4]};
  out_ = OutputBlock<Scalar>(params_, "out", dec_channels);
  if (config_.output_prior > 0) {
    // Foreground is a tiny fraction of pixels; starting at that rate spares
    // the first few hundred steps of pushing the background down.
    const Scalar logit = static_cast<Scalar>(std::log(config_.output_prior / (1 - config_.output_prior)));
    for (int i = 1; i <= kDecoderStages; ++i) params_.find("out.side" + std::to_string(i) + ".bias")->value.data().setConstant(logit);
    params_.find("out.fuse.weight")->value.data().setConstant(Scalar(1) / kDecoderStages);
  }
}

namespace {
template <typename Scalar>
void require_finite(const Var<Scalar>& v, const char* stage) {
  if (!v->value.all_finite()) throw std::runtime_error(std::string("non-finite activation in stage ") + stage);
}
}  // namespace

template <typename Scalar>
ForwardPass<Scalar> LGNet<Scalar>::forward(const Var<Scalar>& images, const Var<Scalar>& descriptors,
                                           bool training) const {
  const Shape& is = images->value.shape();
  const Shape& ds = descriptors->value.shape();
  if (is.c != config_.in_channels)
    throw std::invalid_argument("lgnet_forward: expected " + std::to_string(config_.in_channels) +
                                " input channels, got " + std::to_string(is.c));
  if (is.h != config_.input_height || is.w != config_.input_width)
    throw std::invalid_argument("lgnet_forward: input " + std::to_string(is.h) + "x" + std::to_string(is.w) +
                                " does not match configured input size " + std::to_string(config_.input_height) +
                                "x" + std::to_string(config_.input_width));
  if (ds.c != config_.descriptor_dim || ds.n != is.n || ds.plane() != 1)
    throw std::invalid_argument("lgnet_forward: descriptor " + ds.str() + " does not match descriptor_dim " +
                                std::to_string(config_.descriptor_dim) + " and batch " + std::to_string(is.n));

  static const char* enc_names[] = {"E1", "E2", "E3", "E4", "E5"};
  static const char* dec_names[] = {"D1", "D2", "D3", "D4", "D5", "D6"};

  ForwardPass<Scalar> pass;
  std::array<Var<Scalar>, kEncoderStages> e;
  auto h = images;
  for (std::size_t i = 0; i < kEncoderStages; ++i) {
    if (i > 0) h = max_pool2(h);
    h = enc_[i](h, training);
    require_finite(h, enc_names[i]);
    e[i] = h;
  }
  std::array<Var<Scalar>, kDecoderStages> d;
  d[5] = dec_[5](e[4], training);
  require_finite(d[5], dec_names[5]);

  auto fe = lang_enc_(e[4], descriptors, training);
  auto fd = lang_dec_(d[5], descriptors, training);
  pass.diagnostics.lang_enc_weights = fe.weights->value;
  pass.diagnostics.lang_dec_weights = fd.weights->value;
  auto prev = add(fe.out, fd.out);

  for (int i = kEncoderStages - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    auto up = upsample_bilinear(prev, e[ui]->value.h(), e[ui]->value.w());
    auto fused = fuse_[ui](e[ui], up, training);
    pass.diagnostics.fusion_gates.push_back(fused.enc_gate->value);
    pass.diagnostics.fusion_gates.push_back(fused.dec_gate->value);
    d[ui] = dec_[ui](fused.out, training);
    require_finite(d[ui], dec_names[ui]);
    prev = d[ui];
  }

  auto ob = out_(d, is.h, is.w);
  require_finite(ob.final_logits, "output");
  pass.final_logits = ob.final_logits;
  pass.side_logits = ob.side_logits;
  pass.final_prob = sigmoid(ob.final_logits);
  for (std::size_t i = 0; i < kDecoderStages; ++i) pass.side_prob[i] = sigmoid(ob.side_logits[i]);
  pass.diagnostics.scale = ob.scale->value;
  return pass;
}

template class ResidualUBlock<float>;
template class ResidualUBlock<double>;
template class OutputBlock<float>;
template class OutputBlock<double>;
template class LGNet<float>;
template class LGNet<double>;

}  // namespace lgnet
