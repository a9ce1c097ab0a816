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
#include "gradcheck.hpp"
#include "model_gradcheck.hpp"

#include "lgnet/lgnet.hpp"

#include <cmath>

using namespace lgnet;
using lgnet::testing::check_gradients;
using lgnet::testing::random_tensor;

namespace {

std::mt19937_64 rng(77);

void set_param(ParameterSet<double>& ps, const std::string& name, double v) {
  auto p = ps.find(name);
  REQUIRE(p);
  p->value.data().setConstant(v);
}

}  // namespace

TEST_CASE("residual U-block: zero input and zero weights give zero output") {
  ParameterSet<double> ps(1);
  ResidualUBlock<double> block(ps, "rsu", 4, 8, 4, 16);
  ps.fill(0.0);
  auto y = block(constant(Tensor<double>(2, 8, 32, 32)), true)->value;
  CHECK(y.data().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual U-block: shape contract and minimum extent") {
  ParameterSet<double> ps(1);
  ResidualUBlock<double> block(ps, "enc3", 4, 8, 4, 16);
  auto y = block(constant(random_tensor({1, 8, 32, 32}, rng)), false)->value;
  CHECK(y.shape() == Shape{1, 16, 32, 32});
  CHECK(block.min_extent() == 8);
  try {
    block(constant(random_tensor({1, 8, 4, 4}, rng)), false);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("enc3") != std::string::npos);
  }
}

TEST_CASE("residual U-block: input gradient matches finite differences on 4x8x8") {
  ParameterSet<double> ps(3);
  ResidualUBlock<double> block(ps, "rsu", 3, 4, 4, 4);
  auto x = random_tensor({1, 4, 8, 8}, rng);
  const double err = check_gradients([&](const auto& v) { return block(v[0], true); }, {x});
  CHECK(err < 1e-4);
}

TEST_CASE("gap") {
  auto c = Tensor<double>::constant({1, 3, 4, 5}, 0.7);
  auto v = global_avg_pool(constant(c))->value;
  for (Index i = 0; i < 3; ++i) CHECK(v.data()[i] == doctest::Approx(0.7));

  Tensor<double> m(1, 2, 2, 2);
  m(0, 0, 1, 1) = 4;
  CHECK(global_avg_pool(constant(m))->value(0, 0, 0, 0) == 1.0);

  auto r = random_tensor({2, 3, 7, 5}, rng);
  auto g = global_avg_pool(constant(r))->value;
  for (Index n = 0; n < 2; ++n)
    for (Index ch = 0; ch < 3; ++ch) {
      double s = 0;
      for (Index y = 0; y < 7; ++y)
        for (Index x = 0; x < 5; ++x) s += r(n, ch, y, x);
      CHECK(g(n, ch, 0, 0) == doctest::Approx(s / 35).epsilon(1e-12));
    }
}

TEST_CASE("target MLP") {
  ParameterSet<double> ps(4);
  TargetMlp<double> mlp(ps, "mlp", 512, 256);
  auto bias = ps.find("mlp.fc2.bias");
  for (Index i = 0; i < bias->value.size(); ++i) bias->value.data()[i] = 0.01 * double(i);
  ps.find("mlp.fc2.weight")->value.set_zero();
  auto v2 = mlp(constant(Tensor<double>(1, 512, 1, 1)))->value;
  CHECK(v2.shape() == Shape{1, 256, 1, 1});
  CHECK((v2.data() - bias->value.data()).norm() == 0.0);

  ParameterSet<double> ps2(8);
  TargetMlp<double> small(ps2, "mlp", 6, 4);
  auto td = random_tensor({1, 6, 1, 1}, rng);
  CHECK(check_gradients([&](const auto& v) { return small(v[0]); }, {td}) < 1e-4);
}

TEST_CASE("interleave alternates entries") {
  Tensor<double> a(1, 3, 1, 1), b(1, 3, 1, 1);
  a.data() << 1, 3, 5;
  b.data() << 2, 4, 6;
  auto y = interleave(constant(a), constant(b))->value;
  for (Index i = 0; i < 6; ++i) CHECK(y.data()[i] == double(i + 1));

  Tensor<double> e(1, 0, 1, 1);
  CHECK(interleave(constant(e), constant(e))->value.size() == 0);
  CHECK_THROWS_AS(interleave(constant(a), constant(Tensor<double>(1, 2, 1, 1))), std::invalid_argument);
}

TEST_CASE("language attention") {
  ParameterSet<double> ps(9);
  LanguageAttention<double> attn(ps, "attn", 6);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = attn(constant(random_tensor({3, 6, 1, 1}, rng, -5, 5)), constant(random_tensor({3, 6, 1, 1}, rng, -5, 5)),
                  true)
                 ->value;
    CHECK(w.data().minCoeff() > 0.0);
    CHECK(w.data().maxCoeff() < 1.0);
  }

  auto ones = constant(Tensor<double>::constant({1, 6, 1, 1}, 1.0));
  auto zeros = constant(Tensor<double>(1, 6, 1, 1));
  auto a = attn(ones, zeros, false)->value;
  auto b = attn(zeros, ones, false)->value;
  CHECK((a.data() - b.data()).norm() > 1e-6);

  ParameterSet<double> untouched(9);
  LanguageAttention<double> fresh(untouched, "attn", 6);
  untouched.find("attn.gpconv.weight")->value.set_zero();
  auto half = fresh(ones, zeros, false)->value;
  for (Index i = 0; i < 6; ++i) CHECK(half.data()[i] == 0.5);
}

TEST_CASE("language fusion gates channels only") {
  ParameterSet<double> ps(10);
  LanguageFusion<double> lf(ps, "lf", 5, 4);
  auto feat = random_tensor({1, 4, 6, 6}, rng);
  auto td = random_tensor({1, 5, 1, 1}, rng);

  set_param(ps, "lf.attn.bn.weight", 0.0);
  set_param(ps, "lf.attn.bn.bias", 50.0);
  auto same = lf(constant(feat), constant(td), false).out->value;
  CHECK((same.data() - feat.data()).norm() == 0.0);

  set_param(ps, "lf.attn.bn.bias", -800.0);
  auto none = lf(constant(feat), constant(td), false).out->value;
  CHECK(none.data().norm() == 0.0);

  ParameterSet<double> fresh(11);
  LanguageFusion<double> lf2(fresh, "lf", 5, 4);
  auto out = lf2(constant(feat), constant(td), false).out->value;
  for (Index c = 0; c < 4; ++c) {
    const double r0 = out(0, c, 0, 0) / feat(0, c, 0, 0);
    for (Index y = 0; y < 6; ++y)
      for (Index x = 0; x < 6; ++x) CHECK(out(0, c, y, x) / feat(0, c, y, x) == doctest::Approx(r0).epsilon(1e-12));
  }
}

TEST_CASE("fusion block") {
  ParameterSet<double> ps(12);
  FusionBlock<double> fb(ps, "fb", 32);
  auto z = constant(Tensor<double>(2, 32, 64, 64));
  auto zero = fb(z, z, true).out->value;
  CHECK(zero.shape() == Shape{2, 32, 64, 64});
  CHECK(zero.data().norm() == 0.0);

  ParameterSet<double> ps2(13);
  FusionBlock<double> fb2(ps2, "fb", 3);
  ChannelGate<double> ge, gd;
  {
    // same registration order and seed reproduces the block's weights
    ParameterSet<double> twin(13);
    ge = ChannelGate<double>(twin, "fb.enc_gate", 3);
    gd = ChannelGate<double>(twin, "fb.dec_gate", 3);
  }
  auto enc = random_tensor({2, 3, 5, 5}, rng);
  auto dec = random_tensor({2, 3, 5, 5}, rng);
  auto got = fb2(constant(enc), constant(dec), true).out->value;
  auto we = ge(constant(enc), true)->value;
  auto wd = gd(constant(dec), true)->value;
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 5; ++y)
        for (Index x = 0; x < 5; ++x)
          CHECK(got(n, c, y, x) ==
                doctest::Approx(we(n, c, 0, 0) * enc(n, c, y, x) + wd(n, c, 0, 0) * dec(n, c, y, x)).epsilon(1e-12));
  CHECK_THROWS_AS(fb2(constant(enc), constant(random_tensor({2, 3, 4, 5}, rng)), true), std::invalid_argument);
}

TEST_CASE("output block") {
  ParameterSet<double> ps(14);
  std::array<Index, kDecoderStages> ch{4, 4, 8, 8, 8, 8};
  OutputBlock<double> ob(ps, "out", ch);
  std::array<Var<double>, kDecoderStages> zeros;
  const Index res[] = {32, 16, 8, 4, 2, 2};
  for (std::size_t i = 0; i < kDecoderStages; ++i) zeros[i] = constant(Tensor<double>(1, ch[i], res[i], res[i]));
  ps.fill(0.0);
  set_param(ps, "out.fuse.bias", 0.3);
  auto r = ob(zeros, 32, 32);
  CHECK(r.final_logits->value.shape() == Shape{1, 1, 32, 32});
  CHECK((r.final_logits->value.data().array() - 0.3).abs().maxCoeff() == 0.0);

  ParameterSet<double> ps2(15);
  OutputBlock<double> ob2(ps2, "out", ch);
  std::array<Var<double>, kDecoderStages> rnd;
  for (std::size_t i = 0; i < kDecoderStages; ++i) rnd[i] = constant(random_tensor({1, ch[i], res[i], res[i]}, rng, -3, 3));
  auto r2 = ob2(rnd, 32, 32);
  CHECK(r2.scale->value.data().minCoeff() > 0.0);
  CHECK(r2.scale->value.data().maxCoeff() < 1.0);
  for (const auto& s : r2.side_logits) CHECK(s->value.shape() == Shape{1, 1, 32, 32});
}

TEST_CASE("LGNet default config on 512x512") {
  LGNetConfig cfg;
  LGNet<float> net(cfg);
  Tensor<float> img(1, 1, 512, 512);
  img.data().setConstant(0.5f);
  img(0, 0, 100, 100) = 0.8f;
  Tensor<float> td(1, 512, 1, 1);
  td.data().setConstant(0.01f);
  NoGradGuard guard;
  auto a = probabilities(net.forward(constant(img), constant(td), false));
  CHECK(a.final.shape() == Shape{1, 1, 512, 512});
  CHECK(a.side_outputs.size() == 6);
  for (const auto& s : a.side_outputs) CHECK(s.shape() == Shape{1, 1, 512, 512});
  auto b = probabilities(net.forward(constant(img), constant(td), false));
  CHECK((a.final.data().array() == b.final.data().array()).all());
  MESSAGE("default parameter count: " << net.parameters().count());
}

TEST_CASE("LGNet rejects mismatched inputs and names non-finite stages") {
  auto cfg = lgnet::testing::miniature_config();
  LGNet<double> net(cfg);
  CHECK_THROWS_AS(net.forward(constant(Tensor<double>(1, 1, 16, 16)), constant(Tensor<double>(1, 9, 1, 1)), false),
                  std::invalid_argument);
  CHECK_THROWS_AS(net.forward(constant(Tensor<double>(1, 1, 32, 32)), constant(Tensor<double>(1, 8, 1, 1)), false),
                  std::invalid_argument);
  net.parameters().find("enc1.local.conv.weight")->value.data()[0] = std::nan("");
  try {
    net.forward(constant(random_tensor({1, 1, 16, 16}, rng)), constant(Tensor<double>(1, 8, 1, 1)), false);
    FAIL("expected non-finite error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("E1") != std::string::npos);
  }
}

TEST_CASE("LGNetConfig validation") {
  LGNetConfig c;
  c.stage_channels[4] = 7;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  LGNetConfig small;
  small.input_height = small.input_width = 64;
  CHECK_THROWS_AS(small.validate(), std::invalid_argument);  // E5 at 4x4 cannot host height 4
  CHECK_NOTHROW(lgnet::testing::miniature_config().validate());
}

TEST_CASE("deep supervision loss closed forms") {
  Tensor<double> gt(1, 1, 8, 8);
  for (Index i = 0; i < gt.size(); i += 5) gt.data()[i] = 1;

  ForwardOutputs<double> perfect;
  perfect.final = gt;
  for (auto& s : perfect.side_outputs) s = gt;
  CHECK(deep_supervision_loss(perfect, gt) <= 7 * 1e-6);

  ForwardOutputs<double> half;
  half.final = Tensor<double>::constant(gt.shape(), 0.5);
  for (auto& s : half.side_outputs) s = half.final;
  CHECK(deep_supervision_loss(half, gt) == doctest::Approx(7 * std::log(2.0)).epsilon(1e-12));

  ForwardOutputs<double> rnd;
  rnd.final = random_tensor(gt.shape(), rng, 0.01, 0.99);
  for (auto& s : rnd.side_outputs) s = random_tensor(gt.shape(), rng, 0.01, 0.99);
  double naive = 0;
  auto accumulate = [&](const Tensor<double>& p) {
    double s = 0;
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x) {
        const double q = p(0, 0, y, x), g = gt(0, 0, y, x);
        s -= g * std::log(q) + (1 - g) * std::log(1 - q);
      }
    naive += s / 64;
  };
  accumulate(rnd.final);
  for (const auto& s : rnd.side_outputs) accumulate(s);
  CHECK(std::abs(deep_supervision_loss(rnd, gt) - naive) < 1e-6);
}

TEST_CASE("logit-based training loss agrees with the probability form") {
  auto cfg = lgnet::testing::miniature_config();
  LGNet<double> net(cfg);
  auto img = random_tensor({2, 1, 16, 16}, rng, 0, 1);
  auto td = random_tensor({2, 8, 1, 1}, rng);
  Tensor<double> gt(2, 1, 16, 16);
  gt(0, 0, 3, 3) = gt(1, 0, 9, 12) = 1;
  auto pass = net.forward(constant(img), constant(td), true);
  CHECK(deep_supervision_loss(pass, gt)->value.data()[0] ==
        doctest::Approx(deep_supervision_loss(probabilities(pass), gt)).epsilon(1e-9));
}

TEST_CASE("shape invariance and sigmoid ranges under language availability") {
  auto cfg = lgnet::testing::miniature_config();
  LGNet<double> net(cfg);
  auto img = random_tensor({1, 1, 16, 16}, rng, 0, 1);
  auto image_only = random_tensor({1, 8, 1, 1}, rng);
  auto with_text = image_only;
  with_text.data() += random_tensor({1, 8, 1, 1}, rng).data();
  auto a = net.forward(constant(img), constant(image_only), false);
  auto b = net.forward(constant(img), constant(with_text), false);
  CHECK(a.final_prob->value.shape() == b.final_prob->value.shape());
  for (std::size_t i = 0; i < kDecoderStages; ++i)
    CHECK(a.side_prob[i]->value.shape() == b.side_prob[i]->value.shape());
  for (const auto* d : {&a.diagnostics, &b.diagnostics}) {
    CHECK(d->lang_enc_weights.data().minCoeff() > 0);
    CHECK(d->lang_enc_weights.data().maxCoeff() < 1);
    CHECK(d->scale.data().minCoeff() > 0);
    CHECK(d->scale.data().maxCoeff() < 1);
    CHECK(d->fusion_gates.size() == 10);
  }
}

TEST_CASE("miniature LGNet train-mode gradients on non-null parameter groups") {
  auto cfg = lgnet::testing::miniature_config();
  cfg.input_height = cfg.input_width = 32;
  cfg.ublock_heights = {4, 3, 3, 2, 2};
  auto r = lgnet::testing::check_model_gradients(cfg, true, 6, 4);
  int checked = 0;
  for (const auto& g : r.groups) {
    if (g.analytic_norm < 1e-5) continue;  // cancelled by batch-norm mean subtraction
    ++checked;
    CHECK_MESSAGE(g.relative_error < 1e-3, g.name);
  }
  CHECK(checked > 250);
}
