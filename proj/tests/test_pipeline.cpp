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

#include "lgnet/datagen.hpp"
#include "lgnet/langir.hpp"
#include "lgnet/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace lgnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lgnet_pipe_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LGNetConfig mini_model() {
  LGNetConfig c;
  c.stage_channels = {4, 4, 8, 8, 8};
  c.ublock_heights = {4, 3, 3, 2, 1};
  c.descriptor_dim = 8;
  c.input_height = c.input_width = 32;
  return c;
}

TrainConfig mini_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.warmup_epochs = 1;
  c.seed = 3;
  c.model = mini_model();
  return c;
}

std::vector<Sample> scenes(int n, Eigen::Index size = 32, std::uint64_t seed = 0) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    SceneParams p;
    p.height = p.width = size;
    p.target_area_ratio = 0.0014;
    p.rng_seed = seed + static_cast<std::uint64_t>(i);
    auto s = synth_scene(p);
    Sample x{s.image, s.mask, synth_description(s.mask), Split::train};
    x.image.id = std::to_string(i);
    out.push_back(x);
  }
  return out;
}

struct QuietWarnings {
  QuietWarnings() { set_warning_sink([](std::string_view) {}); }
  ~QuietWarnings() { set_warning_sink({}); }
};

class OraclePredictor final : public Predictor {
 public:
  ImagePixels predict(const Sample& s) const override { return s.mask->pixels.cast<float>(); }
};

}  // namespace

TEST_CASE("train config validation") {
  auto c = mini_config();
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("epochs"), std::invalid_argument);
  c = mini_config();
  c.warmup_epochs = c.epochs;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = mini_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = mini_config();
  c.device = "cuda";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  TrainConfig d;
  CHECK(d.epochs == 600);
  CHECK(d.batch_size == 8);
  CHECK(d.lr == 1e-3);
  CHECK(d.warmup_epochs == 10);
  CHECK(d.weight_decay == 1e-4);
  CHECK(d.optimizer == OptimizerKind::adan);
  CHECK(d.model.input_height == 512);
  CHECK(d.checkpoint_every == 50);

  c = mini_config();
  c.language_mode = LanguageMode::training_and_test;
  c.optimizer = OptimizerKind::adamw;
  c.checkpoint_dir = "ck";
  const auto back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.model == c.model);
  CHECK_THROWS_AS(parse_language_mode("sometimes"), std::invalid_argument);
}

TEST_CASE("warm-up schedule") {
  TrainConfig c;
  const long spe = 4;
  CHECK(learning_rate(c, 0, spe) < learning_rate(c, 10 * spe, spe));
  CHECK(learning_rate(c, 0, spe) == doctest::Approx(1e-3 / 40));
  CHECK(learning_rate(c, 39, spe) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 40, spe) == 1e-3);
  CHECK(learning_rate(c, 100000, spe) == 1e-3);
  for (long s = 1; s < 40; ++s) CHECK(learning_rate(c, s, spe) > learning_rate(c, s - 1, spe));
  c.warmup_epochs = 0;
  CHECK(learning_rate(c, 0, spe) == 1e-3);
}

TEST_CASE("optimizers match the reference update") {
  // frozen from an independent NumPy implementation (AdamW also cross-checked against torch.optim.AdamW)
  const std::vector<std::array<float, 3>> grads{{0.1f, -0.2f, 0.3f}, {0.05f, 0.1f, -0.4f}, {-0.3f, 0.2f, 0.1f}};
  auto run = [&](Optimizer& opt) {
    ParameterSet<float> ps;
    Tensor<float> w(1, 3, 1, 1);
    w.data() << 0.5f, -1.0f, 2.0f;
    auto v = ps.add("w", w);
    std::vector<Eigen::Vector3f> out;
    for (const auto& g : grads) {
      v->grad_buffer().data() = Eigen::Map<const Eigen::Vector3f>(g.data());
      opt.step(ps, 0.01);
      out.push_back(v->value.data());
    }
    return out;
  };
  Adan adan(0.1);
  const auto a = run(adan);
  const Eigen::Vector3f adan_ref[3] = {{0.48951049f, -0.98901099f, 1.98801199f},
                                       {0.48183369f, -0.99117881f, 1.99107403f},
                                       {0.48639278f, -0.99558123f, 1.98978115f}};
  for (int k = 0; k < 3; ++k) CHECK((a[static_cast<std::size_t>(k)] - adan_ref[k]).cwiseAbs().maxCoeff() < 2e-6f);
  AdamW adamw(0.1);
  const auto b = run(adamw);
  const Eigen::Vector3f adamw_ref[3] = {{0.4895f, -0.989f, 1.988f},
                                        {0.47968871f, -0.98534763f, 1.9879471f},
                                        {0.48268125f, -0.98708925f, 1.98617228f}};
  for (int k = 0; k < 3; ++k) CHECK((b[static_cast<std::size_t>(k)] - adamw_ref[k]).cwiseAbs().maxCoeff() < 2e-6f);
  CHECK(adan.steps() == 3);
}

TEST_CASE("resize helpers") {
  ImagePixels a(2, 2);
  a << 0, 1, 2, 3;
  const auto up = resize_image(a, 4, 4);
  CHECK(up(0, 0) == 0.0f);
  CHECK(up(3, 3) == 3.0f);
  CHECK(up(1, 1) == doctest::Approx(0.75f));
  CHECK((resize_image(ImagePixels::Constant(5, 7, 0.25f), 3, 11).array() == 0.25f).all());
  MaskPixels m = MaskPixels::Zero(4, 4);
  m(1, 2) = 1;
  const auto mu = resize_mask(m, 8, 8);
  CHECK(mu.cast<int>().sum() == 4);
  CHECK(mu(2, 4) == 1);
  CHECK((resize_mask(mu, 4, 4).array() == m.array()).all());
}

TEST_CASE("train bookkeeping, checkpoints and reproducibility") {
  const auto dir = scratch_dir("train");
  auto c = mini_config();
  c.checkpoint_dir = dir;
  c.checkpoint_every = 1;
  auto prov = stub_provider(1, 8);
  const auto data = scenes(4);
  auto r = train(c, data, *prov);
  CHECK(r.report.epochs.size() == 2);
  CHECK(r.report.step_losses.size() == 4);
  CHECK(fs::exists(r.report.checkpoint));
  CHECK(fs::exists(dir / "epoch_0001.ckpt"));
  CHECK(r.report.evaluated_on == "train");
  CHECK(r.report.final_metrics.n == 4);
  CHECK(r.report.epochs[0].lr < r.report.epochs[1].lr);

  const auto again = train(c, data, *prov);
  CHECK(again.report.step_losses == r.report.step_losses);
  CHECK(again.report.final_metrics.to_json() == r.report.final_metrics.to_json());

  auto never = c;
  never.language_mode = LanguageMode::never;
  never.checkpoint_dir.clear();
  const auto n = train(never, data, *prov);
  CHECK(n.report.step_losses.size() == r.report.step_losses.size());
  CHECK(n.report.step_losses[1] != r.report.step_losses[1]);
  CHECK(n.report.checkpoint.empty());

  const auto back = RunReport::from_json(r.report.to_json());
  CHECK(back.step_losses == r.report.step_losses);
  CHECK(back.epochs.size() == 2);
  CHECK(back.final_metrics.iou == r.report.final_metrics.iou);
  CHECK(back.checkpoint == r.report.checkpoint);

  // checkpoint restores weights, buffers and optimizer state
  const auto ck = read_checkpoint(r.report.checkpoint);
  CHECK(ck.epoch == 2);
  CHECK(ck.optimizer == "adan");
  CHECK(ck.optimizer_steps == 4);
  CHECK(ck.optimizer_state.size() == 4 * r.model->parameters().params().size());
  LGNet<float> restored(ck.config.model);
  restore_model(restored, ck);
  const LGNetPredictor pa(*r.model, *prov, LanguageMode::training_and_test), pb(restored, *prov, LanguageMode::training_and_test);
  CHECK((pa.predict(data[0]).array() == pb.predict(data[0]).array()).all());
  Adan opt(1e-4);
  opt.load_state(restored.parameters(), ck.optimizer_state, ck.optimizer_steps);
  CHECK(opt.steps() == 4);

  auto other = ck.config.model;
  other.stage_channels = {4, 4, 8, 8, 16};
  LGNet<float> wrong(other);
  CHECK_THROWS_WITH_AS(restore_model(wrong, ck), doctest::Contains("mismatch"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("train input errors") {
  auto prov = stub_provider(1, 8);
  CHECK_THROWS_WITH_AS(train(mini_config(), std::vector<Sample>{}, *prov), doctest::Contains("empty"), std::invalid_argument);
  auto wrong_dim = stub_provider(1, 16);
  CHECK_THROWS_AS(train(mini_config(), scenes(2), *wrong_dim), std::invalid_argument);
  auto bad = scenes(2);
  bad[0].image.pixels(3, 3) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(train(mini_config(), bad, *prov), doctest::Contains("epoch 1"), std::runtime_error);
  auto one = mini_config();
  one.batch_size = 1;
  CHECK_THROWS_AS(train(one, scenes(2), *prov), std::invalid_argument);
}

TEST_CASE("evaluate") {
  QuietWarnings q;
  const auto data = scenes(3);
  const auto perfect = evaluate(OraclePredictor{}, data);
  CHECK(perfect.iou == 1.0);
  CHECK(perfect.niou == 1.0);
  CHECK(perfect.pd == 1.0);
  CHECK(perfect.fa == 0.0);

  // on-disk dataset with a test split, checkpointed model
  const auto root = scratch_dir("eval");
  auto all = scenes(6, 40, 20);
  for (std::size_t i = 4; i < all.size(); ++i) all[i].split = Split::test;
  write_langir(root / "data", LangIRLayout::for_subset(Subset::langir_irstd), all);
  auto c = mini_config();
  c.checkpoint_dir = root / "ck";
  auto prov = stub_provider(2, 8);
  DatasetManifest m;
  m.root_path = (root / "data").string();
  const auto rep = train(c, m, *prov);
  CHECK(rep.evaluated_on == "test");
  CHECK(rep.final_metrics.n == 2);

  const auto with_text = evaluate(rep.checkpoint, m, *prov, LanguageMode::training_and_test);
  const auto without = evaluate(rep.checkpoint, m, *prov, LanguageMode::training_only);
  CHECK(with_text.n == without.n);
  CHECK(evaluate(rep.checkpoint, m, *prov, LanguageMode::training_and_test).to_json() == with_text.to_json());

  const auto ck = read_checkpoint(rep.checkpoint);
  LGNet<float> model(ck.config.model);
  restore_model(model, ck);
  Sample s = all[4];
  const auto a = LGNetPredictor(model, *prov, LanguageMode::training_and_test).forward(s);
  const auto b = LGNetPredictor(model, *prov, LanguageMode::never).forward(s);
  CHECK(a.final.shape() == b.final.shape());
  CHECK(LGNetPredictor(model, *prov, LanguageMode::never).predict(s).rows() == 40);

  auto wide = stub_provider(2, 16);
  CHECK_THROWS_WITH_AS(evaluate(rep.checkpoint, m, *wide, LanguageMode::never), doctest::Contains("dimension"),
                       std::invalid_argument);
  std::ofstream(root / "bad.ckpt") << "nope\n";
  CHECK_THROWS_AS(read_checkpoint(root / "bad.ckpt"), std::runtime_error);
  fs::remove_all(root);
}
