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


// Acceptance run: one PASS/FAIL line per primary criterion.
//
//   lgnet_acceptance [--only name ...] [--langir-sirst DIR]

#include "metric_oracle.hpp"
#include "model_gradcheck.hpp"
#include "vlm_mock.hpp"

#include "lgnet/datagen.hpp"
#include "lgnet/langir.hpp"
#include "lgnet/metrics.hpp"
#include "lgnet/pipeline.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace lgnet;
using namespace lgnet::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

/// Collects failed sub-checks so one line can name them.
struct Checks {
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failed.empty()) return {true, summary};
    std::string d = summary + "; failed:";
    for (const auto& f : failed) d += " [" + f + "]";
    return {false, d};
  }
};

TargetMask blank(long h, long w) {
  TargetMask m;
  m.pixels = MaskPixels::Zero(h, w);
  return m;
}

void square(TargetMask& m, long r, long c, long side) { m.pixels.block(r, c, side, side).setOnes(); }

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
  set_warning_sink([](std::string_view) {});  // pd excludes target-free images by design
  const auto t0 = Clock::now();
  std::mt19937_64 rng(500);
  std::uniform_int_distribution<long> ext(1, 32);
  MetricAccumulator acc;
  std::vector<OracleImage> oracle;
  long count_mismatch = 0;
  for (int i = 0; i < 500; ++i) {
    const long h = ext(rng), w = ext(rng);
    const auto gt = random_mask(rng, h, w);
    const auto pred = perturbed_mask(gt, rng);
    acc.add(pred, gt);
    const auto o = oracle_image(pred, gt, kDefaultCentroidTol);
    const auto& c = acc.images().back();
    count_mismatch += c.tp != o.tp || c.gt_pixels != o.gt || c.pred_pixels != o.pred || c.matched_targets != o.matched ||
                      c.gt_targets != o.targets || c.false_pixels != o.false_px || c.total_pixels != o.total;
    oracle.push_back(o);
  }
  set_warning_sink({});
  const auto om = oracle_metrics(oracle);
  const double err = std::max({std::abs(iou(acc) - om.iou), std::abs(niou(acc) - om.niou), std::abs(pd(acc) - om.pd),
                               std::abs(fa(acc) - om.fa)});
  const double secs = seconds_since(t0);
  Checks c;
  c.expect(count_mismatch == 0, std::to_string(count_mismatch) + " images with differing counts");
  c.expect(err <= 1e-12, "max ratio error " + num(err));
  c.expect(secs < 30, "runtime " + num(secs) + " s");
  return c.outcome("500 pairs up to 32x32, max ratio error " + num(err) + ", " + num(secs, 3) + " s");
}

Outcome metric_anchors() {
  Checks c;
  // 2x2 hand case: pred {(0,0),(0,1)}, gt {(0,1),(1,1)}; overlap 1 pixel, union 3
  TargetMask p = blank(2, 2), g = blank(2, 2);
  p.pixels(0, 0) = p.pixels(0, 1) = 1;
  g.pixels(0, 1) = g.pixels(1, 1) = 1;
  MetricAccumulator hand;
  hand.add(p, g);
  c.expect(std::abs(iou(hand) - 1.0 / 3.0) <= 1e-15, "hand IoU " + num(iou(hand), 17));

  TargetMask g3 = blank(40, 40), p2 = blank(40, 40);
  square(g3, 2, 2, 2);
  square(g3, 20, 20, 2);
  square(g3, 30, 5, 2);
  square(p2, 2, 2, 2);
  square(p2, 20, 20, 2);
  MetricAccumulator three;
  three.add(p2, g3);
  c.expect(std::abs(pd(three) - 2.0 / 3.0) <= 1e-15, "pd " + num(pd(three), 17));

  TargetMask g100 = blank(100, 100);
  square(g100, 10, 10, 3);
  TargetMask p100 = g100;
  p100.pixels.block(60, 60, 1, 5).setOnes();  // 5 stray pixels out of 10^4
  MetricAccumulator far;
  far.add(p100, g100);
  c.expect(std::abs(fa(far) - 5e-4) <= 1e-15, "fa " + num(fa(far), 17));
  return c.outcome("IoU " + num(iou(hand), 12) + ", pd " + num(pd(three), 12) + ", fa " + num(fa(far), 12));
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto cfg = miniature_config();
  // eval-mode batch norm; train-mode BN is covered by the unit tests
  const auto r = check_model_gradients(cfg, false);
  const double secs = seconds_since(t0);
  Checks c;
  c.expect(r.worst < 1e-3, "worst group " + r.worst_group + " " + num(r.worst));
  c.expect(secs < 120, "runtime " + num(secs) + " s");
  return c.outcome(std::to_string(r.groups.size()) + " parameter groups, max relative error " + num(r.worst, 3) + " (" +
                   r.worst_group + "), " + num(secs, 3) + " s");
}

bool strictly_unit(const Tensor<double>& t) {
  return t.size() > 0 && t.data().minCoeff() > 0 && t.data().maxCoeff() < 1;
}

Outcome shape_language_invariance() {
  const auto base = miniature_config();
  const auto provider = stub_provider(3, base.descriptor_dim);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> unif(0.0f, 1.0f);
  std::uniform_int_distribution<Eigen::Index> pos(0, base.input_height - 1);
  const LanguageMode modes[] = {LanguageMode::never, LanguageMode::training_only, LanguageMode::training_and_test};
  Checks c;
  int forwards = 0, out_of_range = 0, shape_mismatch = 0;
  for (int i = 0; i < 100; ++i) {
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(i);
    LGNet<double> net(cfg);
    Sample s;
    s.image.id = "s" + std::to_string(i);
    s.image.pixels = ImagePixels::NullaryExpr(cfg.input_height, cfg.input_width, [&] { return unif(rng); });
    TargetMask m = blank(cfg.input_height, cfg.input_width);
    m.pixels(pos(rng), pos(rng)) = 1;
    s.prior = synth_description(m);
    Tensor<double> image(1, 1, cfg.input_height, cfg.input_width);
    image.data() = Eigen::Map<const VecX<float>>(s.image.pixels.data(), s.image.pixels.size()).cast<double>();

    std::vector<Shape> shapes;
    for (const auto mode : modes) {
      const auto td = describe(*provider, s, uses_text_at_test(mode));
      Tensor<double> d(1, cfg.descriptor_dim, 1, 1);
      d.data() = td.vector.cast<double>();
      NoGradGuard guard;
      const auto pass = net.forward(constant(image), constant(d), false);
      ++forwards;
      Shape all = pass.final_prob->value.shape();
      std::vector<Shape> current{all};
      for (const auto& side : pass.side_prob) current.push_back(side->value.shape());
      if (shapes.empty()) {
        shapes = current;
      } else if (current != shapes) {
        ++shape_mismatch;
      }
      const auto& dg = pass.diagnostics;
      bool ok = strictly_unit(dg.lang_enc_weights) && strictly_unit(dg.lang_dec_weights) && strictly_unit(dg.scale);
      for (const auto& gt : dg.fusion_gates) ok = ok && strictly_unit(gt);
      out_of_range += !ok;
    }
  }
  c.expect(shape_mismatch == 0, std::to_string(shape_mismatch) + " shape mismatches");
  c.expect(out_of_range == 0, std::to_string(out_of_range) + " forwards with weights outside (0, 1)");
  return c.outcome(std::to_string(forwards) + " forwards over 3 language modes");
}

// ---------------------------------------------------------------------------
// Overfit dataset: 16 SPIE-compliant 128x128 scenes with templated priors.

std::vector<Sample> overfit_scenes() {
  std::vector<Sample> out;
  for (int i = 0; i < 16; ++i) {
    SceneParams p;
    p.height = p.width = 128;
    p.rng_seed = 100 + static_cast<std::uint64_t>(i);
    p.num_targets = 1 + i % 2;
    p.contrast = 0.16;
    p.target_area_ratio = 0.0012;
    auto scene = synth_scene(p);
    Sample s;
    s.image = std::move(scene.image);
    s.image.id = std::to_string(i + 1);
    s.prior = synth_description(scene.mask);
    s.mask = std::move(scene.mask);
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig overfit_config(LanguageMode mode) {
  TrainConfig c;
  c.epochs = 150;  // 2 steps per epoch: 300 optimizer steps
  c.batch_size = 8;
  c.lr = 3e-3;
  c.warmup_epochs = 2;
  c.seed = 1;
  c.language_mode = mode;
  c.model.stage_channels = {8, 16, 32, 64, 128};
  c.model.input_height = c.model.input_width = 128;
  c.model.descriptor_dim = 512;
  return c;
}

struct OverfitRuns {
  std::map<LanguageMode, RunReport> reports;
  double seconds = 0;
  std::string error;
};

const OverfitRuns& overfit_runs() {
  static const OverfitRuns runs = [] {
    OverfitRuns r;
    const auto t0 = Clock::now();
    try {
      const auto scenes = overfit_scenes();
      for (const auto& s : scenes)
        if (!spie_check(*s.mask, s.image).is_small_target) throw std::runtime_error("scene " + s.image.id + " is not SPIE-compliant");
      const auto provider = stub_provider(1, 512);
      for (const auto mode : {LanguageMode::training_only, LanguageMode::never})
        r.reports[mode] = train(overfit_config(mode), scenes, *provider).report;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return runs;
}

double last_epoch_loss(const RunReport& r) { return r.epochs.back().mean_loss; }

Outcome overfit() {
  const auto& runs = overfit_runs();
  if (!runs.error.empty()) return {false, runs.error};
  const auto& r = runs.reports.at(LanguageMode::training_only);
  const double first = r.step_losses.front(), last = last_epoch_loss(r);
  const double reduction = 1 - last / first;
  Checks c;
  c.expect(r.step_losses.size() == 300, std::to_string(r.step_losses.size()) + " steps");
  c.expect(r.final_metrics.iou >= 0.5, "train IoU " + num(r.final_metrics.iou));
  c.expect(reduction >= 0.5, "loss reduction " + num(reduction));
  c.expect(r.train_seconds + r.eval_seconds < 600, "runtime " + num(r.train_seconds + r.eval_seconds) + " s");
  return c.outcome("training_only, " + std::to_string(r.step_losses.size()) + " steps: train IoU " +
                   num(r.final_metrics.iou, 4) + ", loss " + num(first, 4) + " -> " + num(last, 4) + " (-" +
                   num(100 * reduction, 3) + "%), " + num(r.train_seconds + r.eval_seconds, 4) + " s");
}

Outcome language_trend() {
  const auto& runs = overfit_runs();
  if (!runs.error.empty()) return {false, runs.error};
  const double with = runs.reports.at(LanguageMode::training_only).final_metrics.iou;
  const double without = runs.reports.at(LanguageMode::never).final_metrics.iou;
  Checks c;
  c.expect(with >= without - 0.02, "training_only below never - 0.02");
  return c.outcome("train IoU training_only " + num(with, 4) + " vs never " + num(without, 4));
}

Outcome deep_supervision_closed_form() {
  Tensor<double> gt(2, 1, 16, 16);
  std::mt19937_64 rng(9);
  std::bernoulli_distribution on(0.1);
  for (Index i = 0; i < gt.size(); ++i) gt.data()[i] = on(rng) ? 1 : 0;
  ForwardOutputs<double> half;
  half.final = Tensor<double>::constant(gt.shape(), 0.5);
  for (auto& s : half.side_outputs) s = half.final;
  const double loss = deep_supervision_loss(half, gt);
  const double target = 7 * std::log(2.0);
  Checks c;
  c.expect(std::abs(loss - target) <= 1e-4, "loss " + num(loss, 10));
  return c.outcome("loss " + num(loss, 10) + " vs 7 ln 2 = " + num(target, 10));
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto bytes = read_file_bytes(e.path());
    files[fs::relative(e.path(), root).string()] = std::string(bytes.begin(), bytes.end());
  }
  return files;
}

CountTable split_counts(const LangIRDataset& ds, Split split) {
  std::vector<LanguagePrior> priors;
  for (const auto& s : ds.samples)
    if (s.split == split && s.prior) priors.push_back(*s.prior);
  return word_count_stats(priors);
}

Outcome datagen_goldens(const std::string& langir_sirst) {
  Checks c;
  const Bytes ir{'I', 'R'};
  c.expect(encode_image_base64(ir) == "SVI=", "base64 of IR");
  const auto sys = build_prompt(ir, PromptStyle::system);
  c.expect(sys.system_role == "You are an expert who can locate the small target in the infrared image.", "system role");
  c.expect(sys.task_text ==
               "Locate the small target within the infrared image and respond succinctly within 50 words, detailing the "
               "region where the target is situated.",
           "task text");
  c.expect(sys.image_b64 == "SVI=", "payload image");

  // write -> read -> write gives identical bytes
  const fs::path dir = fs::temp_directory_path() / ("lgnet_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::vector<Sample> samples;
  for (int i = 0; i < 6; ++i) {
    SceneParams p;
    p.height = 64;
    p.width = 80;
    p.target_area_ratio = 0.0012;
    p.rng_seed = 40 + static_cast<std::uint64_t>(i);
    auto scene = synth_scene(p);
    Sample s;
    s.image = std::move(scene.image);
    s.image.id = std::to_string(i * 3 + 1);
    s.prior = synth_description(scene.mask);
    s.mask = std::move(scene.mask);
    s.split = i < 4 ? Split::train : Split::test;
    samples.push_back(std::move(s));
  }
  for (const auto subset : {Subset::langir_irstd, Subset::langir_sirst}) {
    const auto layout = LangIRLayout::for_subset(subset);
    write_langir(dir / "a", layout, samples);
    const auto back = read_langir(dir / "a");
    write_langir(dir / "b", back.layout, back.samples);
    c.expect(back.layout.subset == subset, "subset detection");
    c.expect(tree_bytes(dir / "a") == tree_bytes(dir / "b"), "LangIR round trip " + std::string(to_string(subset)));
    bool same = back.samples.size() == samples.size();
    for (std::size_t i = 0; same && i < samples.size(); ++i)
      same = (back.samples[i].image.pixels.array() == samples[i].image.pixels.array()).all() &&
             (back.samples[i].mask->pixels.array() == samples[i].mask->pixels.array()).all() &&
             back.samples[i].prior->text == samples[i].prior->text;
    c.expect(same, "round-trip contents " + std::string(to_string(subset)));
    fs::remove_all(dir);
  }

  std::mt19937_64 rng(21);
  std::uniform_int_distribution<Eigen::Index> pos(0, 127);
  int too_long = 0;
  std::vector<LanguagePrior> priors;
  for (int i = 0; i < 500; ++i) {
    TargetMask m = blank(128, 128);
    for (int k = 0; k < 1 + i % 3; ++k) m.pixels(pos(rng), pos(rng)) = 1;
    for (const auto mode : {DescriptionMode::positional, DescriptionMode::quadrant}) {
      const auto d = synth_description(m, mode);
      too_long += count_words(d.text) > 50;
      priors.push_back(d);
    }
  }
  c.expect(too_long == 0, std::to_string(too_long) + " descriptions over 50 words");
  auto quadrant = [](Eigen::Index r, Eigen::Index col) {
    TargetMask m = blank(100, 100);
    m.pixels(r, col) = 1;
    return synth_description(m, DescriptionMode::quadrant).text;
  };
  c.expect(quadrant(10, 10) == "The small target lies in the top-left quadrant.", "top-left");
  c.expect(quadrant(10, 90) == "The small target lies in the top-right quadrant.", "top-right");
  c.expect(quadrant(90, 10) == "The small target lies in the bottom-left quadrant.", "bottom-left");
  c.expect(quadrant(90, 90) == "The small target lies in the bottom-right quadrant.", "bottom-right");

  const std::vector<LanguagePrior> head(priors.begin(), priors.begin() + 333), tail(priors.begin() + 333, priors.end());
  c.expect(word_count_stats(priors) == word_count_stats(head) + word_count_stats(tail), "word_count_stats additivity");
  const auto hand = word_count_stats({LanguagePrior::from_text("Upper left, lower-left; CENTER right upper")});
  c.expect(hand == CountTable{2, 1, 1, 1, 2}, "hand keyword counts");

  std::string table = "real LangIR not supplied";
  if (!langir_sirst.empty()) {
    const auto ds = read_langir(langir_sirst, Subset::langir_sirst);
    const auto t = split_counts(ds, Split::train);
    table = "NUAA-SIRST train {" + std::to_string(t.left) + ", " + std::to_string(t.right) + ", " +
            std::to_string(t.center) + ", " + std::to_string(t.lower) + ", " + std::to_string(t.upper) + "}";
    c.expect(t == CountTable{157, 87, 102, 64, 111}, table);
  }
  return c.outcome("prompt strings, base64, round trip, 1000 descriptions <= 50 words, quadrant strings, additivity; " + table);
}

Outcome spie_property() {
  Checks c;
  double worst_area = 0;
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneParams p;
    p.rng_seed = seed;
    p.num_targets = 1 + static_cast<int>(seed % 3);
    p.background = static_cast<Background>(seed % 3);
    const auto s = synth_scene(p);
    const auto r = spie_check(s.mask, s.image);
    worst_area = std::max(worst_area, r.area_ratio);
    failures += !(r.is_small_target && r.area_ratio < kSpieMaxAreaRatio);
  }
  c.expect(failures == 0, std::to_string(failures) + " scenes fail");
  return c.outcome("100 seeds on 256x256, max area ratio " + num(worst_area, 4));
}

Outcome vlm_contract() {
  set_warning_sink([](std::string_view) {});
  Checks c;
  const auto payload = build_prompt(Bytes{'I', 'R'}, PromptStyle::system);
  {
    MockVLMServer server([](int call, const httplib::Request&, httplib::Response& res) {
      if (call <= 2) {
        res.status = 503;
        return;
      }
      res.set_content(chat_reply("The target is in the upper left region."), "application/json");
    });
    HttpVLMClient client(mock_config(server));
    const auto r = request_description(client, payload);
    c.expect(r.attempts == 3 && server.calls() == 3, "retry-then-succeed after 2 failures");
    c.expect(!r.refused && r.text == "The target is in the upper left region.", "retried reply text");
  }
  {
    MockVLMServer server([](int, const httplib::Request&, httplib::Response& res) {
      res.set_content(chat_reply("As an AI assistant, I am unable to do this task."), "application/json");
    });
    HttpVLMClient client(mock_config(server));
    c.expect(request_description(client, payload).refused, "refusal flag");
  }
  int peak = 0;
  {
    MockVLMServer server(
        [](int, const httplib::Request&, httplib::Response& res) {
          res.set_content(chat_reply("upper right"), "application/json");
        },
        25);
    HttpVLMClient client(mock_config(server));
    std::vector<PromptPayload> ps(16, payload);
    BatchOptions opt;
    opt.max_in_flight = 3;
    const auto out = request_descriptions(client, ps, opt);
    int ok = 0;
    for (const auto& item : out) ok += item.response.has_value();
    peak = server.peak_in_flight();
    c.expect(ok == 16, std::to_string(ok) + "/16 batch replies");
    c.expect(peak <= 3, "peak in flight " + std::to_string(peak));
  }
  set_warning_sink({});
  return c.outcome("retry after 2x 503, refusal flagged, peak in flight " + std::to_string(peak) + " of cap 3");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance checks for the LGNet implementation", "lgnet_acceptance");
  std::vector<std::string> only;
  std::string langir_sirst;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--langir-sirst", langir_sirst, "Real LangIR NUAA-SIRST root for the keyword table")->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric-oracle", metric_oracle},
      {"metric-anchors", metric_anchors},
      {"gradient-check", gradient_check},
      {"shape-language-invariance", shape_language_invariance},
      {"overfit", overfit},
      {"language-trend", language_trend},
      {"deep-supervision-closed-form", deep_supervision_closed_form},
      {"datagen-goldens", [&] { return datagen_goldens(langir_sirst); }},
      {"spie-property", spie_property},
      {"vlm-contract", vlm_contract},
  };
  for (const auto& name : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
      std::cerr << "unknown criterion '" << name << "'\n";
      return 2;
    }
  }

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
