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

#include "cli.hpp"
#include "vlm_mock.hpp"

#include "lgnet/langir.hpp"
#include "lgnet/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

using namespace lgnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lgnet_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "lgnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = os.str();
  }
  return files;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct QuietWarnings {
  QuietWarnings() { set_warning_sink([](std::string_view) {}); }
  ~QuietWarnings() { set_warning_sink({}); }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  for (const char* sub : {"train", "evaluate", "generate-descriptions", "synth", "stats", "report"}) {
    const auto r = run({sub, "--help"});
    CHECK_MESSAGE(r.code == 0, sub);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  const auto bad = run({"synth", "--out", "x", "--no-such-flag"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("no-such-flag") != std::string::npos);
  CHECK(run({"synth", "--out", "x", "--subset", "coco"}).code == 2);
}

TEST_CASE("synth is byte-identical per seed") {
  const auto dir = scratch_dir("synth");
  const std::vector<std::string> common = {"--n", "16", "--size", "64", "--area-ratio", "0.0012"};
  auto args = [&](const std::string& out, const std::string& seed) {
    std::vector<std::string> a = {"synth", "--out", (dir / out).string(), "--seed", seed};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  REQUIRE(run(args("a", "1")).code == 0);
  REQUIRE(run(args("b", "1")).code == 0);
  REQUIRE(run(args("c", "2")).code == 0);
  const auto a = tree_bytes(dir / "a");
  CHECK(a.size() == 16 * 3 + 2);
  CHECK(a == tree_bytes(dir / "b"));
  CHECK(a != tree_bytes(dir / "c"));

  const auto ds = read_langir(dir / "a");
  CHECK(ds.manifest.train_ids.size() == 12);
  CHECK(ds.manifest.test_ids.size() == 4);
  for (const auto& s : ds.samples) CHECK(spie_check(*s.mask, s.image).is_small_target);
}

TEST_CASE("stats matches word_count_stats") {
  const auto dir = scratch_dir("stats");
  REQUIRE(run({"synth", "--out", (dir / "d").string(), "--n", "24", "--size", "64", "--area-ratio", "0.0012",
               "--max-targets", "2", "--seed", "7"})
              .code == 0);
  const auto ds = read_langir(dir / "d");
  const auto r = run({"stats", "--root", (dir / "d").string(), "--json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CountTable total;
  for (const auto split : {Split::train, Split::test}) {
    std::vector<LanguagePrior> priors;
    for (const auto& s : ds.samples)
      if (s.split == split) priors.push_back(*s.prior);
    const auto c = word_count_stats(priors);
    const auto& row = j.at(split == Split::train ? "train" : "test");
    CHECK(row.at("texts") == priors.size());
    CHECK(row.at("left") == c.left);
    CHECK(row.at("right") == c.right);
    CHECK(row.at("center") == c.center);
    CHECK(row.at("lower") == c.lower);
    CHECK(row.at("upper") == c.upper);
    total += c;
  }
  CHECK(total.left + total.right + total.center + total.lower + total.upper > 0);

  const auto table = run({"stats", "--root", (dir / "d").string(), "--split", "train"});
  CHECK(table.code == 0);
  CHECK(table.out.find("train") != std::string::npos);
  CHECK(table.out.find("test") == std::string::npos);
}

TEST_CASE("train, evaluate and report") {
  QuietWarnings q;
  const auto dir = scratch_dir("train");
  const auto data = (dir / "d").string();
  REQUIRE(run({"synth", "--out", data, "--n", "6", "--size", "64", "--area-ratio", "0.0012"}).code == 0);
  {
    std::ofstream cfg(dir / "run.toml");
    cfg << "# small run\nepochs = 5\nbatch_size = 2\nlr = 0.003\nwarmup_epochs = 1\ninput_size = 32\n"
           "stage_channels = [4, 4, 8, 8, 8]\nublock_heights = [4, 3, 3, 2, 1]\ndescriptor_dim = 8\n"
           "language_mode = \"never\"\ncheckpoint_every = 1\n";
  }

  const auto zero = run({"train", "--data", data, "--out", (dir / "r0").string(), "--epochs", "0"});
  CHECK(zero.code != 0);
  CHECK(zero.err.find("epochs") != std::string::npos);

  const auto run_dir = dir / "r1";
  const auto t = run({"train", "--data", data, "--out", run_dir.string(), "--config", (dir / "run.toml").string(),
                      "--epochs", "2", "--language-mode", "training_only"});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  const auto report = RunReport::from_json(slurp(run_dir / "report.json"));
  CHECK(report.epochs.size() == 2);  // the flag wins over the file
  CHECK(report.config.language_mode == LanguageMode::training_only);
  CHECK(report.config.batch_size == 2);
  CHECK(report.config.model.descriptor_dim == 8);
  CHECK(report.config.model.ublock_heights[4] == 1);
  CHECK(report.evaluated_on == "test");
  CHECK(fs::exists(run_dir / "checkpoints" / "epoch_0001.ckpt"));
  CHECK(fs::exists(run_dir / "checkpoints" / "final.ckpt"));
  CHECK(fs::exists(run_dir / "report.txt"));
  CHECK(fs::exists(run_dir / "loss.svg"));

  {
    std::ofstream bad(dir / "bad.toml");
    bad << "epochs = 2\nlearning_rate = 0.1\n";
  }
  CHECK(run({"train", "--data", data, "--out", (dir / "r2").string(), "--config", (dir / "bad.toml").string()}).code == 2);

  const auto ckpt = (run_dir / "checkpoints" / "final.ckpt").string();
  const auto e1 = run({"evaluate", "--checkpoint", ckpt, "--data", data, "--out", (dir / "eval.json").string()});
  REQUIRE_MESSAGE(e1.code == 0, e1.err);
  const auto m = MetricReport::from_json(slurp(dir / "eval.json"));
  CHECK(m.n == 1);  // floor(0.25 * 6) test scenes
  CHECK(m.iou == doctest::Approx(report.final_metrics.iou));
  const auto e2 = run({"evaluate", "--checkpoint", ckpt, "--data", data, "--language-mode", "training_and_test"});
  CHECK(e2.code == 0);
  const auto mismatch = run({"evaluate", "--checkpoint", ckpt, "--data", data, "--provider", "clip", "--clip-dir",
                             (dir / "none").string()});
  CHECK(mismatch.code == 1);
  CHECK(mismatch.err.find("not found") != std::string::npos);

  const auto rep = run({"report", run_dir.string(), (run_dir / "report.json").string(), "--names", "first", "second",
                        "--out", (dir / "rep").string()});
  REQUIRE_MESSAGE(rep.code == 0, rep.err);
  CHECK(rep.out.find("first") != std::string::npos);
  CHECK(slurp(dir / "rep" / "loss.svg").find("<polyline") != std::string::npos);
  const auto table = nlohmann::json::parse(slurp(dir / "rep" / "metrics.json"));
  CHECK(table.size() == 2);
  CHECK(table[1]["run"] == "second");
  CHECK(run({"report", run_dir.string(), "--names", "a", "b", "--out", (dir / "rep2").string()}).code == 2);
}

TEST_CASE("generate-descriptions over a mock server") {
  QuietWarnings q;
  const auto dir = scratch_dir("gen");
  const auto data = (dir / "d").string();
  REQUIRE(run({"synth", "--out", data, "--n", "4", "--size", "64", "--area-ratio", "0.0012"}).code == 0);
  testing::MockVLMServer server([](int call, const httplib::Request&, httplib::Response& res) {
    const std::string text = call == 1 ? "As an AI assistant, I am unable to do this task." : "Target in the upper left.";
    res.set_content(testing::chat_reply(text), "application/json");
  });
  const auto ds = read_langir(data);
  const auto desc = [&](const std::string& id) { return fs::path(data) / "descriptions" / ds.layout.description_name(id); };

  auto kept = run({"generate-descriptions", "--root", data, "--client", "http", "--endpoint", server.endpoint()});
  CHECK(kept.code == 0);
  CHECK(server.calls() == 0);

  const auto r = run({"generate-descriptions", "--root", data, "--client", "http", "--endpoint", server.endpoint(),
                      "--overwrite", "--max-in-flight", "1", "--api-key-env", "LGNET_TEST_UNSET_KEY"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(server.calls() == 4);
  CHECK(r.out.find("written 3, kept 0, refused 1") != std::string::npos);
  int upper_left = 0;
  for (const auto& id : ds.manifest.train_ids) upper_left += slurp(desc(id)) == "Target in the upper left.";
  for (const auto& id : ds.manifest.test_ids) upper_left += slurp(desc(id)) == "Target in the upper left.";
  CHECK(upper_left == 3);

  const auto few = run({"generate-descriptions", "--root", data, "--style", "few_shot", "--overwrite"});
  CHECK(few.code == 2);
}
