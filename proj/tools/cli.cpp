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


#include "cli.hpp"

#include "lgnet/datagen.hpp"
#include "lgnet/langir.hpp"
#include "lgnet/pipeline.hpp"
#include "lgnet/vlm.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgnet {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Applies a flat TOML-like file (keys spelled like the TrainConfig fields,
/// batch_size = 8) to the options of `cmd` that were not given as flags.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  for (const auto& item : CLI::ConfigTOML().from_config(in)) {
    if (!item.parents.empty()) throw CLI::ConfigError("sections are not supported: [" + item.parents.front() + "]");
    if (item.name == "++" || item.name == "--") continue;
    std::string flag = "--" + item.name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* opt = cmd.get_option_no_throw(flag);
    if (opt == nullptr || flag == "--config") throw CLI::ConfigError::Extras(item.name);
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

const std::vector<std::string> kModes = {"never", "training_only", "training_and_test"};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Embedding provider flags shared by train and evaluate.

struct ProviderFlags {
  std::string kind = "stub";
  std::uint64_t seed = 0;
  std::string clip_model = "ViT-B-16";
  std::string clip_dir;

  void add(CLI::App* app) {
    app->add_option("--provider", kind, "Embedding provider")->check(CLI::IsMember({"stub", "clip"}))->capture_default_str();
    app->add_option("--provider-seed", seed, "Stub provider hash seed")->capture_default_str();
    app->add_option("--clip-model", clip_model, "Registered CLIP model id")->capture_default_str();
    app->add_option("--clip-dir", clip_dir, "CLIP checkpoint directory (default: $LGNET_CLIP_DIR or ~/.cache/lgnet)");
  }

  std::unique_ptr<EmbeddingProvider> make(Eigen::Index dim) const {
    if (kind == "stub") return stub_provider(seed, dim);
    return pretrained_provider(clip_model, "cpu", clip_dir);
  }
};

TrainConfig default_train_config() {
  TrainConfig c;
  c.seed = 1;
  return c;
}

// ---------------------------------------------------------------------------
// Plots and tables

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line plot of per-epoch losses, one polyline per run.
std::string loss_svg(const std::vector<Series>& series) {
  const double w = 640, h = 400, left = 70, right = 150, top = 30, bottom = 50;
  std::size_t n = 1;
  double hi = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) hi = std::max(hi, v);
  }
  if (hi <= 0) hi = 1;
  const double pw = w - left - right, ph = h - top - bottom;
  auto x = [&](std::size_t i) { return left + (n > 1 ? pw * double(i) / double(n - 1) : pw / 2); };
  auto y = [&](double v) { return top + ph * (1 - v / hi); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = hi * t / 4;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << fixed(v, 3) << "</text>\n";
  }
  os << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">1</text>\n";
  os << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << n << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">epoch</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 16 " << top + ph / 2
     << ")\" text-anchor=\"middle\">mean loss</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i)
      if (std::isfinite(series[k].values[i])) os << fixed(x(i), 2) << ',' << fixed(y(series[k].values[i]), 2) << ' ';
    os << "\"/>\n";
    const double ly = top + 16 * double(k + 1);
    os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly - 4
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly << "\">" << series[k].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<double> epoch_losses(const RunReport& r) {
  std::vector<double> v;
  for (const auto& e : r.epochs) v.push_back(e.mean_loss);
  return v;
}

std::string epoch_table(const RunReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "epoch" << std::setw(14) << "mean_loss" << std::setw(12) << "lr" << "seconds\n";
  for (const auto& e : r.epochs) {
    std::ostringstream lr;
    lr << std::scientific << std::setprecision(3) << e.lr;
    os << std::setw(8) << e.epoch << std::setw(14) << fixed(e.mean_loss, 6) << std::setw(12) << lr.str()
       << fixed(e.seconds, 2) << '\n';
  }
  return os.str();
}

/// IoU, nIoU and Pd in percent, Fa in units of 1e-6.
std::string metrics_table(const std::vector<std::pair<std::string, RunReport>>& runs) {
  std::size_t width = 4;
  for (const auto& [name, r] : runs) width = std::max(width, name.size());
  std::ostringstream os;
  os << std::left << std::setw(int(width) + 2) << "run" << std::setw(19) << "language_mode" << std::setw(8) << "epochs"
     << std::setw(6) << "eval" << std::setw(9) << "IoU(%)" << std::setw(9) << "nIoU(%)" << std::setw(9) << "Pd(%)"
     << "Fa(1e-6)\n";
  for (const auto& [name, r] : runs) {
    const auto& m = r.final_metrics;
    os << std::setw(int(width) + 2) << name << std::setw(19) << to_string(r.config.language_mode) << std::setw(8)
       << r.epochs.size() << std::setw(6) << r.evaluated_on << std::setw(9) << fixed(100 * m.iou, 2) << std::setw(9)
       << fixed(100 * m.niou, 2) << std::setw(9) << fixed(100 * m.pd, 2) << fixed(1e6 * m.fa, 2) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands

struct TrainArgs {
  TrainConfig cfg = default_train_config();
  std::string optimizer = "adan";
  std::string language_mode = "training_only";
  std::string checkpoint_dir;
  Eigen::Index input_size = 512;
  std::vector<Eigen::Index> stage_channels{16, 32, 64, 128, 256};
  std::vector<Eigen::Index> ublock_heights{7, 6, 5, 4, 4};
  ProviderFlags provider;
  std::string data, out, config;
};

void add_train(CLI::App& app, TrainArgs& a, std::ostream& out) {
  auto* cmd = app.add_subcommand("train", "Train LGNet on a LangIR dataset");
  cmd->add_option("--config", a.config, "Flat key = value file; flags given on the command line win")
      ->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "LangIR dataset root")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--out", a.out, "Run directory for reports (and checkpoints unless --checkpoint-dir)")->required();
  auto& c = a.cfg;
  cmd->add_option("--epochs", c.epochs)->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size)->capture_default_str();
  cmd->add_option("--lr", c.lr, "Peak learning rate")->capture_default_str();
  cmd->add_option("--warmup-epochs", c.warmup_epochs, "Linear warm-up length")->capture_default_str();
  cmd->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  cmd->add_option("--optimizer", a.optimizer)->check(CLI::IsMember({"adan", "adamw"}))->capture_default_str();
  cmd->add_option("--language-mode", a.language_mode)->check(CLI::IsMember(kModes))->capture_default_str();
  cmd->add_option("--seed", c.seed)->capture_default_str();
  cmd->add_option("--device", c.device)->capture_default_str();
  cmd->add_option("--checkpoint-dir", a.checkpoint_dir, "Default: <out>/checkpoints");
  cmd->add_option("--checkpoint-every", c.checkpoint_every, "Epochs between checkpoints")->capture_default_str();
  cmd->add_option("--threshold", c.metrics.threshold, "Binarisation threshold")->capture_default_str();
  cmd->add_option("--centroid-tol", c.metrics.centroid_tol, "Pd/Fa centroid distance (px)")->capture_default_str();
  cmd->add_option("--input-size", a.input_size, "Square network input; images are resized")->capture_default_str();
  cmd->add_option("--stage-channels", a.stage_channels, "Five encoder widths")->delimiter(',')->expected(5)->capture_default_str();
  cmd->add_option("--ublock-heights", a.ublock_heights, "Five U-block heights")->delimiter(',')->expected(5)->capture_default_str();
  cmd->add_option("--descriptor-dim", c.model.descriptor_dim, "Target descriptor width")->capture_default_str();
  cmd->add_option("--output-prior", c.model.output_prior, "Initial side-output foreground probability")->capture_default_str();
  a.provider.add(cmd);
  cmd->callback([cmd, &a, &out] {
    if (!a.config.empty()) apply_config_file(*cmd, a.config);
    auto& cfg = a.cfg;
    cfg.optimizer = parse_optimizer(a.optimizer);
    cfg.language_mode = parse_language_mode(a.language_mode);
    cfg.model.input_height = cfg.model.input_width = a.input_size;
    cfg.model.seed = cfg.seed;
    std::copy(a.stage_channels.begin(), a.stage_channels.end(), cfg.model.stage_channels.begin());
    std::copy(a.ublock_heights.begin(), a.ublock_heights.end(), cfg.model.ublock_heights.begin());
    const fs::path run_dir(a.out);
    cfg.checkpoint_dir = a.checkpoint_dir.empty() ? run_dir / "checkpoints" : fs::path(a.checkpoint_dir);
    cfg.validate();
    const auto provider = a.provider.make(cfg.model.descriptor_dim);
    DatasetManifest manifest;
    manifest.root_path = a.data;
    const auto report = train(cfg, manifest, *provider, [&](const EpochRecord& e) {
      out << "epoch " << e.epoch << '/' << cfg.epochs << "  loss " << fixed(e.mean_loss, 6) << "  lr " << e.lr << "  "
          << fixed(e.seconds, 1) << "s" << std::endl;
      return true;
    });
    fs::create_directories(run_dir);
    write_file(run_dir / "report.json", report.to_json() + "\n");
    write_file(run_dir / "report.txt", metrics_table({{run_dir.filename().string(), report}}) + "\n" + epoch_table(report));
    write_file(run_dir / "loss.svg", loss_svg({{to_string(cfg.language_mode).data(), epoch_losses(report)}}));
    out << "metrics on " << report.evaluated_on << " split\n" << report.final_metrics.to_text();
    out << "checkpoint " << report.checkpoint.string() << '\n';
  });
}

struct EvaluateArgs {
  std::string checkpoint, data, mode, out;
  std::optional<double> threshold, centroid_tol;
  ProviderFlags provider;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a, std::ostream& out) {
  auto* cmd = app.add_subcommand("evaluate", "Score a checkpoint on the test split of a LangIR dataset");
  cmd->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
  cmd->add_option("--data", a.data, "LangIR dataset root")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--language-mode", a.mode, "Test-time text rule (default: the checkpoint's mode)")->check(CLI::IsMember(kModes));
  cmd->add_option("--threshold", a.threshold, "Default: the checkpoint's threshold");
  cmd->add_option("--centroid-tol", a.centroid_tol, "Default: the checkpoint's tolerance");
  cmd->add_option("--out", a.out, "Also write the report as JSON");
  a.provider.add(cmd);
  cmd->callback([&a, &out] {
    const auto ckpt = read_checkpoint(a.checkpoint);
    MetricOptions opt = ckpt.config.metrics;
    if (a.threshold) opt.threshold = *a.threshold;
    if (a.centroid_tol) opt.centroid_tol = *a.centroid_tol;
    const auto mode = a.mode.empty() ? ckpt.config.language_mode : parse_language_mode(a.mode);
    const auto provider = a.provider.make(ckpt.config.model.descriptor_dim);
    DatasetManifest manifest;
    manifest.root_path = a.data;
    const auto report = evaluate(a.checkpoint, manifest, *provider, mode, opt);
    out << report.to_text();
    if (!a.out.empty()) write_file(a.out, report.to_json() + "\n");
  });
}

struct GenerateArgs {
  std::string root, client = "stub", style = "system", split = "all", examples;
  int max_words = kDefaultMaxWords;
  bool overwrite = false;
  std::uint64_t seed = 0;
  HttpClientConfig http;
  BatchOptions batch;
};

std::vector<FewShotExample> read_examples(const fs::path& file) {
  const json j = json::parse(read_file(file));
  std::vector<FewShotExample> out;
  for (const auto& e : j) {
    fs::path image = e.at("image").get<std::string>();
    if (image.is_relative()) image = file.parent_path() / image;
    out.push_back({encode_image_base64(read_file_bytes(image)), e.at("description").get<std::string>()});
  }
  return out;
}

bool split_selected(const std::string& split, Split s) {
  return split == "all" || (split == "train") == (s == Split::train);
}

int run_generate(GenerateArgs& a, std::ostream& out) {
  const auto ds = read_langir(a.root);
  const fs::path root(a.root);
  const auto style = parse_prompt_style(a.style);
  std::vector<FewShotExample> shots;
  if (!a.examples.empty()) shots = read_examples(a.examples);
  if (style == PromptStyle::few_shot && shots.empty()) throw CLI::ValidationError("--examples", "required for --style few_shot");

  std::vector<std::string> ids;
  std::vector<PromptPayload> payloads;
  long kept = 0;
  for (const auto& s : ds.samples) {
    if (!split_selected(a.split, s.split)) continue;
    const auto& id = s.image.id;
    if (fs::exists(root / "descriptions" / ds.layout.description_name(id)) && !a.overwrite) {
      ++kept;
      continue;
    }
    ids.push_back(id);
    payloads.push_back(build_prompt(read_file_bytes(root / "images" / ds.layout.image_name(id)), style, a.max_words,
                                    style == PromptStyle::few_shot ? shots : std::vector<FewShotExample>{}));
  }

  std::unique_ptr<VLMClient> client;
  if (a.client == "stub") {
    client = std::make_unique<StubVLMClient>(a.seed);
  } else {
    client = std::make_unique<HttpVLMClient>(a.http);
  }
  const auto results = request_descriptions(*client, payloads, a.batch);
  long written = 0, refused = 0, failed = 0, flagged = 0;
  fs::create_directories(root / "descriptions");
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.response) {
      ++failed;
      warn(ids[i] + ": " + r.error);
      continue;
    }
    if (r.response->refused) {
      ++refused;
      warn(ids[i] + ": refused");
      continue;
    }
    const auto check = validate_description(r.response->text, a.max_words);
    if (!check.ok()) {
      ++flagged;
      for (const auto& issue : check.issues) warn(ids[i] + ": " + issue);
    }
    write_file(root / "descriptions" / ds.layout.description_name(ids[i]), r.response->text);
    ++written;
  }
  out << "written " << written << ", kept " << kept << ", refused " << refused << ", failed " << failed
      << ", flagged " << flagged << '\n';
  return failed > 0 ? 1 : 0;
}

void add_generate(CLI::App& app, GenerateArgs& a, std::ostream& out, int& status) {
  auto* cmd = app.add_subcommand("generate-descriptions", "Fill descriptions/ of a LangIR dataset with VLM priors");
  cmd->add_option("--root", a.root, "LangIR dataset root")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--client", a.client)->check(CLI::IsMember({"stub", "http"}))->capture_default_str();
  cmd->add_option("--style", a.style, "Prompt style")->check(CLI::IsMember({"system", "few_shot", "zero_shot"}))->capture_default_str();
  cmd->add_option("--split", a.split)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  cmd->add_option("--max-words", a.max_words)->capture_default_str();
  cmd->add_option("--examples", a.examples, "JSON list of {image, description} exemplars for few_shot")->check(CLI::ExistingFile);
  cmd->add_flag("--overwrite", a.overwrite, "Replace existing description files");
  cmd->add_option("--seed", a.seed, "Stub client seed")->capture_default_str();
  cmd->add_option("--endpoint", a.http.endpoint)->capture_default_str();
  cmd->add_option("--model", a.http.model_id)->capture_default_str();
  cmd->add_option("--adapter", a.http.adapter)->check(CLI::IsMember({"chat_completion", "openai", "anthropic"}))->capture_default_str();
  cmd->add_option("--api-key-env", a.http.api_key_env, "Environment variable holding the API key")->capture_default_str();
  cmd->add_option("--max-tokens", a.http.max_tokens)->capture_default_str();
  cmd->add_option("--max-retries", a.http.max_retries)->capture_default_str();
  cmd->add_option("--timeout", a.http.timeout_s, "Seconds per request")->capture_default_str();
  cmd->add_option("--max-in-flight", a.batch.max_in_flight)->capture_default_str();
  cmd->add_option("--min-interval-ms", a.batch.min_interval_ms, "Spacing between request starts")->capture_default_str();
  cmd->callback([&a, &out, &status] { status = run_generate(a, out); });
}

struct SynthArgs {
  std::string out, subset = "irstd", mode = "positional", background = "clutter";
  int n = 16;
  std::uint64_t seed = 1;
  Eigen::Index size = 256;
  int max_targets = 1;
  double test_fraction = 0.25;
  SceneParams scene;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + i + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void add_synth(CLI::App& app, SynthArgs& a, std::ostream& out) {
  auto* cmd = app.add_subcommand("synth", "Write a synthetic LangIR-layout dataset");
  cmd->add_option("--out", a.out, "Dataset root")->required();
  cmd->add_option("--n", a.n, "Number of scenes")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
  cmd->add_option("--size", a.size, "Square image side")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--subset", a.subset, "File naming scheme")->check(CLI::IsMember({"irstd", "sirst"}))->capture_default_str();
  cmd->add_option("--test-fraction", a.test_fraction, "Trailing share of scenes put in test.txt")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--max-targets", a.max_targets, "Scene i has 1 + i % max_targets targets")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--area-ratio", a.scene.target_area_ratio, "Total target area / image area")->capture_default_str();
  cmd->add_option("--contrast", a.scene.contrast)->capture_default_str();
  cmd->add_option("--noise", a.scene.noise_sigma)->capture_default_str();
  cmd->add_option("--clutter", a.scene.clutter_std)->capture_default_str();
  cmd->add_option("--background", a.background)->check(CLI::IsMember({"flat", "gradient", "clutter"}))->capture_default_str();
  cmd->add_option("--description-mode", a.mode)->check(CLI::IsMember({"positional", "quadrant"}))->capture_default_str();
  cmd->callback([&a, &out] {
    const auto subset = parse_subset(a.subset);
    const auto mode = parse_description_mode(a.mode);
    const int n_test = static_cast<int>(std::floor(a.test_fraction * a.n + 1e-9));
    std::vector<Sample> samples;
    for (int i = 0; i < a.n; ++i) {
      SceneParams p = a.scene;
      p.height = p.width = a.size;
      p.num_targets = 1 + i % a.max_targets;
      p.background = parse_background(a.background);
      p.rng_seed = mix_seed(a.seed, static_cast<std::uint64_t>(i));
      auto scene = synth_scene(p);
      Sample s;
      s.image = std::move(scene.image);
      s.image.id = std::to_string(i + 1);
      s.prior = synth_description(scene.mask, mode);
      s.mask = std::move(scene.mask);
      s.split = i >= a.n - n_test ? Split::test : Split::train;
      samples.push_back(std::move(s));
    }
    const auto m = write_langir(a.out, LangIRLayout::for_subset(subset), samples);
    out << "wrote " << m.train_ids.size() << " train and " << m.test_ids.size() << " test samples to " << a.out << '\n';
  });
}

struct StatsArgs {
  std::string root, split = "all";
  bool as_json = false;
};

void add_stats(CLI::App& app, StatsArgs& a, std::ostream& out) {
  auto* cmd = app.add_subcommand("stats", "Positional keyword counts over a dataset's descriptions");
  cmd->add_option("--root", a.root, "LangIR dataset root")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--split", a.split)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
  cmd->add_flag("--json", a.as_json, "Print JSON instead of a table");
  cmd->callback([&a, &out] {
    const auto ds = read_langir(a.root);
    std::vector<std::pair<std::string, Split>> rows;
    if (a.split != "test") rows.emplace_back("train", Split::train);
    if (a.split != "train") rows.emplace_back("test", Split::test);
    json j = json::object();
    std::ostringstream table;
    table << std::left << std::setw(8) << "split" << std::setw(8) << "texts" << std::setw(8) << "left" << std::setw(8)
          << "right" << std::setw(8) << "center" << std::setw(8) << "lower" << "upper\n";
    for (const auto& [name, split] : rows) {
      std::vector<LanguagePrior> priors;
      for (const auto& s : ds.samples)
        if (s.split == split && s.prior) priors.push_back(*s.prior);
      const auto c = word_count_stats(priors);
      j[name] = {{"texts", priors.size()}, {"left", c.left}, {"right", c.right}, {"center", c.center},
                 {"lower", c.lower}, {"upper", c.upper}};
      table << std::setw(8) << name << std::setw(8) << priors.size() << std::setw(8) << c.left << std::setw(8) << c.right
            << std::setw(8) << c.center << std::setw(8) << c.lower << c.upper << '\n';
    }
    out << (a.as_json ? j.dump(2) + "\n" : table.str());
  });
}

struct ReportArgs {
  std::vector<std::string> runs, names;
  std::string out;
};

void add_report(CLI::App& app, ReportArgs& a, std::ostream& out) {
  auto* cmd = app.add_subcommand("report", "Render metric tables and a loss-curve plot for one or more runs");
  cmd->add_option("runs", a.runs, "Run directories or report.json files")->required();
  cmd->add_option("--names", a.names, "Labels, one per run (default: directory names)");
  cmd->add_option("--out", a.out, "Output directory for metrics.txt, metrics.json and loss.svg")->required();
  cmd->callback([&a, &out] {
    if (!a.names.empty() && a.names.size() != a.runs.size())
      throw CLI::ValidationError("--names", "expected one label per run");
    std::vector<std::pair<std::string, RunReport>> runs;
    std::vector<Series> series;
    json j = json::array();
    for (std::size_t i = 0; i < a.runs.size(); ++i) {
      fs::path p(a.runs[i]);
      if (fs::is_directory(p)) p /= "report.json";
      auto r = RunReport::from_json(read_file(p));
      const fs::path label_dir = p.parent_path().empty() ? fs::current_path() : p.parent_path();
      const std::string name = a.names.empty() ? fs::weakly_canonical(label_dir).filename().string() : a.names[i];
      series.push_back({name, epoch_losses(r)});
      j.push_back({{"run", name},
                   {"language_mode", to_string(r.config.language_mode)},
                   {"epochs", r.epochs.size()},
                   {"evaluated_on", r.evaluated_on},
                   {"metrics", json::parse(r.final_metrics.to_json())}});
      runs.emplace_back(name, std::move(r));
    }
    const fs::path dir(a.out);
    const auto table = metrics_table(runs);
    write_file(dir / "metrics.txt", table);
    write_file(dir / "metrics.json", j.dump(2) + "\n");
    write_file(dir / "loss.svg", loss_svg(series));
    out << table;
  });
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("LGNet: language-guided infrared small target detection", "lgnet");
  app.require_subcommand(1);
  app.fallthrough(false);

  TrainArgs train_args;
  EvaluateArgs eval_args;
  GenerateArgs gen_args;
  SynthArgs synth_args;
  StatsArgs stats_args;
  ReportArgs report_args;
  int status = 0;
  add_train(app, train_args, out);
  add_evaluate(app, eval_args, out);
  add_generate(app, gen_args, out, status);
  add_synth(app, synth_args, out);
  add_stats(app, stats_args, out);
  add_report(app, report_args, out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "lgnet: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    err << "lgnet: error: " << e.what() << '\n';
    return 1;
  }
  return status;
}

}  // namespace lgnet
