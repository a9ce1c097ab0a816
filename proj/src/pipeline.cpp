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

#include "lgnet/pipeline.hpp"

#include "lgnet/langir.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lgnet {
namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

json model_json(const LGNetConfig& m) {
  return {{"in_channels", m.in_channels},
          {"stage_channels", m.stage_channels},
          {"ublock_heights", m.ublock_heights},
          {"descriptor_dim", m.descriptor_dim},
          {"input_height", m.input_height},
          {"input_width", m.input_width},
          {"output_prior", m.output_prior},
          {"seed", m.seed}};
}

LGNetConfig model_from_json(const json& j) {
  LGNetConfig m;
  m.in_channels = j.value("in_channels", m.in_channels);
  m.stage_channels = j.value("stage_channels", m.stage_channels);
  m.ublock_heights = j.value("ublock_heights", m.ublock_heights);
  m.descriptor_dim = j.value("descriptor_dim", m.descriptor_dim);
  m.input_height = j.value("input_height", m.input_height);
  m.input_width = j.value("input_width", m.input_width);
  m.output_prior = j.value("output_prior", m.output_prior);
  m.seed = j.value("seed", m.seed);
  return m;
}

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup_epochs", c.warmup_epochs},
          {"weight_decay", c.weight_decay},
          {"optimizer", to_string(c.optimizer)},
          {"language_mode", to_string(c.language_mode)},
          {"seed", c.seed},
          {"device", c.device},
          {"checkpoint_dir", c.checkpoint_dir.string()},
          {"checkpoint_every", c.checkpoint_every},
          {"threshold", c.metrics.threshold},
          {"centroid_tol", c.metrics.centroid_tol},
          {"model", model_json(c.model)}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.optimizer = parse_optimizer(j.value("optimizer", std::string(to_string(c.optimizer))));
  c.language_mode = parse_language_mode(j.value("language_mode", std::string(to_string(c.language_mode))));
  c.seed = j.value("seed", c.seed);
  c.device = j.value("device", c.device);
  c.checkpoint_dir = j.value("checkpoint_dir", std::string());
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.metrics.threshold = j.value("threshold", c.metrics.threshold);
  c.metrics.centroid_tol = j.value("centroid_tol", c.metrics.centroid_tol);
  if (j.contains("model")) c.model = model_from_json(j["model"]);
  return c;
}

bool same_architecture(const LGNetConfig& a, const LGNetConfig& b) {
  return a.in_channels == b.in_channels && a.stage_channels == b.stage_channels && a.ublock_heights == b.ublock_heights &&
         a.descriptor_dim == b.descriptor_dim && a.input_height == b.input_height && a.input_width == b.input_width;
}

std::string shape_str(const Shape& s) { return s.str(); }

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

Shape shape_from_json(const json& j) { return Shape{j.at(0), j.at(1), j.at(2), j.at(3)}; }

void write_floats(std::ostream& out, const Tensor<float>& t) {
  for (Index i = 0; i < t.size(); ++i) {
    const auto bits = Eigen::numext::bit_cast<std::uint32_t>(t.data()[i]);
    const char b[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                       static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
    out.write(b, 4);
  }
}

Tensor<float> read_floats(std::istream& in, const Shape& s, const std::string& what) {
  Tensor<float> t(s);
  std::vector<unsigned char> raw(static_cast<std::size_t>(s.numel()) * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw std::runtime_error("checkpoint payload truncated at " + what);
  for (Index i = 0; i < t.size(); ++i) {
    const std::size_t k = static_cast<std::size_t>(i) * 4;
    const std::uint32_t bits = raw[k] | (raw[k + 1] << 8) | (raw[k + 2] << 16) | (std::uint32_t(raw[k + 3]) << 24);
    t.data()[i] = Eigen::numext::bit_cast<float>(bits);
  }
  return t;
}

Tensor<float> image_tensor(const ImagePixels& p) {
  Tensor<float> t(1, 1, p.rows(), p.cols());
  Eigen::Map<ImagePixels>(t.data().data(), p.rows(), p.cols()) = p;
  return t;
}

/// A training sample at the model's input size with both descriptors ready.
struct Prepared {
  ImagePixels image;
  ImagePixels mask;
  EmbeddingVector td;
};

Tensor<float> stack(const std::vector<Prepared>& data, const std::vector<std::size_t>& idx,
                    const std::function<const ImagePixels&(const Prepared&)>& get) {
  const auto& first = get(data[idx[0]]);
  Tensor<float> t(static_cast<Index>(idx.size()), 1, first.rows(), first.cols());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    Eigen::Map<ImagePixels>(t.sample_ptr(static_cast<Index>(b)), first.rows(), first.cols()) = get(data[idx[b]]);
  }
  return t;
}

Tensor<float> stack_td(const std::vector<Prepared>& data, const std::vector<std::size_t>& idx) {
  const Index d = data[idx[0]].td.size();
  Tensor<float> t(static_cast<Index>(idx.size()), d, 1, 1);
  for (std::size_t b = 0; b < idx.size(); ++b)
    Eigen::Map<EmbeddingVector>(t.sample_ptr(static_cast<Index>(b)), d) = data[idx[b]].td;
  return t;
}

std::vector<Sample> split_of(const std::vector<Sample>& all, Split s) {
  std::vector<Sample> out;
  for (const auto& x : all)
    if (x.split == s) out.push_back(x);
  return out;
}

std::string epoch_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

}  // namespace

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adan ? "adan" : "adamw"; }

std::string_view to_string(LanguageMode m) {
  switch (m) {
    case LanguageMode::never:
      return "never";
    case LanguageMode::training_only:
      return "training_only";
    case LanguageMode::training_and_test:
      return "training_and_test";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adan") return OptimizerKind::adan;
  if (s == "adamw") return OptimizerKind::adamw;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (adan, adamw)");
}

LanguageMode parse_language_mode(std::string_view s) {
  if (s == "never") return LanguageMode::never;
  if (s == "training_only" || s == "training-only") return LanguageMode::training_only;
  if (s == "training_and_test" || s == "training-and-test") return LanguageMode::training_and_test;
  throw std::invalid_argument("unknown language mode '" + std::string(s) + "' (never, training_only, training_and_test)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("TrainConfig: " + msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) fail("warmup_epochs must be in [0, epochs)");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (device != "cpu") fail("unsupported device '" + device + "' (cpu only)");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  if (!(metrics.threshold > 0 && metrics.threshold < 1)) fail("threshold must be in (0, 1)");
  if (!(metrics.centroid_tol >= 0)) fail("centroid_tol must be >= 0");
  model.validate();
}

std::string TrainConfig::to_json() const { return config_json(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) { return config_from_json(json::parse(text)); }

double learning_rate(const TrainConfig& config, long step, long steps_per_epoch) {
  const long warm = static_cast<long>(config.warmup_epochs) * steps_per_epoch;
  if (step < warm) return config.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  return config.lr;
}

// ---------------------------------------------------------------------------
// Optimizers

void Optimizer::ensure(const ParameterSet<float>& params) {
  if (!buf_.empty()) return;
  buf_.resize(slots_.size());
  for (auto& slot : buf_)
    for (const auto& p : params.params()) slot.emplace_back(p.var->value.shape());
}

std::vector<std::pair<std::string, Tensor<float>>> Optimizer::state(const ParameterSet<float>& params) const {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  if (buf_.empty()) return out;
  for (std::size_t s = 0; s < slots_.size(); ++s)
    for (std::size_t i = 0; i < params.params().size(); ++i)
      out.emplace_back(params.params()[i].name + "." + slots_[s], buf_[s][i]);
  return out;
}

void Optimizer::load_state(const ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& tensors,
                           long steps) {
  buf_.clear();
  steps_ = steps;
  if (tensors.empty()) return;
  ensure(params);
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    for (std::size_t i = 0; i < params.params().size(); ++i) {
      const std::string key = params.params()[i].name + "." + slots_[s];
      auto it = tensors.find(key);
      if (it == tensors.end()) throw std::runtime_error("optimizer state is missing " + key);
      if (!(it->second.shape() == buf_[s][i].shape())) throw std::runtime_error("optimizer state " + key + " has the wrong shape");
      buf_[s][i] = it->second;
    }
  }
}

Adan::Adan(double weight_decay, double beta1, double beta2, double beta3, double eps)
    : Optimizer({"exp_avg", "exp_avg_diff", "exp_avg_sq", "pre_grad"}, weight_decay),
      b1_(beta1), b2_(beta2), b3_(beta3), eps_(eps) {}

void Adan::step(ParameterSet<float>& params, double lr) {
  ensure(params);
  ++steps_;
  const double k = static_cast<double>(steps_);
  const float bc1 = static_cast<float>(1 - std::pow(b1_, k));
  const float bc2 = static_cast<float>(1 - std::pow(b2_, k));
  const float sqrt_bc3 = static_cast<float>(std::sqrt(1 - std::pow(b3_, k)));
  const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_), b3 = static_cast<float>(b3_);
  const float eps = static_cast<float>(eps_), flr = static_cast<float>(lr);
  const float shrink = static_cast<float>(1.0 / (1.0 + lr * weight_decay_));
  auto& ps = params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& node = *ps[i].var;
    if (!node.has_grad()) continue;
    const auto g = node.grad.data().array();
    auto m = buf_[0][i].data().array();
    auto v = buf_[1][i].data().array();
    auto n = buf_[2][i].data().array();
    auto prev = buf_[3][i].data().array();
    if (steps_ == 1) prev = g;
    const Eigen::ArrayXf diff = g - prev;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * diff;
    const Eigen::ArrayXf u = g + b2 * diff;
    n = b3 * n + (1 - b3) * u.square();
    const Eigen::ArrayXf denom = n.sqrt() / sqrt_bc3 + eps;
    auto w = node.value.data().array();
    w = (w - flr * (m / bc1 + b2 * v / bc2) / denom) * shrink;
    prev = g;
  }
}

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : Optimizer({"exp_avg", "exp_avg_sq"}, weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void AdamW::step(ParameterSet<float>& params, double lr) {
  ensure(params);
  ++steps_;
  const double k = static_cast<double>(steps_);
  const float bc1 = static_cast<float>(1 - std::pow(b1_, k));
  const float sqrt_bc2 = static_cast<float>(std::sqrt(1 - std::pow(b2_, k)));
  const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
  const float eps = static_cast<float>(eps_), flr = static_cast<float>(lr);
  const float decay = static_cast<float>(1.0 - lr * weight_decay_);
  auto& ps = params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& node = *ps[i].var;
    if (!node.has_grad()) continue;
    const auto g = node.grad.data().array();
    auto m = buf_[0][i].data().array();
    auto v = buf_[1][i].data().array();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    auto w = node.value.data().array();
    w = w * decay - flr * (m / bc1) / (v.sqrt() / sqrt_bc2 + eps);
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::adan) return std::make_unique<Adan>(config.weight_decay);
  return std::make_unique<AdamW>(config.weight_decay);
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const LGNet<float>& model, const TrainConfig& config, int epoch,
                     const Optimizer* optimizer) {
  std::vector<std::pair<std::string, const Tensor<float>*>> params, buffers;
  for (const auto& p : model.parameters().params()) params.emplace_back(p.name, &p.var->value);
  for (const auto& b : model.parameters().buffers()) buffers.emplace_back(b.name, b.tensor.get());
  std::vector<std::pair<std::string, Tensor<float>>> opt;
  if (optimizer) opt = optimizer->state(model.parameters());

  json tensors = json::array();
  auto list = [&](const char* group, const std::string& name, const Tensor<float>& t) {
    tensors.push_back({{"group", group}, {"name", name}, {"shape", shape_json(t.shape())}});
  };
  for (const auto& [n, t] : params) list("param", n, *t);
  for (const auto& [n, t] : buffers) list("buffer", n, *t);
  for (const auto& [n, t] : opt) list("optimizer", n, t);
  json header = {{"config", config_json(config)},
                 {"epoch", epoch},
                 {"optimizer", optimizer ? optimizer->kind() : std::string()},
                 {"optimizer_steps", optimizer ? optimizer->steps() : 0},
                 {"tensors", tensors}};
  TrainConfig echo = config;
  echo.model = model.config();
  header["config"] = config_json(echo);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const auto& [n, t] : params) write_floats(out, *t);
    for (const auto& [n, t] : buffers) write_floats(out, *t);
    for (const auto& [n, t] : opt) write_floats(out, t);
    if (!out) throw std::runtime_error("error writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw std::runtime_error(path.string() + " is not an LGNet checkpoint");
  std::getline(in, header_line);
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": bad checkpoint header: " + e.what());
  }
  Checkpoint c;
  c.config = config_from_json(header.at("config"));
  c.epoch = header.value("epoch", 0);
  c.optimizer = header.value("optimizer", std::string());
  c.optimizer_steps = header.value("optimizer_steps", 0L);
  for (const auto& t : header.at("tensors")) {
    const std::string group = t.at("group"), name = t.at("name");
    auto value = read_floats(in, shape_from_json(t.at("shape")), name);
    auto& dest = group == "param" ? c.params : group == "buffer" ? c.buffers : c.optimizer_state;
    dest.emplace(name, std::move(value));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes after payload");
  return c;
}

void restore_model(LGNet<float>& model, const Checkpoint& ckpt) {
  if (!same_architecture(model.config(), ckpt.config.model)) {
    throw std::invalid_argument("checkpoint/config mismatch: checkpoint architecture " +
                                model_json(ckpt.config.model).dump() + " vs model " + model_json(model.config()).dump());
  }
  auto copy = [](const std::map<std::string, Tensor<float>>& from, const std::string& name, Tensor<float>& to) {
    auto it = from.find(name);
    if (it == from.end()) throw std::invalid_argument("checkpoint/config mismatch: missing tensor " + name);
    if (!(it->second.shape() == to.shape()))
      throw std::invalid_argument("checkpoint/config mismatch: " + name + " is " + shape_str(it->second.shape()) +
                                  ", model expects " + shape_str(to.shape()));
    to = it->second;
  };
  for (auto& p : model.parameters().params()) copy(ckpt.params, p.name, p.var->value);
  for (auto& b : model.parameters().buffers()) copy(ckpt.buffers, b.name, *b.tensor);
  if (ckpt.params.size() != model.parameters().params().size() ||
      ckpt.buffers.size() != model.parameters().buffers().size())
    throw std::invalid_argument("checkpoint/config mismatch: checkpoint holds extra tensors");
}

// ---------------------------------------------------------------------------
// Data preparation

ImagePixels resize_image(const ImagePixels& src, Index h, Index w) {
  if (src.rows() == h && src.cols() == w) return src;
  if (src.size() == 0 || h < 1 || w < 1) throw std::invalid_argument("resize_image: empty image");
  ImagePixels out(h, w);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(h);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(w);
  auto axis = [](Index i, double scale, Index n, Index& i0, Index& i1, float& f) {
    const double c = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
    i0 = std::min<Index>(static_cast<Index>(c), n - 1);
    i1 = std::min<Index>(i0 + 1, n - 1);
    f = static_cast<float>(c - static_cast<double>(i0));
  };
  for (Index y = 0; y < h; ++y) {
    Index y0, y1;
    float fy;
    axis(y, sy, src.rows(), y0, y1, fy);
    for (Index x = 0; x < w; ++x) {
      Index x0, x1;
      float fx;
      axis(x, sx, src.cols(), x0, x1, fx);
      const float top = src(y0, x0) * (1 - fx) + src(y0, x1) * fx;
      const float bot = src(y1, x0) * (1 - fx) + src(y1, x1) * fx;
      out(y, x) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

MaskPixels resize_mask(const MaskPixels& src, Index h, Index w) {
  if (src.rows() == h && src.cols() == w) return src;
  if (src.size() == 0 || h < 1 || w < 1) throw std::invalid_argument("resize_mask: empty mask");
  MaskPixels out(h, w);
  for (Index y = 0; y < h; ++y) {
    const Index sy = std::min<Index>(src.rows() - 1, static_cast<Index>((y + 0.5) * src.rows() / static_cast<double>(h)));
    for (Index x = 0; x < w; ++x) {
      const Index sx = std::min<Index>(src.cols() - 1, static_cast<Index>((x + 0.5) * src.cols() / static_cast<double>(w)));
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string RunReport::to_json() const {
  json eps = json::array();
  for (const auto& e : epochs) eps.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"lr", e.lr}, {"seconds", e.seconds}});
  json j = {{"epochs", eps},
            {"step_losses", step_losses},
            {"final_metrics", json::parse(final_metrics.to_json())},
            {"evaluated_on", evaluated_on},
            {"train_seconds", train_seconds},
            {"eval_seconds", eval_seconds},
            {"parameter_count", parameter_count},
            {"checkpoint", checkpoint.string()},
            {"config", config_json(config)}};
  return j.dump(2);
}

RunReport RunReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunReport r;
  for (const auto& e : j.at("epochs")) r.epochs.push_back({e.at("epoch"), e.at("mean_loss"), e.at("lr"), e.at("seconds")});
  r.step_losses = j.value("step_losses", std::vector<double>{});
  r.final_metrics = MetricReport::from_json(j.at("final_metrics").dump());
  r.evaluated_on = j.value("evaluated_on", std::string());
  r.train_seconds = j.value("train_seconds", 0.0);
  r.eval_seconds = j.value("eval_seconds", 0.0);
  r.parameter_count = j.value("parameter_count", std::int64_t{0});
  r.checkpoint = j.value("checkpoint", std::string());
  if (j.contains("config")) r.config = config_from_json(j["config"]);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

LGNetPredictor::LGNetPredictor(const LGNet<float>& model, const EmbeddingProvider& provider, LanguageMode mode_at_test)
    : model_(model), provider_(provider), mode_(mode_at_test) {
  if (provider.dim() != model.config().descriptor_dim) {
    throw std::invalid_argument("descriptor dimension mismatch: provider " + std::to_string(provider.dim()) + ", model " +
                                std::to_string(model.config().descriptor_dim));
  }
}

ForwardOutputs<float> LGNetPredictor::forward(const Sample& sample) const {
  const auto& cfg = model_.config();
  const auto td = describe(provider_, sample, uses_text_at_test(mode_));
  Tensor<float> tdt(1, td.dim(), 1, 1);
  tdt.data() = td.vector;
  NoGradGuard guard;
  const auto pass = model_.forward(constant(image_tensor(resize_image(sample.image.pixels, cfg.input_height, cfg.input_width))),
                                   constant(std::move(tdt)), false);
  return probabilities(pass);
}

ImagePixels LGNetPredictor::predict(const Sample& sample) const {
  const auto out = forward(sample);
  const auto& cfg = model_.config();
  const ImagePixels prob = Eigen::Map<const ImagePixels>(out.final.data().data(), cfg.input_height, cfg.input_width);
  return resize_image(prob, sample.image.height(), sample.image.width());
}

MetricReport evaluate(const Predictor& predictor, const std::vector<Sample>& samples, const MetricOptions& options) {
  MetricAccumulator acc;
  for (const auto& s : samples) {
    if (!s.mask) {
      warn("evaluate: sample " + s.image.id + " has no mask, skipped");
      continue;
    }
    acc.add(binarize(predictor.predict(s), options.threshold), *s.mask, options.centroid_tol);
  }
  if (acc.n() == 0) throw std::invalid_argument("evaluate: no sample with a mask");
  return make_report(acc, options);
}

MetricReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                      const EmbeddingProvider& provider, LanguageMode mode_at_test,
                      const std::optional<MetricOptions>& options) {
  const auto ckpt = read_checkpoint(checkpoint);
  LGNet<float> model(ckpt.config.model);
  restore_model(model, ckpt);
  const LGNetPredictor predictor(model, provider, mode_at_test);
  const auto ds = read_langir(manifest.root_path);
  const auto test = split_of(ds.samples, Split::test);
  if (test.empty()) throw std::invalid_argument("evaluate: test split of " + manifest.root_path + " is empty");
  return evaluate(predictor, test, options.value_or(ckpt.config.metrics));
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_samples, const EmbeddingProvider& provider,
                  const std::vector<Sample>& eval_samples, const EpochCallback& on_epoch) {
  config.validate();
  if (train_samples.empty()) throw std::invalid_argument("train: the train split is empty");
  if (provider.dim() != config.model.descriptor_dim) {
    throw std::invalid_argument("train: provider dimension " + std::to_string(provider.dim()) +
                                " does not match descriptor_dim " + std::to_string(config.model.descriptor_dim));
  }
  const auto t_start = Clock::now();
  LGNetConfig mc = config.model;
  mc.seed = config.seed;
  TrainResult result;
  result.model = std::make_unique<LGNet<float>>(mc);
  auto& model = *result.model;
  auto& report = result.report;
  report.config = config;
  report.config.model = mc;
  report.parameter_count = model.parameters().count();

  const Index H = mc.input_height, W = mc.input_width;
  std::vector<Prepared> data;
  data.reserve(train_samples.size());
  for (const auto& s : train_samples) {
    if (!s.mask) throw std::invalid_argument("train: sample " + s.image.id + " has no mask");
    Prepared p;
    p.image = resize_image(s.image.pixels, H, W);
    p.mask = resize_mask(s.mask->pixels, H, W).cast<float>();
    p.td = describe(provider, s, uses_text_in_training(config.language_mode)).vector;
    data.push_back(std::move(p));
  }

  // Train-mode batch norm needs two samples per batch, so a trailing
  // single-sample batch is dropped.
  const std::size_t n = data.size(), bs = static_cast<std::size_t>(config.batch_size);
  std::size_t batches = (n + bs - 1) / bs;
  if (batches > 1 && n % bs == 1) --batches;
  if (std::min(n, bs) < 2) throw std::invalid_argument("train: each batch needs at least two samples for batch norm");
  const long steps_per_epoch = static_cast<long>(batches);

  auto optimizer = make_optimizer(config);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(n);
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t_epoch = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0, lr = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs, hi = b + 1 == batches ? n : std::min(n, lo + bs);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
      const auto images = stack(data, idx, [](const Prepared& p) -> const ImagePixels& { return p.image; });
      const auto gt = stack(data, idx, [](const Prepared& p) -> const ImagePixels& { return p.mask; });
      const auto where = [&] { return "epoch " + std::to_string(epoch) + ", step " + std::to_string(step + 1); };
      double value = 0;
      try {
        const auto pass = model.forward(constant(images), constant(stack_td(data, idx)), true);
        const auto loss = deep_supervision_loss(pass, gt);
        value = loss->value.data()[0];
        if (!std::isfinite(value)) throw std::runtime_error("non-finite loss");
        model.parameters().zero_grad();
        backward(loss);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: " + std::string(e.what()) + " at " + where());
      }
      const double step_lr = learning_rate(config, step, steps_per_epoch);
      if (b == 0) lr = step_lr;
      optimizer->step(model.parameters(), step_lr);
      model.parameters().zero_grad();
      report.step_losses.push_back(value);
      loss_sum += value;
      ++step;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), lr, seconds_since(t_epoch)};
    report.epochs.push_back(rec);
    const bool last = epoch == config.epochs;
    bool stop = false;
    if (on_epoch && !on_epoch(rec)) stop = true;
    if (!config.checkpoint_dir.empty() && (epoch % config.checkpoint_every == 0 || last || stop)) {
      const auto path = config.checkpoint_dir / ((last || stop) ? std::string("final.ckpt") : epoch_name(epoch));
      save_checkpoint(path, model, config, epoch, optimizer.get());
      if (last || stop) report.checkpoint = path;
    }
    if (stop) break;
  }
  report.train_seconds = seconds_since(t_start);

  const auto t_eval = Clock::now();
  report.evaluated_on = eval_samples.empty() ? "train" : "test";
  const LGNetPredictor predictor(model, provider, config.language_mode);
  report.final_metrics = evaluate(predictor, eval_samples.empty() ? train_samples : eval_samples, config.metrics);
  report.eval_seconds = seconds_since(t_eval);
  return result;
}

RunReport train(const TrainConfig& config, const DatasetManifest& manifest, const EmbeddingProvider& provider,
                const EpochCallback& on_epoch) {
  const auto ds = read_langir(manifest.root_path);
  const auto train_set = split_of(ds.samples, Split::train);
  if (train_set.empty()) throw std::invalid_argument("train: the train split of " + manifest.root_path + " is empty");
  return train(config, train_set, provider, split_of(ds.samples, Split::test), on_epoch).report;
}

}  // namespace lgnet
