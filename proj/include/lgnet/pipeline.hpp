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

// Training, checkpointing and evaluation.

#pragma once

#include "lgnet/embeddings.hpp"
#include "lgnet/lgnet.hpp"
#include "lgnet/metrics.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lgnet {

enum class OptimizerKind { adan, adamw };

/// Which splits see the language prior. training_only drops T_e at test time.
enum class LanguageMode { never, training_only, training_and_test };

std::string_view to_string(OptimizerKind k);
std::string_view to_string(LanguageMode m);
OptimizerKind parse_optimizer(std::string_view s);
LanguageMode parse_language_mode(std::string_view s);

inline bool uses_text_in_training(LanguageMode m) { return m != LanguageMode::never; }
inline bool uses_text_at_test(LanguageMode m) { return m == LanguageMode::training_and_test; }

struct TrainConfig {
  int epochs = 600;
  int batch_size = 8;
  double lr = 1e-3;
  int warmup_epochs = 10;
  double weight_decay = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adan;
  LanguageMode language_mode = LanguageMode::training_only;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 50;
  MetricOptions metrics;
  /// Architecture; input_height/width double as the training input size.
  LGNetConfig model;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

/// Linear warm-up per optimizer step over warmup_epochs, constant afterwards.
double learning_rate(const TrainConfig& config, long step, long steps_per_epoch);

/// Hand-written first-order optimizers over a ParameterSet. State is keyed by
/// parameter order and exported for checkpoints.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet<float>& params, double lr) = 0;
  virtual std::string kind() const = 0;
  long steps() const { return steps_; }

  /// Named state tensors ("<param>.<slot>") plus the step count.
  std::vector<std::pair<std::string, Tensor<float>>> state(const ParameterSet<float>& params) const;
  void load_state(const ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& tensors, long steps);

 protected:
  Optimizer(std::vector<std::string> slots, double weight_decay) : slots_(std::move(slots)), weight_decay_(weight_decay) {}
  void ensure(const ParameterSet<float>& params);

  std::vector<std::string> slots_;
  std::vector<std::vector<Tensor<float>>> buf_;  // buf_[slot][param]
  double weight_decay_;
  long steps_ = 0;
};

/// Adan with proximal (decoupled, divided-out) weight decay. The previous
/// gradient starts equal to the first gradient, so the first difference is 0.
class Adan final : public Optimizer {
 public:
  explicit Adan(double weight_decay, double beta1 = 0.98, double beta2 = 0.92, double beta3 = 0.99, double eps = 1e-8);
  void step(ParameterSet<float>& params, double lr) override;
  std::string kind() const override { return "adan"; }

 private:
  double b1_, b2_, b3_, eps_;
};

class AdamW final : public Optimizer {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterSet<float>& params, double lr) override;
  std::string kind() const override { return "adamw"; }

 private:
  double b1_, b2_, eps_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints: "LGNET-CKPT-1\n", one JSON header line, then little-endian
// float32 payload in header order.

inline constexpr const char* kCheckpointMagic = "LGNET-CKPT-1";

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;  // completed epochs
  long optimizer_steps = 0;
  std::string optimizer;
  std::map<std::string, Tensor<float>> params, buffers, optimizer_state;
};

void save_checkpoint(const std::filesystem::path& path, const LGNet<float>& model, const TrainConfig& config, int epoch,
                     const Optimizer* optimizer);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies weights and buffers into model. Throws on any missing name or
/// shape mismatch, or when the architecture differs.
void restore_model(LGNet<float>& model, const Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Data preparation

/// Bilinear (half-pixel centres) resize of an image.
ImagePixels resize_image(const ImagePixels& src, Eigen::Index h, Eigen::Index w);
/// Nearest-neighbour resize of a mask.
MaskPixels resize_mask(const MaskPixels& src, Eigen::Index h, Eigen::Index w);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0;
  double lr = 0;  // at the epoch's first step
  double seconds = 0;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  MetricReport final_metrics;
  std::string evaluated_on;  // "test" or "train"
  double train_seconds = 0;
  double eval_seconds = 0;
  TrainConfig config;
  std::filesystem::path checkpoint;
  std::int64_t parameter_count = 0;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);
};

/// Called after each epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

struct TrainResult {
  RunReport report;
  std::unique_ptr<LGNet<float>> model;
};

/// Trains on train_samples (all must carry masks), then evaluates on
/// eval_samples (train_samples when empty) with the mode's test-time text
/// rule. Each image is resized to the configured input size.
TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_samples, const EmbeddingProvider& provider,
                  const std::vector<Sample>& eval_samples = {}, const EpochCallback& on_epoch = {});

/// Reads manifest.root_path as a LangIR dataset and trains on its train
/// split, evaluating on the test split when it is nonempty.
RunReport train(const TrainConfig& config, const DatasetManifest& manifest, const EmbeddingProvider& provider,
                const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Evaluation

/// Produces a probability map at the sample's own resolution.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual ImagePixels predict(const Sample& sample) const = 0;
};

/// Eval-mode LGNet: resizes to the model input, runs the forward pass with
/// the descriptor for the given test-time mode, resizes the final map back.
class LGNetPredictor final : public Predictor {
 public:
  LGNetPredictor(const LGNet<float>& model, const EmbeddingProvider& provider, LanguageMode mode_at_test);
  ImagePixels predict(const Sample& sample) const override;
  ForwardOutputs<float> forward(const Sample& sample) const;

 private:
  const LGNet<float>& model_;
  const EmbeddingProvider& provider_;
  LanguageMode mode_;
};

/// Samples without a mask are skipped with a warning.
MetricReport evaluate(const Predictor& predictor, const std::vector<Sample>& samples, const MetricOptions& options = {});

/// Loads a checkpoint, checks it against the provider, and scores the test
/// split of manifest.root_path. An empty test split throws.
MetricReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                      const EmbeddingProvider& provider, LanguageMode mode_at_test,
                      const std::optional<MetricOptions>& options = std::nullopt);

}  // namespace lgnet
