// Copyright 2026 The UBW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UBW_NN_H_
#define UBW_NN_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/data.h"
#include "ubw/tensor.h"

namespace ubw {

enum class ArchKind { kMlp, kSmallCnn };

// kMlp: flatten -> [Linear -> ReLU] per hidden width -> Linear(K).
// kSmallCnn: Conv3x3(conv1) -> ReLU -> MaxPool2 -> Conv3x3(conv2) -> channel
// mask -> ReLU -> MaxPool2 -> Linear(fc_hidden) -> ReLU -> Linear(K).
struct ArchSpec {
  ArchKind kind = ArchKind::kSmallCnn;
  ImageShape input{1, 14, 14};
  std::size_t classes = 10;
  std::vector<std::size_t> hidden{256};
  bool bias = true;
  std::size_t conv1 = 16;
  std::size_t conv2 = 32;
  std::size_t fc_hidden = 128;

  nlohmann::json ToJson() const;
  static ArchSpec FromJson(const nlohmann::json& j);
  bool operator==(const ArchSpec&) const = default;
};

struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t layer = 0;
  bool conv = false;
};

// Architecture plus parameters w. Copies are deep.
class ModelState {
 public:
  ModelState(ArchSpec arch, std::uint64_t seed);
  ModelState(const ModelState& other);
  ModelState& operator=(const ModelState& other);
  ModelState(ModelState&&) noexcept = default;
  ModelState& operator=(ModelState&&) noexcept = default;

  const ArchSpec& arch() const { return arch_; }
  std::size_t classes() const { return arch_.classes; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ParamSlot>& layout() const { return layout_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  std::size_t layer_count() const;

  std::vector<double> FlatParameters() const;
  void SetFlatParameters(std::span<const double> values);

  // Per-channel multiplier on the last convolution's output (SmallCNN only).
  const std::vector<double>& channel_mask() const { return channel_mask_; }
  void set_channel_mask(std::vector<double> mask);

  // batch: [N, C, H, W] matching arch().input.
  Tensor Logits(const Tensor& batch) const;
  // Row-stochastic [N, K].
  Tensor Forward(const Tensor& batch) const;
  // Last convolution output after bias and mask, before ReLU (SmallCNN).
  Tensor LastConvOutput(const Tensor& batch) const;
  std::vector<double> Predict(std::span<const double> image) const;

  // Indices into parameters() that stay trainable when the first
  // `frozen_layers` layers are frozen.
  std::vector<std::size_t> TrainableAfterFreezing(std::size_t frozen_layers) const;
  // Indices of every parameter outside convolution layers.
  std::vector<std::size_t> FullyConnectedParameters() const;

 private:
  void CheckBatch(const Tensor& batch) const;
  Tensor ConvTrunk(const Tensor& batch, bool stop_at_last_conv) const;

  ArchSpec arch_;
  std::uint64_t seed_;
  std::vector<ParamSlot> layout_;
  std::vector<Tensor> params_;
  std::vector<double> channel_mask_;
};

// Mean of -log p[label] with p floored at 1e-12. Labels are 1-based.
Tensor CrossEntropy(const Tensor& probs, std::span<const int> labels);
// Mean over rows of -sum p log p with the same floor (0 log 0 = 0).
Tensor MeanEntropy(const Tensor& probs);
std::vector<int> ArgmaxRows(const Tensor& probs);

struct SgdConfig {
  double lr = 0.05;
  // Epoch indices (0-based) at which lr is multiplied by `decay`.
  std::vector<int> milestones;
  double decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  bool augment_flip = false;

  void Validate() const;
  double LearningRate(int epoch) const;
  nlohmann::json ToJson() const;
  static SgdConfig FromJson(const nlohmann::json& j, const SgdConfig& base);
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> accuracy;
};

struct TrainHooks {
  // Parameter indices to update; empty means all.
  std::vector<std::size_t> trainable;
  // Called after each epoch; the value lands in EpochRecord::accuracy.
  std::function<std::optional<double>(const ModelState&, int)> evaluate;
};

struct TrainResult {
  ModelState model;
  std::vector<EpochRecord> log;
};

// Mini-batch SGD with momentum, weight decay and a step schedule. The
// per-epoch order comes from the "shuffle" substream of cfg.seed.
TrainResult SgdTrain(const ModelState& init, const LabeledDataset& data,
                     const SgdConfig& cfg, const TrainHooks& hooks = {});

// Batched argmax accuracy on `data`.
double Accuracy(const ModelState& model, const LabeledDataset& data);
// Row-stochastic predictions for every sample, batched.
std::vector<std::vector<double>> PredictAll(const ModelState& model,
                                            const LabeledDataset& data);

// || d CE(f(x_i), y_i) / dw ||_2 for every sample.
std::vector<double> PerSampleGradientNorms(const ModelState& model,
                                           const LabeledDataset& data);

struct PgaConfig {
  double step_size = 0.01;
  int steps = 20;
  // l-infinity radius around the start point, in [0,1] pixel units.
  double epsilon = 16.0 / 255.0;
  double lower = 0.0;
  double upper = 1.0;
  // x += step * sign(g) instead of x += step * g.
  bool sign_steps = false;

  void Validate() const;
};

// Clip `candidate` into the box around `center` of radius epsilon, intersected
// with [lower, upper].
Tensor ProjectToFeasible(const Tensor& candidate, const Tensor& center,
                         const PgaConfig& cfg);

using ScalarObjective = std::function<Tensor(const Tensor&)>;

// Projected gradient ascent on objective(vars). Starts from `initial` (or
// `center` when undefined); every iterate is projected. `trace` receives the
// objective value seen at each step.
Tensor PgaAscend(const ScalarObjective& objective, const Tensor& center,
                 const PgaConfig& cfg, DiffMode mode = DiffMode::kFirstOrder,
                 const Tensor& initial = Tensor(),
                 std::vector<double>* trace = nullptr);

struct Checkpoint {
  ModelState model;
  // seed, config digest and training configuration, as stored.
  nlohmann::json meta = nlohmann::json::object();
};

// Container kind 2; header holds the arch, layout and `meta`; payload is the
// flat parameter vector.
void WriteCheckpoint(const std::filesystem::path& path, const ModelState& model,
                     const nlohmann::json& meta);
Checkpoint ReadCheckpoint(const std::filesystem::path& path);

}  // namespace ubw

#endif  // UBW_NN_H_
