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

#ifndef UBW_WATERMARK_H_
#define UBW_WATERMARK_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/data.h"
#include "ubw/nn.h"
#include "ubw/rng.h"
#include "ubw/tensor.h"

namespace ubw {

enum class TriggerKind { kPatch, kBlended, kAdditive };

// Poisoned-image generator G.
//   patch:    G(x) = (1 - a) * x + a * t with a in {0,1}
//   blended:  same formula, a in [0,1]
//   additive: G(x_i) = clip(x_i + theta_i, 0, 1) for stored sample indices i
struct TriggerSpec {
  TriggerKind kind = TriggerKind::kPatch;
  ImageShape shape;
  std::vector<double> alpha;
  std::vector<double> pattern;
  double epsilon = 0.0;
  std::map<std::size_t, std::vector<double>> perturbations;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TriggerSpec FromJson(const nlohmann::json& j);
  // SHA-256 of the serialized JSON.
  std::string Digest() const;
};

enum class Corner { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

// size x size checkerboard in the chosen corner, on every channel. `phase`
// flips which squares are white.
TriggerSpec PatchTrigger(const ImageShape& shape, std::size_t size = 4,
                         Corner corner = Corner::kBottomRight, int phase = 0);
// Full-image pattern of U[0,1] pixels from the "triggers" substream, blended
// at ratio `alpha`.
TriggerSpec BlendedTrigger(const ImageShape& shape, double alpha,
                           std::uint64_t seed);
Corner ParseCorner(const std::string& name);
std::string CornerName(Corner corner);

// `index` selects the stored perturbation of additive triggers.
std::vector<double> ApplyTrigger(std::span<const double> image,
                                 const TriggerSpec& spec,
                                 std::optional<std::size_t> index = std::nullopt);
// Every sample passed through G; labels and provenance are kept.
LabeledDataset ApplyTriggerAll(const LabeledDataset& data,
                               const TriggerSpec& spec);

// Trigger file: {"trigger": ..., "digest": ..., "config_digest": ...}. The
// config digest is omitted when empty. Reading checks the trigger digest.
void WriteTriggerFile(const std::filesystem::path& path, const TriggerSpec& spec,
                      const std::string& config_digest = "");
TriggerSpec ReadTriggerFile(const std::filesystem::path& path);

enum class LabelAction { kKeep, kSetTarget, kResample };

struct PoisonPlan {
  std::string method;
  double gamma = 0.0;
  std::vector<std::size_t> indices;
  LabelAction action = LabelAction::kKeep;
  std::vector<int> new_labels;
  int target = 0;
  std::string trigger_digest;

  nlohmann::json ToJson() const;
};

struct PoisonResult {
  LabeledDataset data;
  PoisonPlan plan;
};

// Replaces floor(gamma * n) samples by (G(x), y') with y' uniform on {1..K}
// from the "labels" substream. With `exclude_true_label`, y' != y.
PoisonResult PoisonUbwP(const LabeledDataset& data, double gamma,
                        const TriggerSpec& trigger, const RngStream& rng,
                        bool exclude_true_label = false);
// BadNets / Blended: poisoned samples relabelled to `target`.
PoisonResult PoisonTargeted(const LabeledDataset& data, double gamma,
                            const TriggerSpec& trigger, int target,
                            const RngStream& rng,
                            const std::string& method = "badnets");

// The m indices with largest per-sample gradient norm, lower index first on
// ties. Returned in ascending index order.
std::vector<std::size_t> SelectByGradientNorm(const ModelState& model,
                                              const LabeledDataset& data,
                                              std::size_t m);

// grad_w L_i, L_i = CE(f(triggered), source_labels) + lambda * H(f(triggered)).
std::vector<Tensor> InferenceLossGradient(const ModelState& model,
                                          const Tensor& triggered,
                                          std::span<const int> source_labels,
                                          double lambda);

// cos(grad_w L_t, target) for a fixed parameter-shaped `target`.
Tensor GradMatchingObjective(const ModelState& model, const Tensor& perturbed,
                             std::span<const int> labels,
                             std::span<const Tensor> target);

// cos(grad_w L_t, grad_w L_i) with
//   L_t = CE(f(perturbed), labels)
//   L_i = CE(f(triggered), source_labels) + lambda * H(f(triggered)).
// Differentiable in `perturbed` when the current tape is higher-order;
// grad_w L_i is a constant.
Tensor GradMatchingObjective(const ModelState& model, const Tensor& perturbed,
                             std::span<const int> labels,
                             const Tensor& triggered,
                             std::span<const int> source_labels, double lambda);

enum class SelectionRule { kGradientNorm, kRandom };

struct BilevelConfig {
  double lambda = 2.0;
  int rounds = 3;
  int lower_epochs = 10;
  // steps = 0 disables the upper level.
  PgaConfig pga{0.01, 20, 16.0 / 255.0, 0.0, 1.0, false};
  // 0 draws L_i from every class.
  int source_class = 1;
  double gamma = 0.1;
  SelectionRule selection = SelectionRule::kGradientNorm;
  SgdConfig sgd;

  void Validate(std::size_t classes) const;
  nlohmann::json ToJson() const;
};

struct BilevelRound {
  int round = 0;
  std::vector<double> objective;  // matching cosine at each ascent step
  double train_loss = 0.0;
};

struct UbwCResult {
  LabeledDataset data;
  TriggerSpec perturbation;
  PoisonPlan plan;
  std::vector<BilevelRound> log;
};

// Clean-label bi-level optimization. Each round runs projected ascent on the
// perturbed samples against the surrogate model, then trains the surrogate
// on the poisoned set for `lower_epochs`.
UbwCResult OptimizeUbwC(const LabeledDataset& data, const ModelState& pretrained,
                        const BilevelConfig& cfg, const TriggerSpec& inference,
                        const RngStream& rng);

}  // namespace ubw

#endif  // UBW_WATERMARK_H_
