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

#ifndef UBW_DEFENSE_H_
#define UBW_DEFENSE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ubw/data.h"
#include "ubw/metrics.h"
#include "ubw/nn.h"
#include "ubw/watermark.h"

namespace ubw {

struct DefensePoint {
  std::string defense;
  double parameter = 0.0;
  AttackMetrics metrics;
};

struct FineTuneConfig {
  // Share of the benign training set used for tuning.
  double fraction = 0.1;
  int epochs = 100;
  double lr = 0.1;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
  // MLP only: number of leading layers to freeze. SmallCNN freezes every
  // convolution layer.
  std::size_t frozen_layers = 1;

  void Validate() const;
};

struct FineTuneResult {
  ModelState model;
  // parameter = epoch (0 is the model before tuning).
  std::vector<DefensePoint> trace;
};

FineTuneResult FineTune(const ModelState& model, const LabeledDataset& benign_train,
                        const LabeledDataset& test, const TriggerSpec& trigger,
                        const FineTuneConfig& cfg,
                        std::optional<int> target = std::nullopt);

// Masks the ceil(beta * O) last-convolution channels with the smallest mean
// absolute activation over `calibration`. Lower channel index wins ties.
ModelState PruneChannels(const ModelState& model, double beta,
                         const LabeledDataset& calibration);

// 0, step, 2 step, ... below 1.
std::vector<double> PruningGrid(double step = 0.02);

// One point per beta; the grid is sorted before use.
std::vector<DefensePoint> PruneSweep(const ModelState& model,
                                     std::vector<double> betas,
                                     const LabeledDataset& calibration,
                                     const LabeledDataset& test,
                                     const TriggerSpec& trigger,
                                     std::optional<int> target = std::nullopt);

// defense,parameter,ba,asr_a,asr_c,d_p
std::string DefenseCsv(const std::vector<DefensePoint>& points);

}  // namespace ubw

#endif  // UBW_DEFENSE_H_
