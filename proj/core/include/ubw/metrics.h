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

#ifndef UBW_METRICS_H_
#define UBW_METRICS_H_

#include <cstddef>
#include <optional>

#include <nlohmann/json.hpp>

#include "ubw/data.h"
#include "ubw/nn.h"
#include "ubw/watermark.h"

namespace ubw {

struct AttackMetrics {
  double benign_accuracy = 0.0;
  double asr_all = 0.0;
  // Undefined when the model classifies no benign test sample correctly.
  std::optional<double> asr_correct;
  double dispersibility = 0.0;
  std::size_t samples = 0;
  std::size_t benign_correct = 0;

  nlohmann::json ToJson() const;
};

// BA on `test`; ASR over G(x). Untargeted success is argmax != y; with a
// target, success is argmax == target. D_p uses the triggered predictions
// grouped by ground truth.
AttackMetrics EvaluateAttack(const ModelState& model, const LabeledDataset& test,
                             const TriggerSpec& trigger,
                             std::optional<int> target = std::nullopt);

}  // namespace ubw

#endif  // UBW_METRICS_H_
