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

#include "ubw/metrics.h"

#include <algorithm>

#include "ubw/dispersibility.h"

namespace ubw {
namespace {

std::vector<int> Argmax(const std::vector<std::vector<double>>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()) + 1);
  }
  return out;
}

}  // namespace

nlohmann::json AttackMetrics::ToJson() const {
  nlohmann::json j = {{"benign_accuracy", benign_accuracy},
                      {"asr_all", asr_all},
                      {"dispersibility", dispersibility},
                      {"samples", samples},
                      {"benign_correct", benign_correct}};
  if (asr_correct) {
    j["asr_correct"] = *asr_correct;
  } else {
    j["asr_correct"] = "undefined";
  }
  return j;
}

AttackMetrics EvaluateAttack(const ModelState& model, const LabeledDataset& test,
                             const TriggerSpec& trigger, std::optional<int> target) {
  const auto benign = Argmax(PredictAll(model, test));
  const auto poisoned = Argmax(PredictAll(model, ApplyTriggerAll(test, trigger)));
  AttackMetrics m;
  m.samples = test.size();
  std::size_t hits = 0, hits_correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int y = test.label(i);
    const bool success = target ? poisoned[i] == *target : poisoned[i] != y;
    hits += success;
    if (benign[i] == y) {
      ++m.benign_correct;
      hits_correct += success;
    }
  }
  const double n = static_cast<double>(test.size());
  m.benign_accuracy = static_cast<double>(m.benign_correct) / n;
  m.asr_all = static_cast<double>(hits) / n;
  if (m.benign_correct > 0) {
    m.asr_correct =
        static_cast<double>(hits_correct) / static_cast<double>(m.benign_correct);
  }
  m.dispersibility = PredictionDispersibility(
      PredictionTable::FromHard(test.classes(), test.labels(), poisoned));
  return m;
}

}  // namespace ubw
