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

#ifndef UBW_VERIFY_H_
#define UBW_VERIFY_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/data.h"
#include "ubw/oracle.h"
#include "ubw/rng.h"
#include "ubw/watermark.h"

namespace ubw {

struct VerificationConfig {
  double tau = 0.25;
  std::size_t m = 100;
  double alpha = 0.01;
  std::uint64_t seed = 1;
  // Draw samples from this class only (UBW-C source class).
  std::optional<int> source_class;

  void Validate() const;
  nlohmann::json ToJson() const;
};

struct TTestResult {
  // +/-infinity when the differences have zero spread.
  double t = 0.0;
  int dof = 0;
  double p = 1.0;
  double mean = 0.0;
  double sd = 0.0;
};

// One-sided paired test of H1: P_b > P_p + tau on d_i = P_b,i - P_p,i - tau.
// Zero spread gives p = 0 if mean(d) > 0, else p = 1.
TTestResult PairedTTest(std::span<const double> benign,
                        std::span<const double> poisoned, double tau);

struct VerificationSample {
  std::size_t index = 0;
  int label = 0;
  double benign = 0.0;
  double poisoned = 0.0;
};

struct VerificationReport {
  std::string scenario = "unknown";
  double delta_p = 0.0;
  TTestResult test;
  double tau = 0.0;
  double alpha = 0.0;
  bool reject = false;
  bool reject_at_005 = false;
  std::string trigger_digest;
  std::vector<VerificationSample> samples;

  nlohmann::json ToJson() const;
  // index,label,p_benign,p_poisoned
  std::string SamplesCsv() const;
};

// m distinct test indices, visited in the order of a seeded permutation,
// whose oracle argmax equals the label (lowest index wins ties). Returned
// sorted.
std::vector<std::size_t> SelectVerificationSamples(
    ModelOracle& oracle, const LabeledDataset& test, std::size_t m,
    const RngStream& rng, std::optional<int> source_class = std::nullopt);

// Queries G(x) and x for each selected sample and reads both confidences at
// the ground-truth label.
VerificationReport VerifyOwnership(ModelOracle& oracle, const LabeledDataset& test,
                                   const TriggerSpec& trigger,
                                   const VerificationConfig& cfg,
                                   const std::string& scenario = "unknown");

}  // namespace ubw

#endif  // UBW_VERIFY_H_
