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

#ifndef UBW_PIPELINE_H_
#define UBW_PIPELINE_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/config.h"
#include "ubw/data.h"
#include "ubw/metrics.h"
#include "ubw/nn.h"
#include "ubw/verify.h"
#include "ubw/watermark.h"

namespace ubw {

struct DatasetPair {
  LabeledDataset train;
  LabeledDataset test;
};

DatasetPair LoadDatasets(const DatasetConfig& cfg);

// Architecture with input geometry and class count taken from `data`.
ArchSpec ResolveArch(const RunConfig& cfg, const LabeledDataset& data);

// The generator used at evaluation and verification time.
TriggerSpec BuildTrigger(const TriggerConfig& cfg, const ImageShape& shape);

// Target label for targeted methods, nothing for untargeted ones.
std::optional<int> TargetOf(const RunConfig& cfg);

struct PoisonOutcome {
  LabeledDataset data;
  TriggerSpec trigger;
  // UBW-C only.
  std::optional<TriggerSpec> perturbation;
  std::vector<BilevelRound> rounds;
};

// Applies the configured watermark to `train`. UBW-C first trains a benign
// surrogate with the run's SGD settings. The result's provenance carries the
// config digest.
PoisonOutcome RunPoison(const RunConfig& cfg, const LabeledDataset& train);

// Trains a fresh model (init seed = cfg.seed). With `test`, each epoch
// record carries test accuracy.
TrainResult RunTrain(const RunConfig& cfg, const LabeledDataset& data,
                     const LabeledDataset* test = nullptr);

// Verification settings with the source-class restriction resolved.
VerificationConfig ResolveVerification(const RunConfig& cfg);

struct AblationRow {
  std::string parameter;
  double value = 0.0;
  AttackMetrics metrics;
};

// parameter: "gamma" or "lambda". One poison + train + evaluate per value.
std::vector<AblationRow> RunAblation(const RunConfig& cfg, const DatasetPair& data,
                                     const std::string& parameter,
                                     const std::vector<double>& values);
std::string AblationCsv(const std::vector<AblationRow>& rows);

std::string TrainLogCsv(const std::vector<EpochRecord>& log);

// Run directories hold manifest.json: {"config_digest", "files": {name: sha256}}.
// Adds or replaces entries for `files` (names relative to `dir`).
void UpdateManifest(const std::filesystem::path& dir, const std::string& config_digest,
                    const std::vector<std::string>& files);

struct DigestIssue {
  std::string file;
  std::string problem;
};

// Re-hashes every manifest entry, re-validates container trailers, and checks
// that embedded config digests agree with resolved_config.json.
std::vector<DigestIssue> VerifyDigests(const std::filesystem::path& dir);

}  // namespace ubw

#endif  // UBW_PIPELINE_H_
