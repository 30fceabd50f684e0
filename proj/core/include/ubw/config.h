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

#ifndef UBW_CONFIG_H_
#define UBW_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/data.h"
#include "ubw/defense.h"
#include "ubw/nn.h"
#include "ubw/verify.h"
#include "ubw/watermark.h"

namespace ubw {

struct DatasetConfig {
  std::string source = "synth";  // synth | idx | cifar-bin
  SynthOptions synth{10, 300, {1, 14, 14}, 0.1, 2.0, 1, "train"};
  std::size_t test_per_class = 50;
  std::string train_images, train_labels, test_images, test_labels;
  std::vector<std::string> train_files, test_files;
  std::size_t classes = 0;
};

struct TriggerConfig {
  std::string kind = "patch";  // patch | blended
  std::size_t size = 4;
  std::string corner = "bottom-right";
  int phase = 0;
  double alpha = 0.1;
  std::uint64_t seed = 1;
};

struct WatermarkConfig {
  std::string method = "ubw-p";  // none | ubw-p | ubw-c | badnets | blended
  double gamma = 0.1;
  int target = 1;
  bool exclude_true_label = false;
  TriggerConfig trigger;
  BilevelConfig bilevel;
};

struct RunConfig {
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  ArchSpec arch;
  SgdConfig train;
  WatermarkConfig watermark;
  VerificationConfig verify;
  // Sample verification images from the UBW-C source class.
  bool verify_source_only = true;
  FineTuneConfig finetune;
  double prune_step = 0.02;
  std::string output_dir;

  RunConfig();

  // Rejects unknown keys at every level; missing keys keep defaults.
  static RunConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
  void Validate() const;
  // SHA-256 of ToJson() without the output directory.
  std::string Digest() const;
};

RunConfig LoadRunConfig(const std::string& path);

}  // namespace ubw

#endif  // UBW_CONFIG_H_
