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

#include "ubw/config.h"

#include <algorithm>
#include <set>

#include "ubw/container.h"
#include "ubw/digest.h"
#include "ubw/error.h"

namespace ubw {
namespace {

using nlohmann::json;

void CheckKeys(const json& j, std::initializer_list<const char*> allowed,
               const std::string& where) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kConfig, where + " must be a JSON object");
  }
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      throw Error(ErrorCode::kConfig, "unknown key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kConfig,
                "key '" + where + "." + key + "' has the wrong type: " + j.at(key).dump());
  }
}

DatasetConfig ParseDataset(const json& j) {
  const std::string w = "dataset";
  CheckKeys(j, {"source", "classes", "per_class", "test_per_class", "shape", "noise",
                "smooth", "seed", "train_images", "train_labels", "test_images",
                "test_labels", "train_files", "test_files"},
            w);
  DatasetConfig d;
  Read(j, "source", d.source, w);
  Read(j, "classes", d.classes, w);
  Read(j, "per_class", d.synth.per_class, w);
  Read(j, "test_per_class", d.test_per_class, w);
  if (j.contains("shape")) {
    std::vector<std::size_t> s;
    Read(j, "shape", s, w);
    if (s.size() != 3) throw Error(ErrorCode::kConfig, "dataset.shape must be [C,H,W]");
    d.synth.shape = ImageShape{s[0], s[1], s[2]};
  }
  Read(j, "noise", d.synth.noise, w);
  Read(j, "smooth", d.synth.smooth, w);
  Read(j, "seed", d.synth.seed, w);
  Read(j, "train_images", d.train_images, w);
  Read(j, "train_labels", d.train_labels, w);
  Read(j, "test_images", d.test_images, w);
  Read(j, "test_labels", d.test_labels, w);
  Read(j, "train_files", d.train_files, w);
  Read(j, "test_files", d.test_files, w);
  if (d.source == "synth" && d.classes != 0) d.synth.classes = d.classes;
  return d;
}

json DatasetJson(const DatasetConfig& d) {
  json j = {{"source", d.source}};
  if (d.source == "synth") {
    j["classes"] = d.synth.classes;
    j["per_class"] = d.synth.per_class;
    j["test_per_class"] = d.test_per_class;
    j["shape"] = {d.synth.shape.channels, d.synth.shape.height, d.synth.shape.width};
    j["noise"] = d.synth.noise;
    j["smooth"] = d.synth.smooth;
    j["seed"] = d.synth.seed;
  } else if (d.source == "idx") {
    j["classes"] = d.classes;
    j["train_images"] = d.train_images;
    j["train_labels"] = d.train_labels;
    j["test_images"] = d.test_images;
    j["test_labels"] = d.test_labels;
  } else {
    j["train_files"] = d.train_files;
    j["test_files"] = d.test_files;
  }
  return j;
}

TriggerConfig ParseTrigger(const json& j) {
  const std::string w = "watermark.trigger";
  CheckKeys(j, {"kind", "size", "corner", "phase", "alpha", "seed"}, w);
  TriggerConfig t;
  Read(j, "kind", t.kind, w);
  Read(j, "size", t.size, w);
  Read(j, "corner", t.corner, w);
  Read(j, "phase", t.phase, w);
  Read(j, "alpha", t.alpha, w);
  Read(j, "seed", t.seed, w);
  return t;
}

json TriggerJson(const TriggerConfig& t) {
  if (t.kind == "blended") return {{"kind", t.kind}, {"alpha", t.alpha}, {"seed", t.seed}};
  return {{"kind", t.kind}, {"size", t.size}, {"corner", t.corner}, {"phase", t.phase}};
}

BilevelConfig ParseBilevel(const json& j, const BilevelConfig& base) {
  const std::string w = "watermark.ubw_c";
  CheckKeys(j, {"lambda", "rounds", "lower_epochs", "pga_steps", "pga_step_size",
                "epsilon", "sign_steps", "source_class", "selection"},
            w);
  BilevelConfig b = base;
  Read(j, "lambda", b.lambda, w);
  Read(j, "rounds", b.rounds, w);
  Read(j, "lower_epochs", b.lower_epochs, w);
  Read(j, "pga_steps", b.pga.steps, w);
  Read(j, "pga_step_size", b.pga.step_size, w);
  Read(j, "epsilon", b.pga.epsilon, w);
  Read(j, "sign_steps", b.pga.sign_steps, w);
  Read(j, "source_class", b.source_class, w);
  std::string selection = b.selection == SelectionRule::kGradientNorm ? "gradient-norm" : "random";
  Read(j, "selection", selection, w);
  if (selection == "gradient-norm") {
    b.selection = SelectionRule::kGradientNorm;
  } else if (selection == "random") {
    b.selection = SelectionRule::kRandom;
  } else {
    throw Error(ErrorCode::kConfig, "unknown selection rule '" + selection + "'");
  }
  return b;
}

json BilevelJson(const BilevelConfig& b) {
  return {{"lambda", b.lambda},
          {"rounds", b.rounds},
          {"lower_epochs", b.lower_epochs},
          {"pga_steps", b.pga.steps},
          {"pga_step_size", b.pga.step_size},
          {"epsilon", b.pga.epsilon},
          {"sign_steps", b.pga.sign_steps},
          {"source_class", b.source_class},
          {"selection", b.selection == SelectionRule::kGradientNorm ? "gradient-norm"
                                                                    : "random"}};
}

}  // namespace

RunConfig::RunConfig() {
  arch.input = dataset.synth.shape;
  train.epochs = 30;
  train.milestones = {20, 25};
  watermark.bilevel.pga.step_size = watermark.bilevel.pga.epsilon / 10.0;
  watermark.bilevel.pga.sign_steps = true;
}

RunConfig RunConfig::FromJson(const json& j) {
  CheckKeys(j, {"seed", "dataset", "arch", "train", "watermark", "verify", "defense",
                "output_dir"},
            "config");
  RunConfig c;
  Read(j, "seed", c.seed, "config");
  Read(j, "output_dir", c.output_dir, "config");
  if (j.contains("dataset")) c.dataset = ParseDataset(j.at("dataset"));
  if (j.contains("arch")) {
    CheckKeys(j.at("arch"), {"kind", "input", "classes", "hidden", "bias",
                             "conv_channels", "fc_hidden"},
              "arch");
    try {
      c.arch = ArchSpec::FromJson(j.at("arch"));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("arch: ") + e.what());
    }
  }
  if (j.contains("train")) {
    CheckKeys(j.at("train"), {"lr", "milestones", "decay", "momentum", "weight_decay",
                              "batch_size", "epochs", "seed", "augment_flip"},
              "train");
    try {
      c.train = SgdConfig::FromJson(j.at("train"), c.train);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, std::string("train: ") + e.what());
    }
  }
  if (j.contains("watermark")) {
    const json& w = j.at("watermark");
    const std::string where = "watermark";
    CheckKeys(w, {"method", "gamma", "target", "exclude_true_label", "trigger", "ubw_c"},
              where);
    Read(w, "method", c.watermark.method, where);
    Read(w, "gamma", c.watermark.gamma, where);
    Read(w, "target", c.watermark.target, where);
    Read(w, "exclude_true_label", c.watermark.exclude_true_label, where);
    if (c.watermark.method == "blended") c.watermark.trigger.kind = "blended";
    if (w.contains("trigger")) {
      TriggerConfig parsed = ParseTrigger(w.at("trigger"));
      if (!w.at("trigger").contains("kind")) parsed.kind = c.watermark.trigger.kind;
      c.watermark.trigger = parsed;
    }
    if (w.contains("ubw_c")) {
      c.watermark.bilevel = ParseBilevel(w.at("ubw_c"), c.watermark.bilevel);
    }
  }
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    CheckKeys(v, {"tau", "m", "alpha", "seed", "source_only"}, "verify");
    Read(v, "tau", c.verify.tau, "verify");
    Read(v, "m", c.verify.m, "verify");
    Read(v, "alpha", c.verify.alpha, "verify");
    Read(v, "seed", c.verify.seed, "verify");
    Read(v, "source_only", c.verify_source_only, "verify");
  }
  if (j.contains("defense")) {
    const json& d = j.at("defense");
    CheckKeys(d, {"fraction", "epochs", "lr", "frozen_layers", "prune_step"}, "defense");
    Read(d, "fraction", c.finetune.fraction, "defense");
    Read(d, "epochs", c.finetune.epochs, "defense");
    Read(d, "lr", c.finetune.lr, "defense");
    Read(d, "frozen_layers", c.finetune.frozen_layers, "defense");
    Read(d, "prune_step", c.prune_step, "defense");
  }
  c.Validate();
  return c;
}

json RunConfig::ToJson() const {
  return {{"seed", seed},
          {"dataset", DatasetJson(dataset)},
          {"arch", arch.ToJson()},
          {"train", train.ToJson()},
          {"watermark",
           {{"method", watermark.method},
            {"gamma", watermark.gamma},
            {"target", watermark.target},
            {"exclude_true_label", watermark.exclude_true_label},
            {"trigger", TriggerJson(watermark.trigger)},
            {"ubw_c", BilevelJson(watermark.bilevel)}}},
          {"verify",
           {{"tau", verify.tau},
            {"m", verify.m},
            {"alpha", verify.alpha},
            {"seed", verify.seed},
            {"source_only", verify_source_only}}},
          {"defense",
           {{"fraction", finetune.fraction},
            {"epochs", finetune.epochs},
            {"lr", finetune.lr},
            {"frozen_layers", finetune.frozen_layers},
            {"prune_step", prune_step}}},
          {"output_dir", output_dir}};
}

void RunConfig::Validate() const {
  static const std::set<std::string> kSources{"synth", "idx", "cifar-bin"};
  static const std::set<std::string> kMethods{"none", "ubw-p", "ubw-c", "badnets",
                                              "blended"};
  if (!kSources.count(dataset.source)) {
    throw Error(ErrorCode::kConfig, "unknown dataset source '" + dataset.source + "'");
  }
  if (dataset.source == "synth") {
    if (dataset.synth.classes < 2) throw Error(ErrorCode::kConfig, "dataset.classes must be >= 2");
    if (dataset.synth.per_class == 0 || dataset.test_per_class == 0) {
      throw Error(ErrorCode::kConfig, "dataset sample counts must be positive");
    }
    if (dataset.synth.noise < 0.0 || dataset.synth.smooth < 0.0) {
      throw Error(ErrorCode::kConfig, "dataset noise scales must be >= 0");
    }
  } else if (dataset.source == "idx") {
    if (dataset.train_images.empty() || dataset.train_labels.empty() ||
        dataset.test_images.empty() || dataset.test_labels.empty()) {
      throw Error(ErrorCode::kConfig, "idx datasets need train/test image and label paths");
    }
  } else if (dataset.train_files.empty() || dataset.test_files.empty()) {
    throw Error(ErrorCode::kConfig, "cifar-bin datasets need train_files and test_files");
  }
  try {
    train.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (!kMethods.count(watermark.method)) {
    throw Error(ErrorCode::kConfig, "unknown watermark method '" + watermark.method + "'");
  }
  if (!(watermark.gamma > 0.0 && watermark.gamma < 1.0)) {
    throw Error(ErrorCode::kConfig, "watermark.gamma must lie in (0,1), got " +
                                        std::to_string(watermark.gamma));
  }
  if (watermark.target < 1) throw Error(ErrorCode::kConfig, "watermark.target must be >= 1");
  if (watermark.trigger.kind != "patch" && watermark.trigger.kind != "blended") {
    throw Error(ErrorCode::kConfig, "unknown trigger kind '" + watermark.trigger.kind + "'");
  }
  if (watermark.trigger.kind == "patch") ParseCorner(watermark.trigger.corner);
  if (!(watermark.trigger.alpha >= 0.0 && watermark.trigger.alpha <= 1.0)) {
    throw Error(ErrorCode::kConfig, "trigger alpha must lie in [0,1]");
  }
  const auto& b = watermark.bilevel;
  if (!(b.lambda >= 0.0)) throw Error(ErrorCode::kConfig, "ubw_c.lambda must be >= 0");
  if (b.rounds < 1) throw Error(ErrorCode::kConfig, "ubw_c.rounds must be >= 1");
  if (b.lower_epochs < 0 || b.pga.steps < 0) {
    throw Error(ErrorCode::kConfig, "ubw_c epoch and step counts must be >= 0");
  }
  if (!(b.pga.epsilon > 0.0) || !(b.pga.step_size > 0.0)) {
    throw Error(ErrorCode::kConfig, "ubw_c.epsilon and pga_step_size must be > 0");
  }
  if (b.source_class < 0) throw Error(ErrorCode::kConfig, "ubw_c.source_class must be >= 0");
  try {
    verify.Validate();
    finetune.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  if (!(prune_step > 0.0 && prune_step < 1.0)) {
    throw Error(ErrorCode::kConfig, "defense.prune_step must lie in (0,1)");
  }
}

std::string RunConfig::Digest() const {
  json j = ToJson();
  j.erase("output_dir");
  return Sha256Hex(j.dump());
}

RunConfig LoadRunConfig(const std::string& path) {
  const auto bytes = ReadFileBytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
  return RunConfig::FromJson(j);
}

}  // namespace ubw
