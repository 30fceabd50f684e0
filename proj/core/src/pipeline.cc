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

#include "ubw/pipeline.h"

#include <fstream>
#include <sstream>

#include "ubw/container.h"
#include "ubw/digest.h"
#include "ubw/error.h"
#include "ubw/rng.h"

namespace ubw {
namespace {

using nlohmann::json;

json ReadJsonFile(const std::filesystem::path& path) {
  const auto bytes = ReadFileBytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

// Config digest embedded in an artifact, if it has one.
std::optional<std::string> EmbeddedDigest(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ubwd" || ext == ".ubwm") {
    const Container c = DecodeContainer(ReadFileBytes(path));
    if (c.kind == ContainerKind::kDataset) {
      return c.header.value("config_digest", std::string());
    }
    if (c.header.contains("meta") && c.header.at("meta").contains("config_digest")) {
      return c.header.at("meta").at("config_digest").get<std::string>();
    }
    return std::nullopt;
  }
  if (ext == ".json" && path.filename() != "manifest.json" &&
      path.filename() != "resolved_config.json") {
    const json j = ReadJsonFile(path);
    if (j.is_object() && j.contains("config_digest")) {
      return j.at("config_digest").get<std::string>();
    }
  }
  return std::nullopt;
}

}  // namespace

DatasetPair LoadDatasets(const DatasetConfig& cfg) {
  if (cfg.source == "synth") {
    SynthOptions train = cfg.synth;
    train.split = "train";
    SynthOptions test = cfg.synth;
    test.split = "test";
    test.per_class = cfg.test_per_class;
    return {SynthPatterns(train), SynthPatterns(test)};
  }
  if (cfg.source == "idx") {
    return {LoadIdx(cfg.train_images, cfg.train_labels, cfg.classes),
            LoadIdx(cfg.test_images, cfg.test_labels, cfg.classes)};
  }
  if (cfg.source == "cifar-bin") {
    std::vector<std::filesystem::path> train(cfg.train_files.begin(), cfg.train_files.end());
    std::vector<std::filesystem::path> test(cfg.test_files.begin(), cfg.test_files.end());
    return {LoadCifarBinary(train), LoadCifarBinary(test)};
  }
  throw Error(ErrorCode::kConfig, "unknown dataset source '" + cfg.source + "'");
}

ArchSpec ResolveArch(const RunConfig& cfg, const LabeledDataset& data) {
  ArchSpec a = cfg.arch;
  a.input = data.image_shape();
  a.classes = data.classes();
  return a;
}

TriggerSpec BuildTrigger(const TriggerConfig& cfg, const ImageShape& shape) {
  if (cfg.kind == "blended") return BlendedTrigger(shape, cfg.alpha, cfg.seed);
  if (cfg.kind == "patch") {
    return PatchTrigger(shape, cfg.size, ParseCorner(cfg.corner), cfg.phase);
  }
  throw Error(ErrorCode::kConfig, "unknown trigger kind '" + cfg.kind + "'");
}

std::optional<int> TargetOf(const RunConfig& cfg) {
  if (cfg.watermark.method == "badnets" || cfg.watermark.method == "blended") {
    return cfg.watermark.target;
  }
  return std::nullopt;
}

TrainResult RunTrain(const RunConfig& cfg, const LabeledDataset& data,
                     const LabeledDataset* test) {
  ModelState init(ResolveArch(cfg, data), cfg.seed);
  TrainHooks hooks;
  if (test != nullptr) {
    hooks.evaluate = [test](const ModelState& m, int) -> std::optional<double> {
      return Accuracy(m, *test);
    };
  }
  return SgdTrain(init, data, cfg.train, hooks);
}

PoisonOutcome RunPoison(const RunConfig& cfg, const LabeledDataset& train) {
  const TriggerSpec trigger = BuildTrigger(cfg.watermark.trigger, train.image_shape());
  const RngStream rng = RngStream(cfg.seed).Substream("poison");
  const auto& method = cfg.watermark.method;
  PoisonOutcome out{train, trigger, std::nullopt, {}};
  if (method == "ubw-p") {
    out.data = PoisonUbwP(train, cfg.watermark.gamma, trigger, rng,
                          cfg.watermark.exclude_true_label)
                   .data;
  } else if (method == "badnets" || method == "blended") {
    out.data = PoisonTargeted(train, cfg.watermark.gamma, trigger, cfg.watermark.target,
                              rng, method)
                   .data;
  } else if (method == "ubw-c") {
    BilevelConfig b = cfg.watermark.bilevel;
    b.gamma = cfg.watermark.gamma;
    b.sgd = cfg.train;
    const ModelState surrogate = RunTrain(cfg, train).model;
    UbwCResult r = OptimizeUbwC(train, surrogate, b, trigger, rng);
    out.data = std::move(r.data);
    out.perturbation = std::move(r.perturbation);
    out.rounds = std::move(r.log);
  }
  Provenance p = out.data.provenance();
  p.config_digest = cfg.Digest();
  out.data.set_provenance(std::move(p));
  return out;
}

VerificationConfig ResolveVerification(const RunConfig& cfg) {
  VerificationConfig v = cfg.verify;
  if (cfg.watermark.method == "ubw-c" && cfg.verify_source_only &&
      cfg.watermark.bilevel.source_class > 0) {
    v.source_class = cfg.watermark.bilevel.source_class;
  }
  return v;
}

std::vector<AblationRow> RunAblation(const RunConfig& cfg, const DatasetPair& data,
                                     const std::string& parameter,
                                     const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::kConfig, "ablation sweep is empty");
  if (parameter != "gamma" && parameter != "lambda") {
    throw Error(ErrorCode::kConfig, "ablation parameter must be gamma or lambda");
  }
  std::vector<AblationRow> rows;
  for (double v : values) {
    RunConfig point = cfg;
    if (parameter == "gamma") {
      point.watermark.gamma = v;
    } else {
      point.watermark.bilevel.lambda = v;
    }
    point.Validate();
    const PoisonOutcome poisoned = RunPoison(point, data.train);
    const ModelState model = RunTrain(point, poisoned.data).model;
    rows.push_back({parameter, v,
                    EvaluateAttack(model, data.test, poisoned.trigger, TargetOf(point))});
  }
  return rows;
}

std::string AblationCsv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "parameter,value,ba,asr_a,asr_c,d_p\n";
  for (const auto& r : rows) {
    out << r.parameter << ',' << r.value << ',' << r.metrics.benign_accuracy << ','
        << r.metrics.asr_all << ',';
    if (r.metrics.asr_correct) {
      out << *r.metrics.asr_correct;
    } else {
      out << "undefined";
    }
    out << ',' << r.metrics.dispersibility << '\n';
  }
  return out.str();
}

std::string TrainLogCsv(const std::vector<EpochRecord>& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,lr,loss,test_accuracy\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << r.lr << ',' << r.loss << ',';
    if (r.accuracy) out << *r.accuracy;
    out << '\n';
  }
  return out.str();
}

void UpdateManifest(const std::filesystem::path& dir, const std::string& config_digest,
                    const std::vector<std::string>& files) {
  const auto path = dir / "manifest.json";
  json manifest = {{"config_digest", config_digest}, {"files", json::object()}};
  if (std::filesystem::exists(path)) {
    json old = ReadJsonFile(path);
    if (old.value("config_digest", std::string()) == config_digest && old.contains("files")) {
      manifest["files"] = old.at("files");
    }
  }
  for (const auto& f : files) manifest["files"][f] = FileSha256(dir / f);
  WriteTextFile(path, manifest.dump(2) + "\n");
}

std::vector<DigestIssue> VerifyDigests(const std::filesystem::path& dir) {
  std::vector<DigestIssue> issues;
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    return {{"manifest.json", "missing"}};
  }
  const json manifest = ReadJsonFile(manifest_path);
  const std::string digest = manifest.value("config_digest", std::string());
  const auto config_path = dir / "resolved_config.json";
  if (!std::filesystem::exists(config_path)) {
    issues.push_back({"resolved_config.json", "missing"});
  } else {
    try {
      const RunConfig resolved = RunConfig::FromJson(ReadJsonFile(config_path));
      if (resolved.Digest() != digest) {
        issues.push_back({"resolved_config.json", "config digest differs from manifest"});
      }
    } catch (const Error& e) {
      issues.push_back({"resolved_config.json", e.what()});
    }
  }
  const json files = manifest.value("files", json::object());
  for (const auto& [name, sha] : files.items()) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      issues.push_back({name, "missing"});
      continue;
    }
    if (FileSha256(path) != sha.get<std::string>()) {
      issues.push_back({name, "content hash differs from manifest"});
      continue;
    }
    try {
      const auto embedded = EmbeddedDigest(path);
      if (embedded && *embedded != digest) {
        issues.push_back({name, "embedded config digest differs from manifest"});
      }
    } catch (const Error& e) {
      issues.push_back({name, e.what()});
    }
  }
  return issues;
}

}  // namespace ubw
