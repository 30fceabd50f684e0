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

// ubw: poison, train, evaluate, verify, ablate, defend, report, serve.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ubw/config.h"
#include "ubw/container.h"
#include "ubw/defense.h"
#include "ubw/error.h"
#include "ubw/metrics.h"
#include "ubw/nn.h"
#include "ubw/oracle.h"
#include "ubw/pipeline.h"
#include "ubw/verify.h"
#include "ubw/watermark.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  // poison / ablate
  std::optional<std::string> method;
  std::optional<double> gamma;
  std::optional<int> target;
  std::optional<double> lambda;
  std::optional<int> source_class;
  bool exclude_true_label = false;
  // train
  std::string data;
  std::optional<int> epochs;
  // evaluate / verify / defend / serve
  std::string checkpoint;
  std::string trigger;
  std::string oracle_cmd;
  std::string scenario = "unknown";
  std::optional<double> tau;
  std::optional<std::size_t> m;
  std::optional<double> alpha;
  // ablate
  std::string param;
  std::vector<double> values;
  // defend
  std::string kind;
  std::optional<double> lr;
  std::optional<double> fraction;
  std::vector<double> betas;
  // report
  std::string verify_digests;
};

ubw::RunConfig ResolveConfig(const Options& o, const std::string& command) {
  ubw::RunConfig cfg = o.config.empty() ? ubw::RunConfig() : ubw::LoadRunConfig(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.method) {
    cfg.watermark.method = *o.method;
    if (*o.method == "blended") cfg.watermark.trigger.kind = "blended";
  }
  if (o.gamma) cfg.watermark.gamma = *o.gamma;
  if (o.target) cfg.watermark.target = *o.target;
  if (o.lambda) cfg.watermark.bilevel.lambda = *o.lambda;
  if (o.source_class) cfg.watermark.bilevel.source_class = *o.source_class;
  if (o.exclude_true_label) cfg.watermark.exclude_true_label = true;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.tau) cfg.verify.tau = *o.tau;
  if (o.m) cfg.verify.m = *o.m;
  if (o.alpha) cfg.verify.alpha = *o.alpha;
  if (command == "defend") {
    if (o.epochs) cfg.finetune.epochs = *o.epochs;
    if (o.lr) cfg.finetune.lr = *o.lr;
    if (o.fraction) cfg.finetune.fraction = *o.fraction;
  }
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (cfg.output_dir.empty()) {
    const char* root = std::getenv("UBW_OUT_ROOT");
    cfg.output_dir = (fs::path(root != nullptr ? root : "ubw-out") / command).string();
  }
  cfg.Validate();
  return cfg;
}

fs::path PrepareOutput(const ubw::RunConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ubw::Error(ubw::ErrorCode::kIo, "cannot create " + dir.string());
  ubw::WriteTextFile(dir / "resolved_config.json", cfg.ToJson().dump(2) + "\n");
  return dir;
}

void WriteJson(const fs::path& path, const json& j) {
  ubw::WriteTextFile(path, j.dump(2) + "\n");
}

ubw::TriggerSpec TriggerFor(const Options& o, const ubw::RunConfig& cfg,
                            const ubw::ImageShape& shape) {
  if (!o.trigger.empty()) return ubw::ReadTriggerFile(o.trigger);
  return ubw::BuildTrigger(cfg.watermark.trigger, shape);
}

int CmdPoison(const Options& o) {
  const auto cfg = ResolveConfig(o, "poison");
  if (cfg.watermark.method == "none") {
    throw ubw::Error(ubw::ErrorCode::kConfig, "poison needs a watermark method");
  }
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  const auto outcome = ubw::RunPoison(cfg, data.train);
  const std::string digest = cfg.Digest();
  std::vector<std::string> files{"resolved_config.json", "poisoned_train.ubwd",
                                 "trigger.json"};
  ubw::WriteDatasetFile(dir / "poisoned_train.ubwd", outcome.data);
  ubw::WriteTriggerFile(dir / "trigger.json", outcome.trigger, digest);
  if (outcome.perturbation) {
    ubw::WriteTriggerFile(dir / "perturbation.json", *outcome.perturbation, digest);
    std::ostringstream csv;
    csv.precision(10);
    csv << "round,step,cosine\n";
    for (const auto& r : outcome.rounds) {
      for (std::size_t s = 0; s < r.objective.size(); ++s) {
        csv << r.round << ',' << s << ',' << r.objective[s] << '\n';
      }
    }
    ubw::WriteTextFile(dir / "ubwc_rounds.csv", csv.str());
    files.push_back("perturbation.json");
    files.push_back("ubwc_rounds.csv");
  }
  ubw::UpdateManifest(dir, digest, files);
  std::cout << json{{"dataset", (dir / "poisoned_train.ubwd").string()},
                    {"samples", outcome.data.size()},
                    {"method", cfg.watermark.method},
                    {"trigger_digest", outcome.trigger.Digest()}}
                   .dump()
            << "\n";
  return 0;
}

int CmdTrain(const Options& o) {
  const auto cfg = ResolveConfig(o, "train");
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  const ubw::LabeledDataset train =
      o.data.empty() ? data.train : ubw::ReadDatasetFile(o.data);
  const auto result = ubw::RunTrain(cfg, train, &data.test);
  const std::string digest = cfg.Digest();
  json meta = {{"config_digest", digest},
               {"seed", cfg.seed},
               {"train", cfg.train.ToJson()},
               {"dataset_provenance", train.provenance().kind}};
  ubw::WriteCheckpoint(dir / "model.ubwm", result.model, meta);
  ubw::WriteTextFile(dir / "train_log.csv", ubw::TrainLogCsv(result.log));
  ubw::UpdateManifest(dir, digest, {"resolved_config.json", "model.ubwm", "train_log.csv"});
  const double ba = result.log.empty() || !result.log.back().accuracy
                        ? ubw::Accuracy(result.model, data.test)
                        : *result.log.back().accuracy;
  std::cout << json{{"checkpoint", (dir / "model.ubwm").string()},
                    {"benign_accuracy", ba},
                    {"checkpoint_sha256", ubw::FileSha256(dir / "model.ubwm")}}
                   .dump()
            << "\n";
  return 0;
}

int CmdEvaluate(const Options& o) {
  if (o.checkpoint.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "evaluate needs --checkpoint");
  }
  const auto cfg = ResolveConfig(o, "evaluate");
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  const auto ckpt = ubw::ReadCheckpoint(o.checkpoint);
  const auto trigger = TriggerFor(o, cfg, data.test.image_shape());
  const auto metrics =
      ubw::EvaluateAttack(ckpt.model, data.test, trigger, ubw::TargetOf(cfg));
  json j = metrics.ToJson();
  j["trigger_digest"] = trigger.Digest();
  j["config_digest"] = cfg.Digest();
  WriteJson(dir / "metrics.json", j);
  ubw::UpdateManifest(dir, cfg.Digest(), {"resolved_config.json", "metrics.json"});
  std::cout << j.dump() << "\n";
  return 0;
}

int CmdVerify(const Options& o) {
  if (o.trigger.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "verify needs --trigger with a digest");
  }
  if (o.checkpoint.empty() == o.oracle_cmd.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig,
                     "verify needs exactly one of --checkpoint or --oracle-cmd");
  }
  const auto trigger = ubw::ReadTriggerFile(o.trigger);
  const auto cfg = ResolveConfig(o, "verify");
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  ubw::VerificationReport report;
  const auto vcfg = ubw::ResolveVerification(cfg);
  if (!o.checkpoint.empty()) {
    const auto ckpt = ubw::ReadCheckpoint(o.checkpoint);
    ubw::InProcessOracle oracle(ckpt.model);
    report = ubw::VerifyOwnership(oracle, data.test, trigger, vcfg, o.scenario);
  } else {
    ubw::SubprocessOracle oracle(o.oracle_cmd);
    report = ubw::VerifyOwnership(oracle, data.test, trigger, vcfg, o.scenario);
  }
  json j = report.ToJson();
  j["config_digest"] = cfg.Digest();
  j["verification"] = vcfg.ToJson();
  WriteJson(dir / "verification.json", j);
  ubw::WriteTextFile(dir / "verification.csv", report.SamplesCsv());
  ubw::UpdateManifest(dir, cfg.Digest(),
                      {"resolved_config.json", "verification.json", "verification.csv"});
  json summary = j;
  summary.erase("samples");
  std::cout << summary.dump() << "\n";
  return 0;
}

int CmdAblate(const Options& o) {
  if (o.values.empty()) throw ubw::Error(ubw::ErrorCode::kConfig, "ablation sweep is empty");
  const auto cfg = ResolveConfig(o, "ablate");
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  const auto rows = ubw::RunAblation(cfg, data, o.param, o.values);
  ubw::WriteTextFile(dir / "ablation.csv", ubw::AblationCsv(rows));
  json j = {{"config_digest", cfg.Digest()}, {"parameter", o.param}, {"rows", json::array()}};
  for (const auto& r : rows) j["rows"].push_back({{"value", r.value}, {"metrics", r.metrics.ToJson()}});
  WriteJson(dir / "ablation.json", j);
  ubw::UpdateManifest(dir, cfg.Digest(),
                      {"resolved_config.json", "ablation.csv", "ablation.json"});
  std::cout << ubw::AblationCsv(rows);
  return 0;
}

int CmdDefend(const Options& o) {
  if (o.checkpoint.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "defend needs --checkpoint");
  }
  if (o.kind != "finetune" && o.kind != "prune") {
    throw ubw::Error(ubw::ErrorCode::kConfig, "defend --kind must be finetune or prune");
  }
  const auto cfg = ResolveConfig(o, "defend");
  const fs::path dir = PrepareOutput(cfg);
  const auto data = ubw::LoadDatasets(cfg.dataset);
  const auto ckpt = ubw::ReadCheckpoint(o.checkpoint);
  const auto trigger = TriggerFor(o, cfg, data.test.image_shape());
  std::vector<ubw::DefensePoint> points;
  if (o.kind == "finetune") {
    points = ubw::FineTune(ckpt.model, data.train, data.test, trigger, cfg.finetune,
                           ubw::TargetOf(cfg))
                 .trace;
  } else {
    const auto betas = o.betas.empty() ? ubw::PruningGrid(cfg.prune_step) : o.betas;
    points = ubw::PruneSweep(ckpt.model, betas, data.train, data.test, trigger,
                             ubw::TargetOf(cfg));
  }
  ubw::WriteTextFile(dir / "defense.csv", ubw::DefenseCsv(points));
  ubw::UpdateManifest(dir, cfg.Digest(), {"resolved_config.json", "defense.csv"});
  std::cout << ubw::DefenseCsv(points);
  return 0;
}

int CmdReport(const Options& o) {
  if (o.verify_digests.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "report needs --verify-digests DIR");
  }
  int failures = 0;
  std::vector<fs::path> dirs;
  const fs::path root = o.verify_digests;
  if (!fs::is_directory(root)) {
    throw ubw::Error(ubw::ErrorCode::kConfig, root.string() + " is not a directory");
  }
  if (fs::exists(root / "manifest.json")) dirs.push_back(root);
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      dirs.push_back(entry.path());
    }
  }
  if (dirs.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "no manifest.json under " + root.string());
  }
  for (const auto& dir : dirs) {
    const auto issues = ubw::VerifyDigests(dir);
    std::cout << dir.string() << ": " << (issues.empty() ? "ok" : "FAILED") << "\n";
    for (const auto& issue : issues) {
      std::cout << "  " << issue.file << ": " << issue.problem << "\n";
    }
    failures += !issues.empty();
  }
  return failures == 0 ? 0 : kExitRuntime;
}

int CmdServe(const Options& o) {
  if (o.checkpoint.empty()) {
    throw ubw::Error(ubw::ErrorCode::kConfig, "serve needs --checkpoint");
  }
  const auto ckpt = ubw::ReadCheckpoint(o.checkpoint);
  ubw::ServeModel(ckpt.model, std::cin, std::cout);
  return 0;
}

bool IsUsageError(ubw::ErrorCode code) {
  return code == ubw::ErrorCode::kConfig || code == ubw::ErrorCode::kInvalidArgument;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Untargeted backdoor watermarking and dataset ownership verification"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory (default: $UBW_OUT_ROOT/<command>)");
    cmd->add_option("--seed", o.seed, "Run seed");
  };
  auto watermark = [&](CLI::App* cmd) {
    cmd->add_option("--method", o.method, "none|ubw-p|ubw-c|badnets|blended")
        ->check(CLI::IsMember({"none", "ubw-p", "ubw-c", "badnets", "blended"}));
    cmd->add_option("--gamma", o.gamma, "Poisoning rate");
    cmd->add_option("--target", o.target, "Target label for targeted baselines");
    cmd->add_option("--lambda", o.lambda, "UBW-C entropy trade-off");
    cmd->add_option("--source-class", o.source_class, "UBW-C source class (0 = all)");
    cmd->add_flag("--exclude-true-label", o.exclude_true_label,
                  "UBW-P: never resample the ground-truth label");
  };

  auto* poison = app.add_subcommand("poison", "Write a watermarked training set");
  common(poison);
  watermark(poison);

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(train);
  train->add_option("--data", o.data, "Dataset container (default: benign training set)")
      ->check(CLI::ExistingFile);
  train->add_option("--epochs", o.epochs, "Training epochs");

  auto* evaluate = app.add_subcommand("evaluate", "BA, ASR-A, ASR-C and D_p of a checkpoint");
  common(evaluate);
  watermark(evaluate);
  evaluate->add_option("--checkpoint", o.checkpoint)->check(CLI::ExistingFile);
  evaluate->add_option("--trigger", o.trigger, "Trigger file (default: from config)")
      ->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Paired T-test ownership verification");
  common(verify);
  watermark(verify);
  verify->add_option("--checkpoint", o.checkpoint, "Suspicious model checkpoint")
      ->check(CLI::ExistingFile);
  verify->add_option("--oracle-cmd", o.oracle_cmd, "Command speaking the JSON-lines oracle protocol");
  verify->add_option("--trigger", o.trigger, "Trigger file with digest");
  verify->add_option("--scenario", o.scenario,
                     "independent-trigger|independent-model|malicious|unknown")
      ->check(CLI::IsMember({"independent-trigger", "independent-model", "malicious", "unknown"}));
  verify->add_option("--tau", o.tau, "Certainty margin");
  verify->add_option("--m", o.m, "Number of verification samples");
  verify->add_option("--alpha", o.alpha, "Significance level");

  auto* ablate = app.add_subcommand("ablate", "Sweep gamma or lambda");
  common(ablate);
  watermark(ablate);
  ablate->add_option("--param", o.param, "gamma|lambda")
      ->required()
      ->check(CLI::IsMember({"gamma", "lambda"}));
  ablate->add_option("--values", o.values, "Sweep values")->delimiter(',');
  ablate->add_option("--epochs", o.epochs, "Training epochs per point");

  auto* defend = app.add_subcommand("defend", "Fine-tuning or pruning resistance");
  common(defend);
  watermark(defend);
  defend->add_option("--checkpoint", o.checkpoint)->check(CLI::ExistingFile);
  defend->add_option("--trigger", o.trigger)->check(CLI::ExistingFile);
  defend->add_option("--kind", o.kind, "finetune|prune")->required();
  defend->add_option("--epochs", o.epochs, "Fine-tuning epochs");
  defend->add_option("--lr", o.lr, "Fine-tuning learning rate");
  defend->add_option("--fraction", o.fraction, "Share of benign data for fine-tuning");
  defend->add_option("--betas", o.betas, "Pruning rates")->delimiter(',');

  auto* report = app.add_subcommand("report", "Re-check artifact digests");
  report->add_option("--verify-digests", o.verify_digests, "Run directory to check");

  auto* serve = app.add_subcommand("serve", "Serve a checkpoint over the oracle protocol");
  serve->add_option("--checkpoint", o.checkpoint)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*poison) return CmdPoison(o);
    if (*train) return CmdTrain(o);
    if (*evaluate) return CmdEvaluate(o);
    if (*verify) return CmdVerify(o);
    if (*ablate) return CmdAblate(o);
    if (*defend) return CmdDefend(o);
    if (*report) return CmdReport(o);
    if (*serve) return CmdServe(o);
  } catch (const ubw::Error& e) {
    std::cerr << "ubw: " << e.what() << "\n";
    return IsUsageError(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "ubw: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
