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

#include "ubw/watermark.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ubw/container.h"
#include "ubw/digest.h"
#include "ubw/error.h"
#include "ubw/ops.h"

namespace ubw {
namespace {

std::string KindName(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::kPatch: return "patch";
    case TriggerKind::kBlended: return "blended";
    case TriggerKind::kAdditive: return "additive";
  }
  return "unknown";
}

TriggerKind ParseKind(const std::string& name) {
  if (name == "patch") return TriggerKind::kPatch;
  if (name == "blended") return TriggerKind::kBlended;
  if (name == "additive") return TriggerKind::kAdditive;
  throw Error(ErrorCode::kFormat, "unknown trigger kind '" + name + "'");
}

std::string ActionName(LabelAction a) {
  switch (a) {
    case LabelAction::kKeep: return "keep";
    case LabelAction::kSetTarget: return "set-target";
    case LabelAction::kResample: return "resample-uniform";
  }
  return "unknown";
}

void CheckGeometry(const LabeledDataset& data, const TriggerSpec& trigger) {
  trigger.Validate();
  if (!(trigger.shape == data.image_shape())) {
    throw Error(ErrorCode::kShapeMismatch,
                "trigger geometry " + ShapeToString(trigger.shape.AsShape()) +
                    " does not match dataset images " +
                    ShapeToString(data.image_shape().AsShape()));
  }
}

Provenance PoisonedProvenance(const LabeledDataset& data, const PoisonPlan& plan,
                              const TriggerSpec& trigger) {
  Provenance p = data.provenance();
  p.kind = "poisoned";
  p.detail = {{"method", plan.method},
              {"gamma", plan.gamma},
              {"trigger_digest", plan.trigger_digest},
              {"trigger", trigger.ToJson()},
              {"plan", plan.ToJson()}};
  return p;
}

// Replaces the selected images by G(x) and the labels by `labels`.
LabeledDataset Rebuild(const LabeledDataset& data, const TriggerSpec& trigger,
                       std::span<const std::size_t> indices,
                       std::span<const int> labels) {
  std::vector<double> pixels = data.pixels();
  std::vector<int> out_labels = data.labels();
  const std::size_t d = data.image_shape().size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    const auto g = ApplyTrigger(data.image(i), trigger, i);
    std::copy(g.begin(), g.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * d));
    out_labels[i] = labels[k];
  }
  return LabeledDataset(data.image_shape(), data.classes(), std::move(pixels),
                        std::move(out_labels), data.provenance());
}

}  // namespace

void TriggerSpec::Validate() const {
  const std::size_t d = shape.size();
  if (d == 0) throw Error(ErrorCode::kInvalidArgument, "trigger has no geometry");
  if (kind == TriggerKind::kAdditive) {
    if (!(epsilon > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "additive trigger needs epsilon > 0");
    }
    for (const auto& [index, theta] : perturbations) {
      if (theta.size() != d) {
        throw Error(ErrorCode::kShapeMismatch,
                    "perturbation for sample " + std::to_string(index) +
                        " has " + std::to_string(theta.size()) + " values");
      }
      for (double v : theta) {
        if (!(std::abs(v) <= epsilon)) {
          throw Error(ErrorCode::kDomain,
                      "perturbation for sample " + std::to_string(index) +
                          " leaves the epsilon ball");
        }
      }
    }
    return;
  }
  if (alpha.size() != d || pattern.size() != d) {
    throw Error(ErrorCode::kShapeMismatch,
                "trigger mask/pattern sizes do not match " +
                    ShapeToString(shape.AsShape()));
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double a = alpha[i];
    if (kind == TriggerKind::kPatch ? (a != 0.0 && a != 1.0) : !(a >= 0.0 && a <= 1.0)) {
      throw Error(ErrorCode::kDomain, "trigger mask value out of range");
    }
    if (!(pattern[i] >= 0.0 && pattern[i] <= 1.0)) {
      throw Error(ErrorCode::kDomain, "trigger pattern outside [0,1]");
    }
  }
}

nlohmann::json TriggerSpec::ToJson() const {
  nlohmann::json j = {{"kind", KindName(kind)},
                      {"shape", {shape.channels, shape.height, shape.width}}};
  if (kind == TriggerKind::kAdditive) {
    j["epsilon"] = epsilon;
    nlohmann::json idx = nlohmann::json::array();
    nlohmann::json theta = nlohmann::json::array();
    for (const auto& [i, t] : perturbations) {
      idx.push_back(i);
      theta.push_back(t);
    }
    j["indices"] = idx;
    j["theta"] = theta;
  } else {
    j["alpha"] = alpha;
    j["pattern"] = pattern;
  }
  return j;
}

TriggerSpec TriggerSpec::FromJson(const nlohmann::json& j) {
  try {
    TriggerSpec s;
    s.kind = ParseKind(j.at("kind").get<std::string>());
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw Error(ErrorCode::kFormat, "trigger shape must be [C,H,W]");
    s.shape = ImageShape{shape[0], shape[1], shape[2]};
    if (s.kind == TriggerKind::kAdditive) {
      s.epsilon = j.at("epsilon").get<double>();
      const auto idx = j.at("indices").get<std::vector<std::size_t>>();
      const auto& theta = j.at("theta");
      if (theta.size() != idx.size()) {
        throw Error(ErrorCode::kFormat, "trigger indices/theta length mismatch");
      }
      for (std::size_t k = 0; k < idx.size(); ++k) {
        s.perturbations[idx[k]] = theta[k].get<std::vector<double>>();
      }
    } else {
      s.alpha = j.at("alpha").get<std::vector<double>>();
      s.pattern = j.at("pattern").get<std::vector<double>>();
    }
    s.Validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed trigger: ") + e.what());
  }
}

std::string TriggerSpec::Digest() const { return Sha256Hex(ToJson().dump()); }

Corner ParseCorner(const std::string& name) {
  if (name == "top-left") return Corner::kTopLeft;
  if (name == "top-right") return Corner::kTopRight;
  if (name == "bottom-left") return Corner::kBottomLeft;
  if (name == "bottom-right") return Corner::kBottomRight;
  throw Error(ErrorCode::kConfig, "unknown corner '" + name + "'");
}

std::string CornerName(Corner corner) {
  switch (corner) {
    case Corner::kTopLeft: return "top-left";
    case Corner::kTopRight: return "top-right";
    case Corner::kBottomLeft: return "bottom-left";
    case Corner::kBottomRight: return "bottom-right";
  }
  return "unknown";
}

TriggerSpec PatchTrigger(const ImageShape& shape, std::size_t size, Corner corner,
                         int phase) {
  if (size == 0 || size > shape.height || size > shape.width) {
    throw Error(ErrorCode::kInvalidArgument,
                "patch size " + std::to_string(size) + " does not fit the image");
  }
  TriggerSpec s;
  s.kind = TriggerKind::kPatch;
  s.shape = shape;
  s.alpha.assign(shape.size(), 0.0);
  s.pattern.assign(shape.size(), 0.0);
  const bool bottom = corner == Corner::kBottomLeft || corner == Corner::kBottomRight;
  const bool right = corner == Corner::kTopRight || corner == Corner::kBottomRight;
  const std::size_t r0 = bottom ? shape.height - size : 0;
  const std::size_t c0 = right ? shape.width - size : 0;
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t q = 0; q < size; ++q) {
        const std::size_t at = (c * shape.height + r0 + r) * shape.width + c0 + q;
        s.alpha[at] = 1.0;
        s.pattern[at] = static_cast<double>((r + q + static_cast<std::size_t>(phase)) % 2 == 0);
      }
    }
  }
  return s;
}

TriggerSpec BlendedTrigger(const ImageShape& shape, double alpha,
                           std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "blend ratio must lie in [0,1]");
  }
  TriggerSpec s;
  s.kind = TriggerKind::kBlended;
  s.shape = shape;
  s.alpha.assign(shape.size(), alpha);
  RngStream rng = RngStream(seed).Substream("triggers");
  s.pattern.resize(shape.size());
  for (double& v : s.pattern) v = rng.Uniform();
  return s;
}

std::vector<double> ApplyTrigger(std::span<const double> image,
                                 const TriggerSpec& spec,
                                 std::optional<std::size_t> index) {
  if (image.size() != spec.shape.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "image has " + std::to_string(image.size()) +
                    " values; trigger expects " + std::to_string(spec.shape.size()));
  }
  std::vector<double> out(image.begin(), image.end());
  if (spec.kind == TriggerKind::kAdditive) {
    if (!index) {
      throw Error(ErrorCode::kInvalidArgument,
                  "additive trigger needs a sample index");
    }
    auto it = spec.perturbations.find(*index);
    if (it == spec.perturbations.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "no perturbation stored for sample " + std::to_string(*index));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::clamp(out[i] + it->second[i], 0.0, 1.0);
    }
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = spec.alpha[i];
    if (a == 0.0) continue;
    out[i] = a == 1.0 ? spec.pattern[i] : (1.0 - a) * out[i] + a * spec.pattern[i];
    out[i] = std::clamp(out[i], 0.0, 1.0);
  }
  return out;
}

LabeledDataset ApplyTriggerAll(const LabeledDataset& data,
                               const TriggerSpec& spec) {
  CheckGeometry(data, spec);
  std::vector<double> pixels;
  pixels.reserve(data.pixels().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto g = ApplyTrigger(data.image(i), spec, i);
    pixels.insert(pixels.end(), g.begin(), g.end());
  }
  return LabeledDataset(data.image_shape(), data.classes(), std::move(pixels),
                        data.labels(), data.provenance());
}

void WriteTriggerFile(const std::filesystem::path& path, const TriggerSpec& spec,
                      const std::string& config_digest) {
  nlohmann::json j = {{"trigger", spec.ToJson()}, {"digest", spec.Digest()}};
  if (!config_digest.empty()) j["config_digest"] = config_digest;
  WriteTextFile(path, j.dump(2) + "\n");
}

TriggerSpec ReadTriggerFile(const std::filesystem::path& path) {
  const auto bytes = ReadFileBytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("digest") || !j.contains("trigger")) {
    throw Error(ErrorCode::kConfig,
                path.string() + " lacks a trigger description or digest");
  }
  TriggerSpec s = TriggerSpec::FromJson(j.at("trigger"));
  if (s.Digest() != j.at("digest").get<std::string>()) {
    throw Error(ErrorCode::kConfig,
                path.string() + ": trigger digest does not match its content");
  }
  return s;
}

nlohmann::json PoisonPlan::ToJson() const {
  return {{"method", method},
          {"gamma", gamma},
          {"indices", indices},
          {"label_action", ActionName(action)},
          {"new_labels", new_labels},
          {"target", target},
          {"trigger_digest", trigger_digest}};
}

PoisonResult PoisonUbwP(const LabeledDataset& data, double gamma,
                        const TriggerSpec& trigger, const RngStream& rng,
                        bool exclude_true_label) {
  CheckGeometry(data, trigger);
  if (trigger.kind == TriggerKind::kAdditive) {
    throw Error(ErrorCode::kInvalidArgument,
                "label-shuffling poisoning needs a patch or blended trigger");
  }
  PoisonPlan plan;
  plan.method = exclude_true_label ? "ubw-p-exclusive" : "ubw-p";
  plan.gamma = gamma;
  plan.indices = SelectSubset(data.size(), gamma, rng).indices;
  plan.action = LabelAction::kResample;
  plan.trigger_digest = trigger.Digest();
  RngStream labels = rng.Substream("labels");
  const std::size_t k = data.classes();
  for (std::size_t i : plan.indices) {
    int y;
    if (exclude_true_label) {
      y = static_cast<int>(labels.UniformIndex(k - 1)) + 1;
      if (y >= data.label(i)) ++y;
    } else {
      y = static_cast<int>(labels.UniformIndex(k)) + 1;
    }
    plan.new_labels.push_back(y);
  }
  PoisonResult r{Rebuild(data, trigger, plan.indices, plan.new_labels), plan};
  r.data.set_provenance(PoisonedProvenance(data, plan, trigger));
  return r;
}

PoisonResult PoisonTargeted(const LabeledDataset& data, double gamma,
                            const TriggerSpec& trigger, int target,
                            const RngStream& rng, const std::string& method) {
  CheckGeometry(data, trigger);
  if (target < 1 || target > static_cast<int>(data.classes())) {
    throw Error(ErrorCode::kInvalidArgument,
                "target label " + std::to_string(target) + " outside {1.." +
                    std::to_string(data.classes()) + "}");
  }
  PoisonPlan plan;
  plan.method = method;
  plan.gamma = gamma;
  plan.indices = SelectSubset(data.size(), gamma, rng).indices;
  plan.action = LabelAction::kSetTarget;
  plan.target = target;
  plan.trigger_digest = trigger.Digest();
  plan.new_labels.assign(plan.indices.size(), target);
  PoisonResult r{Rebuild(data, trigger, plan.indices, plan.new_labels), plan};
  r.data.set_provenance(PoisonedProvenance(data, plan, trigger));
  return r;
}

std::vector<std::size_t> SelectByGradientNorm(const ModelState& model,
                                              const LabeledDataset& data,
                                              std::size_t m) {
  if (m > data.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot select " + std::to_string(m) + " of " +
                    std::to_string(data.size()) + " samples");
  }
  const auto norms = PerSampleGradientNorms(model, data);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return norms[a] > norms[b];
  });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<Tensor> InferenceLossGradient(const ModelState& model,
                                          const Tensor& triggered,
                                          std::span<const int> source_labels,
                                          double lambda) {
  if (!(lambda >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be non-negative");
  }
  Tape tape;
  Tensor probs = model.Forward(triggered);
  Tensor loss = CrossEntropy(probs, source_labels);
  if (lambda > 0.0) loss = loss + Scale(MeanEntropy(probs), lambda);
  return tape.Gradients(loss, model.parameters());
}

Tensor GradMatchingObjective(const ModelState& model, const Tensor& perturbed,
                             std::span<const int> labels,
                             std::span<const Tensor> target) {
  const auto& params = model.parameters();
  if (target.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "target gradient has " + std::to_string(target.size()) +
                    " tensors; model has " + std::to_string(params.size()));
  }
  double target_sq = 0.0;
  for (const Tensor& g : target) {
    for (double v : g.values()) target_sq += v * v;
  }
  if (!(target_sq > 0.0)) {
    throw Error(ErrorCode::kDegenerateGradient,
                "inference-loss gradient has zero norm");
  }
  auto matching = [&](bool create_graph) {
    Tensor loss = CrossEntropy(model.Forward(perturbed), labels);
    auto grads = Tape::Current()->Gradients(loss, params, create_graph);
    Tensor dot = Tensor::Scalar(0.0);
    Tensor sq = Tensor::Scalar(0.0);
    for (std::size_t k = 0; k < grads.size(); ++k) {
      dot = dot + Dot(grads[k], target[k]);
      sq = sq + Dot(grads[k], grads[k]);
    }
    if (!(sq.item() > 0.0)) {
      throw Error(ErrorCode::kDegenerateGradient,
                  "poisoned-sample gradient has zero norm");
    }
    return Scale(dot / Sqrt(sq), 1.0 / std::sqrt(target_sq));
  };
  Tape* outer = Tape::Current();
  if (outer != nullptr && RecordingEnabled()) {
    return matching(outer->mode() == DiffMode::kHigherOrder);
  }
  Tape local;
  return matching(false).Detach();
}

Tensor GradMatchingObjective(const ModelState& model, const Tensor& perturbed,
                             std::span<const int> labels,
                             const Tensor& triggered,
                             std::span<const int> source_labels, double lambda) {
  const auto target = InferenceLossGradient(model, triggered, source_labels, lambda);
  return GradMatchingObjective(model, perturbed, labels, target);
}

void BilevelConfig::Validate(std::size_t classes) const {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kConfig, "lambda must be >= 0");
  if (rounds < 1) throw Error(ErrorCode::kConfig, "rounds must be >= 1");
  if (lower_epochs < 0) throw Error(ErrorCode::kConfig, "lower epochs must be >= 0");
  if (source_class < 0 || source_class > static_cast<int>(classes)) {
    throw Error(ErrorCode::kConfig, "source class " + std::to_string(source_class) +
                                        " outside {0.." + std::to_string(classes) + "}");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorCode::kConfig, "gamma must lie in (0,1)");
  }
  if (pga.steps < 0) throw Error(ErrorCode::kConfig, "PGA steps must be >= 0");
  if (pga.steps > 0) pga.Validate();
  sgd.Validate();
}

nlohmann::json BilevelConfig::ToJson() const {
  return {{"lambda", lambda},
          {"rounds", rounds},
          {"lower_epochs", lower_epochs},
          {"pga",
           {{"step_size", pga.step_size},
            {"steps", pga.steps},
            {"epsilon", pga.epsilon},
            {"sign_steps", pga.sign_steps}}},
          {"source_class", source_class},
          {"gamma", gamma},
          {"selection", selection == SelectionRule::kGradientNorm ? "gradient-norm"
                                                                  : "random"},
          {"sgd", sgd.ToJson()}};
}

UbwCResult OptimizeUbwC(const LabeledDataset& data, const ModelState& pretrained,
                        const BilevelConfig& cfg, const TriggerSpec& inference,
                        const RngStream& rng) {
  cfg.Validate(data.classes());
  CheckGeometry(data, inference);
  if (inference.kind == TriggerKind::kAdditive) {
    throw Error(ErrorCode::kInvalidArgument,
                "the inference trigger must be a patch or blended trigger");
  }
  ModelState model = pretrained;
  const std::size_t m = PoisonCount(data.size(), cfg.gamma);
  std::vector<std::size_t> chosen =
      cfg.selection == SelectionRule::kGradientNorm
          ? SelectByGradientNorm(model, data, m)
          : SelectSubset(data.size(), cfg.gamma, rng).indices;

  std::vector<std::size_t> source_idx;
  if (cfg.source_class == 0) {
    source_idx.resize(data.size());
    std::iota(source_idx.begin(), source_idx.end(), std::size_t{0});
  } else {
    source_idx = data.IndicesOfClass(cfg.source_class);
  }
  if (source_idx.empty()) {
    throw Error(ErrorCode::kInsufficientSamples,
                "no training samples of source class " +
                    std::to_string(cfg.source_class));
  }
  const LabeledDataset source = ApplyTriggerAll(data.Subset(source_idx), inference);
  std::vector<std::size_t> all_source(source.size());
  std::iota(all_source.begin(), all_source.end(), std::size_t{0});
  const Tensor triggered = source.Batch(all_source);
  const std::vector<int> source_labels = source.labels();

  const Tensor clean = data.Batch(chosen);
  const std::vector<int> labels = data.Labels(chosen);
  Tensor current = clean;

  UbwCResult result;
  result.plan.method = "ubw-c";
  result.plan.gamma = cfg.gamma;
  result.plan.indices = chosen;
  result.plan.action = LabelAction::kKeep;
  result.plan.new_labels = labels;
  result.plan.trigger_digest = inference.Digest();

  TriggerSpec theta;
  theta.kind = TriggerKind::kAdditive;
  theta.shape = data.image_shape();
  theta.epsilon = cfg.pga.epsilon;
  const std::size_t d = data.image_shape().size();
  auto refresh = [&]() {
    auto x = clean.values();
    auto v = current.values();
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      std::vector<double> t(d);
      for (std::size_t e = 0; e < d; ++e) {
        t[e] = std::clamp(v[k * d + e] - x[k * d + e], -cfg.pga.epsilon,
                          cfg.pga.epsilon);
      }
      theta.perturbations[chosen[k]] = std::move(t);
    }
    return Rebuild(data, theta, chosen, labels);
  };

  LabeledDataset poisoned = refresh();
  for (int round = 0; round < cfg.rounds; ++round) {
    BilevelRound log;
    log.round = round;
    if (cfg.pga.steps > 0) {
      const auto target =
          InferenceLossGradient(model, triggered, source_labels, cfg.lambda);
      auto objective = [&](const Tensor& vars) {
        return Neg(GradMatchingObjective(model, vars, labels, target));
      };
      std::vector<double> trace;
      current = PgaAscend(objective, clean, cfg.pga, DiffMode::kHigherOrder,
                          current, &trace);
      for (double v : trace) log.objective.push_back(-v);
      poisoned = refresh();
    }
    if (round + 1 < cfg.rounds && cfg.lower_epochs > 0) {
      SgdConfig lower = cfg.sgd;
      lower.epochs = cfg.lower_epochs;
      lower.seed = cfg.sgd.seed + static_cast<std::uint64_t>(round) + 1;
      try {
        auto trained = SgdTrain(model, poisoned, lower);
        model = std::move(trained.model);
        log.train_loss = trained.log.empty() ? 0.0 : trained.log.back().loss;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDivergence) throw;
        throw Error(ErrorCode::kDivergence,
                    "lower level diverged in round " + std::to_string(round) +
                        ": " + e.what());
      }
    }
    result.log.push_back(std::move(log));
  }
  result.perturbation = theta;
  result.data = std::move(poisoned);
  Provenance p = data.provenance();
  p.kind = "poisoned";
  p.detail = {{"method", "ubw-c"},
              {"gamma", cfg.gamma},
              {"trigger_digest", inference.Digest()},
              {"trigger", inference.ToJson()},
              {"perturbation_digest", theta.Digest()},
              {"bilevel", cfg.ToJson()},
              {"plan", result.plan.ToJson()}};
  result.data.set_provenance(std::move(p));
  return result;
}

}  // namespace ubw
