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

#include "ubw/defense.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ubw/error.h"
#include "ubw/ops.h"
#include "ubw/rng.h"

namespace ubw {

void FineTuneConfig::Validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kConfig, "fine-tuning fraction must lie in (0,1]");
  }
  if (epochs < 0) throw Error(ErrorCode::kConfig, "fine-tuning epochs must be >= 0");
  if (!(lr >= 0.0)) throw Error(ErrorCode::kConfig, "fine-tuning lr must be >= 0");
}

FineTuneResult FineTune(const ModelState& model, const LabeledDataset& benign_train,
                        const LabeledDataset& test, const TriggerSpec& trigger,
                        const FineTuneConfig& cfg, std::optional<int> target) {
  cfg.Validate();
  const std::size_t n = benign_train.size();
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.fraction * n + 1e-9)));
  auto picked = RngStream(cfg.seed).Substream("finetune").SampleWithoutReplacement(n, count);
  std::sort(picked.begin(), picked.end());
  const LabeledDataset tune = benign_train.Subset(picked);

  FineTuneResult result{model, {}};
  result.trace.push_back({"fine-tune", 0.0, EvaluateAttack(model, test, trigger, target)});
  if (cfg.epochs == 0 || cfg.lr == 0.0) {
    for (int e = 1; e <= cfg.epochs; ++e) {
      result.trace.push_back({"fine-tune", static_cast<double>(e), result.trace.front().metrics});
    }
    return result;
  }
  SgdConfig sgd;
  sgd.lr = cfg.lr;
  sgd.momentum = cfg.momentum;
  sgd.weight_decay = cfg.weight_decay;
  sgd.batch_size = cfg.batch_size;
  sgd.epochs = cfg.epochs;
  sgd.seed = cfg.seed;
  TrainHooks hooks;
  hooks.trainable = model.arch().kind == ArchKind::kSmallCnn
                        ? model.FullyConnectedParameters()
                        : model.TrainableAfterFreezing(cfg.frozen_layers);
  hooks.evaluate = [&](const ModelState& current, int epoch) -> std::optional<double> {
    auto m = EvaluateAttack(current, test, trigger, target);
    result.trace.push_back({"fine-tune", static_cast<double>(epoch + 1), m});
    return m.benign_accuracy;
  };
  result.model = SgdTrain(model, tune, sgd, hooks).model;
  return result;
}

ModelState PruneChannels(const ModelState& model, double beta,
                         const LabeledDataset& calibration) {
  if (model.arch().kind != ArchKind::kSmallCnn) {
    throw Error(ErrorCode::kUnsupportedArch, "channel pruning needs a convolutional model");
  }
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pruning rate must lie in [0,1)");
  }
  const std::size_t channels = model.arch().conv2;
  std::vector<double> importance(channels, 0.0);
  {
    NoGradGuard no_grad;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < calibration.size(); start += 256) {
      const std::size_t stop = std::min(calibration.size(), start + 256);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      const Tensor act = model.LastConvOutput(calibration.Batch(idx));
      const auto& s = act.shape();
      const std::size_t plane = s[2] * s[3];
      auto v = act.values();
      for (std::size_t b = 0; b < s[0]; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
          const double* p = v.data() + (b * channels + c) * plane;
          for (std::size_t k = 0; k < plane; ++k) importance[c] += std::abs(p[k]);
        }
      }
    }
  }
  const auto pruned = static_cast<std::size_t>(
      std::ceil(beta * static_cast<double>(channels) - 1e-9));
  std::vector<std::size_t> order(channels);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importance[a] < importance[b];
  });
  std::vector<double> mask = model.channel_mask();
  for (std::size_t k = 0; k < pruned; ++k) mask[order[k]] = 0.0;
  ModelState out = model;
  out.set_channel_mask(std::move(mask));
  return out;
}

std::vector<double> PruningGrid(double step) {
  if (!(step > 0.0 && step < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "grid step must lie in (0,1)");
  }
  std::vector<double> grid;
  for (int k = 0;; ++k) {
    const double beta = k * step;
    if (beta >= 1.0 - 1e-12) break;
    grid.push_back(beta);
  }
  return grid;
}

std::vector<DefensePoint> PruneSweep(const ModelState& model, std::vector<double> betas,
                                     const LabeledDataset& calibration,
                                     const LabeledDataset& test,
                                     const TriggerSpec& trigger,
                                     std::optional<int> target) {
  std::sort(betas.begin(), betas.end());
  std::vector<DefensePoint> out;
  for (double beta : betas) {
    const ModelState pruned = PruneChannels(model, beta, calibration);
    out.push_back({"prune", beta, EvaluateAttack(pruned, test, trigger, target)});
  }
  return out;
}

std::string DefenseCsv(const std::vector<DefensePoint>& points) {
  std::ostringstream out;
  out.precision(10);
  out << "defense,parameter,ba,asr_a,asr_c,d_p\n";
  for (const auto& p : points) {
    out << p.defense << ',' << p.parameter << ',' << p.metrics.benign_accuracy << ','
        << p.metrics.asr_all << ',';
    if (p.metrics.asr_correct) {
      out << *p.metrics.asr_correct;
    } else {
      out << "undefined";
    }
    out << ',' << p.metrics.dispersibility << '\n';
  }
  return out.str();
}

}  // namespace ubw
