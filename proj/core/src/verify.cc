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

#include "ubw/verify.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ubw/error.h"
#include "ubw/student_t.h"

namespace ubw {
namespace {

constexpr double kSumTolerance = 1e-6;

std::vector<double> CheckedQuery(ModelOracle& oracle, std::span<const double> image,
                                 const ImageShape& shape, std::size_t classes) {
  auto p = oracle.Query(image, shape);
  if (p.size() != classes) {
    throw Error(ErrorCode::kProtocol,
                "oracle returned " + std::to_string(p.size()) +
                    " probabilities; expected " + std::to_string(classes));
  }
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw Error(ErrorCode::kProtocol, "oracle returned a value outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw Error(ErrorCode::kProtocol,
                "oracle probabilities sum to " + std::to_string(sum));
  }
  return p;
}

nlohmann::json FiniteOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

void VerificationConfig::Validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::kConfig, "tau must lie in [0,1]");
  if (m < 2) throw Error(ErrorCode::kConfig, "verification needs m >= 2");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kConfig, "significance level must lie in (0,1)");
  }
}

nlohmann::json VerificationConfig::ToJson() const {
  nlohmann::json j = {{"tau", tau}, {"m", m}, {"alpha", alpha}, {"seed", seed}};
  j["source_class"] = source_class ? nlohmann::json(*source_class) : nlohmann::json(nullptr);
  return j;
}

TTestResult PairedTTest(std::span<const double> benign,
                        std::span<const double> poisoned, double tau) {
  if (benign.size() != poisoned.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(benign.size()) + " benign vs " +
                    std::to_string(poisoned.size()) + " poisoned confidences");
  }
  if (benign.size() < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "paired test needs m >= 2");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tau must lie in [0,1]");
  }
  const std::size_t m = benign.size();
  std::vector<double> d(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (!(benign[i] >= 0.0 && benign[i] <= 1.0 && poisoned[i] >= 0.0 &&
          poisoned[i] <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "confidence at position " + std::to_string(i) + " outside [0,1]");
    }
    d[i] = benign[i] - poisoned[i] - tau;
  }
  TTestResult r;
  r.dof = static_cast<int>(m) - 1;
  double sum = 0.0;
  for (double v : d) sum += v;
  r.mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean) * (v - r.mean);
  r.sd = std::sqrt(ss / static_cast<double>(m - 1));
  if (r.sd == 0.0) {
    const double inf = std::numeric_limits<double>::infinity();
    r.t = r.mean > 0.0 ? inf : (r.mean < 0.0 ? -inf : 0.0);
    r.p = r.mean > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.t = r.mean * std::sqrt(static_cast<double>(m)) / r.sd;
  r.p = StudentTCdf(-r.t, r.dof);
  return r;
}

nlohmann::json VerificationReport::ToJson() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& v : samples) {
    s.push_back({{"index", v.index},
                 {"label", v.label},
                 {"p_benign", v.benign},
                 {"p_poisoned", v.poisoned}});
  }
  return {{"scenario", scenario},
          {"delta_p", delta_p},
          {"t", FiniteOrNull(test.t)},
          {"t_degenerate", !std::isfinite(test.t)},
          {"dof", test.dof},
          {"p_value", test.p},
          {"mean_difference", test.mean},
          {"sd_difference", test.sd},
          {"tau", tau},
          {"alpha", alpha},
          {"reject_h0", reject},
          {"reject_h0_at_0.05", reject_at_005},
          {"trigger_digest", trigger_digest},
          {"samples", s}};
}

std::string VerificationReport::SamplesCsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "index,label,p_benign,p_poisoned\n";
  for (const auto& v : samples) {
    out << v.index << ',' << v.label << ',' << v.benign << ',' << v.poisoned << '\n';
  }
  return out.str();
}

std::vector<std::size_t> SelectVerificationSamples(ModelOracle& oracle,
                                                   const LabeledDataset& test,
                                                   std::size_t m,
                                                   const RngStream& rng,
                                                   std::optional<int> source_class) {
  std::vector<std::size_t> pool;
  if (source_class) {
    pool = test.IndicesOfClass(*source_class);
  } else {
    pool.resize(test.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  }
  RngStream order = rng.Substream("verification");
  const auto perm = order.Permutation(pool.size());
  std::vector<std::size_t> chosen;
  for (std::size_t k : perm) {
    if (chosen.size() == m) break;
    const std::size_t i = pool[k];
    const auto p = CheckedQuery(oracle, test.image(i), test.image_shape(), test.classes());
    const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
    if (pred == test.label(i)) chosen.push_back(i);
  }
  if (chosen.size() < m) {
    throw Error(ErrorCode::kInsufficientSamples,
                "found " + std::to_string(chosen.size()) +
                    " correctly classified samples; verification needs " +
                    std::to_string(m));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

VerificationReport VerifyOwnership(ModelOracle& oracle, const LabeledDataset& test,
                                   const TriggerSpec& trigger,
                                   const VerificationConfig& cfg,
                                   const std::string& scenario) {
  cfg.Validate();
  if (!(trigger.shape == test.image_shape())) {
    throw Error(ErrorCode::kShapeMismatch,
                "trigger geometry does not match the verification images");
  }
  const auto chosen = SelectVerificationSamples(oracle, test, cfg.m,
                                                RngStream(cfg.seed), cfg.source_class);
  VerificationReport r;
  r.scenario = scenario;
  r.tau = cfg.tau;
  r.alpha = cfg.alpha;
  r.trigger_digest = trigger.Digest();
  std::vector<double> pb, pp;
  for (std::size_t i : chosen) {
    const int y = test.label(i);
    const auto benign = CheckedQuery(oracle, test.image(i), test.image_shape(), test.classes());
    const auto g = ApplyTrigger(test.image(i), trigger, i);
    const auto poisoned = CheckedQuery(oracle, g, test.image_shape(), test.classes());
    const auto at = static_cast<std::size_t>(y - 1);
    r.samples.push_back({i, y, benign[at], poisoned[at]});
    pb.push_back(benign[at]);
    pp.push_back(poisoned[at]);
  }
  r.test = PairedTTest(pb, pp, cfg.tau);
  double sum = 0.0;
  for (std::size_t k = 0; k < pb.size(); ++k) sum += pb[k] - pp[k];
  r.delta_p = sum / static_cast<double>(pb.size());
  r.reject = r.test.p < cfg.alpha;
  r.reject_at_005 = r.test.p < 0.05;
  return r;
}

}  // namespace ubw
