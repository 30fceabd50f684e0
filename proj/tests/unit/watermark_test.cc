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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "testing/gradcheck.h"
#include "testing/test_util.h"
#include "ubw/container.h"
#include "ubw/data.h"
#include "ubw/error.h"
#include "ubw/nn.h"
#include "ubw/ops.h"
#include "ubw/rng.h"
#include "ubw/watermark.h"

namespace ubw {
namespace {

using testing::NumericGradient;
using testing::RelativeError;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

LabeledDataset RandomData(std::size_t n, ImageShape shape, std::size_t classes,
                          std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 0.99);
  std::vector<double> pixels(n * shape.size());
  for (double& v : pixels) v = u(gen);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes) + 1;
  return LabeledDataset(shape, classes, std::move(pixels), std::move(labels));
}

ArchSpec Mlp(ImageShape input, std::size_t classes, std::vector<std::size_t> hidden,
             bool bias = true) {
  ArchSpec a;
  a.kind = ArchKind::kMlp;
  a.input = input;
  a.classes = classes;
  a.hidden = std::move(hidden);
  a.bias = bias;
  return a;
}

// Sets the last pixel to 1.
TriggerSpec CornerPixel(const ImageShape& shape) {
  TriggerSpec t;
  t.kind = TriggerKind::kPatch;
  t.shape = shape;
  t.alpha.assign(shape.size(), 0.0);
  t.pattern.assign(shape.size(), 0.0);
  t.alpha.back() = 1.0;
  t.pattern.back() = 1.0;
  return t;
}

bool SameImage(const LabeledDataset& a, const LabeledDataset& b, std::size_t i) {
  const auto x = a.image(i);
  const auto y = b.image(i);
  return std::equal(x.begin(), x.end(), y.begin());
}

TEST(WatermarkTrigger, FullMaskPatchGivesPattern) {
  const ImageShape shape{1, 3, 3};
  std::mt19937_64 gen(1);
  TriggerSpec t;
  t.kind = TriggerKind::kPatch;
  t.shape = shape;
  t.alpha.assign(9, 1.0);
  for (int i = 0; i < 9; ++i) t.pattern.push_back(std::uniform_real_distribution<double>()(gen));
  const std::vector<double> x(9, 0.3);
  EXPECT_EQ(ApplyTrigger(x, t), t.pattern);
}

TEST(WatermarkTrigger, BlendedArithmetic) {
  const ImageShape shape{1, 1, 2};
  TriggerSpec t;
  t.kind = TriggerKind::kBlended;
  t.shape = shape;
  t.pattern = {1.0, 0.2};
  t.alpha = {0.0, 0.0};
  const std::vector<double> x{0.5, 0.7};
  EXPECT_EQ(ApplyTrigger(x, t), x);
  t.alpha = {0.1, 0.1};
  const auto y = ApplyTrigger(x, t);
  EXPECT_NEAR(y[0], 0.55, 1e-15);
  EXPECT_NEAR(y[1], 0.65, 1e-15);
  const auto blended = BlendedTrigger({1, 14, 14}, 0.1, 3);
  for (double a : blended.alpha) EXPECT_DOUBLE_EQ(a, 0.1);
  EXPECT_EQ(blended.pattern, BlendedTrigger({1, 14, 14}, 0.1, 3).pattern);
  EXPECT_NE(blended.pattern, BlendedTrigger({1, 14, 14}, 0.1, 4).pattern);
}

TEST(WatermarkTrigger, PatchIsIdempotent) {
  const auto data = RandomData(20, {1, 14, 14}, 2, 3);
  for (Corner c : {Corner::kTopLeft, Corner::kBottomRight}) {
    const auto patch = PatchTrigger(data.image_shape(), 4, c, 1);
    std::size_t set = 0;
    for (double a : patch.alpha) set += a == 1.0;
    EXPECT_EQ(set, 16u);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto once = ApplyTrigger(data.image(i), patch);
      EXPECT_EQ(ApplyTrigger(once, patch), once);
    }
  }
  EXPECT_EQ(CodeOf([] { PatchTrigger({1, 3, 3}, 4); }), ErrorCode::kInvalidArgument);
}

TEST(WatermarkTrigger, FileRoundTripAndDigestChecks) {
  testing::TempDir dir;
  const auto t = BlendedTrigger({1, 6, 6}, 0.1, 9);
  WriteTriggerFile(dir / "t.json", t, "cafe");
  const auto back = ReadTriggerFile(dir / "t.json");
  EXPECT_EQ(back.Digest(), t.Digest());
  EXPECT_EQ(back.pattern, t.pattern);

  auto j = nlohmann::json::parse(ReadFileBytes(dir / "t.json"));
  j.erase("digest");
  WriteTextFile(dir / "nodigest.json", j.dump());
  EXPECT_EQ(CodeOf([&] { ReadTriggerFile(dir / "nodigest.json"); }), ErrorCode::kConfig);

  j = nlohmann::json::parse(ReadFileBytes(dir / "t.json"));
  j["trigger"]["pattern"][0] = 0.0;
  WriteTextFile(dir / "tampered.json", j.dump());
  EXPECT_EQ(CodeOf([&] { ReadTriggerFile(dir / "tampered.json"); }), ErrorCode::kConfig);
}

TEST(WatermarkUbwP, ResampledLabelsMatchTheUniformRate) {
  const ImageShape shape{1, 1, 2};
  const auto data = RandomData(20000, shape, 10, 4);
  const auto r = PoisonUbwP(data, 0.5, CornerPixel(shape), RngStream(5));
  ASSERT_EQ(r.plan.indices.size(), 10000u);
  std::size_t same = 0;
  for (std::size_t i : r.plan.indices) same += r.data.label(i) == data.label(i);
  EXPECT_NEAR(static_cast<double>(same) / 10000.0, 0.1, 0.01);
}

TEST(WatermarkUbwP, TouchesExactlyTheSelectedSamples) {
  const ImageShape shape{1, 2, 2};
  const auto data = RandomData(1000, shape, 10, 6);
  const auto r = PoisonUbwP(data, 0.1, CornerPixel(shape), RngStream(7));
  ASSERT_EQ(r.data.size(), data.size());
  std::vector<bool> selected(data.size(), false);
  for (std::size_t i : r.plan.indices) selected[i] = true;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool same = SameImage(r.data, data, i);
    differ += !same;
    if (!selected[i]) {
      EXPECT_TRUE(same) << i;
      EXPECT_EQ(r.data.label(i), data.label(i)) << i;
    }
  }
  EXPECT_EQ(differ, 100u);
  EXPECT_EQ(r.data.provenance().kind, "poisoned");
  EXPECT_EQ(r.data.provenance().detail.at("method"), "ubw-p");

  const auto again = PoisonUbwP(data, 0.1, CornerPixel(shape), RngStream(7));
  EXPECT_EQ(again.data.pixels(), r.data.pixels());
  EXPECT_EQ(again.data.labels(), r.data.labels());
}

TEST(WatermarkUbwP, ExclusiveModeNeverKeepsTheLabel) {
  const ImageShape shape{1, 1, 2};
  const auto data = RandomData(2000, shape, 3, 8);
  const auto r = PoisonUbwP(data, 0.5, CornerPixel(shape), RngStream(1), true);
  for (std::size_t i : r.plan.indices) EXPECT_NE(r.data.label(i), data.label(i));
}

TEST(WatermarkTargeted, AllPoisonedLabelsAreTheTarget) {
  const ImageShape shape{1, 2, 2};
  const auto data = RandomData(500, shape, 10, 9);
  const auto r = PoisonTargeted(data, 0.1, CornerPixel(shape), 1, RngStream(2));
  ASSERT_EQ(r.plan.indices.size(), 50u);
  std::vector<bool> selected(data.size(), false);
  for (std::size_t i : r.plan.indices) {
    selected[i] = true;
    EXPECT_EQ(r.data.label(i), 1);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!selected[i]) {
      EXPECT_TRUE(SameImage(r.data, data, i));
      EXPECT_EQ(r.data.label(i), data.label(i));
    }
  }
  EXPECT_EQ(CodeOf([&] { PoisonTargeted(data, 0.0, CornerPixel(shape), 1, RngStream(2)); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([&] { PoisonTargeted(data, 0.1, CornerPixel(shape), 11, RngStream(2)); }),
            ErrorCode::kInvalidArgument);
}

TEST(WatermarkGradMatching, IdenticalBatchesGiveOne) {
  const auto data = RandomData(6, {1, 2, 3}, 3, 10);
  const ModelState model(Mlp({1, 2, 3}, 3, {4}), 2);
  std::vector<std::size_t> idx(6);
  std::iota(idx.begin(), idx.end(), 0);
  const Tensor x = data.Batch(idx);
  const auto labels = data.Labels(idx);
  EXPECT_NEAR(GradMatchingObjective(model, x, labels, x, labels, 0.0).item(), 1.0, 1e-12);
}

TEST(WatermarkGradMatching, DisjointParameterTouchGivesZero) {
  // Linear model without bias: sample (1,0) only touches row 0 of W and
  // sample (0,1) only row 1.
  const ModelState model(Mlp({1, 1, 2}, 2, {}, false), 3);
  const Tensor a({1, 1, 1, 2}, {1.0, 0.0});
  const Tensor b({1, 1, 1, 2}, {0.0, 1.0});
  const std::vector<int> la{1};
  const std::vector<int> lb{2};
  EXPECT_NEAR(GradMatchingObjective(model, a, la, b, lb, 0.0).item(), 0.0, 1e-15);
}

TEST(WatermarkGradMatching, PerturbationGradientMatchesFiniteDifferences) {
  EXPECT_LE(testing::WorstUpperLevelError(10), 1e-3);
}

TEST(WatermarkGradMatching, ZeroGradientIsDegenerate) {
  ModelState model(Mlp({1, 1, 2}, 2, {}, false), 3);
  model.SetFlatParameters(std::vector<double>(model.parameter_count(), 0.0));
  const Tensor zero({1, 1, 1, 2}, {0.0, 0.0});
  const std::vector<int> label{1};
  EXPECT_EQ(CodeOf([&] { GradMatchingObjective(model, zero, label, zero, label, 0.0); }),
            ErrorCode::kDegenerateGradient);
}

TEST(WatermarkSelection, GradientNormOrdering) {
  const auto base = RandomData(50, {1, 2, 2}, 3, 13);
  const ModelState model(Mlp({1, 2, 2}, 3, {6}), 4);
  std::vector<std::size_t> all(50);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(SelectByGradientNorm(model, base, 50), all);

  // Brute-force oracle: per-sample norms from individual backward passes.
  std::vector<double> norms(50);
  for (std::size_t i = 0; i < 50; ++i) {
    const std::vector<std::size_t> one{i};
    const std::vector<int> label{base.label(i)};
    Tape tape;
    double sq = 0.0;
    for (const auto& g : tape.Gradients(CrossEntropy(model.Forward(base.Batch(one)), label),
                                        model.parameters())) {
      for (double v : g.values()) sq += v * v;
    }
    norms[i] = std::sqrt(sq);
  }
  std::vector<std::size_t> order = all;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  std::vector<std::size_t> expected(order.begin(), order.begin() + 10);
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(SelectByGradientNorm(model, base, 10), expected);

  // A duplicated top sample is selected twice before anything smaller.
  std::vector<std::size_t> with_dup = all;
  with_dup.push_back(order[0]);
  const auto dup = base.Subset(with_dup);
  const auto top2 = SelectByGradientNorm(model, dup, 2);
  EXPECT_EQ(top2, (std::vector<std::size_t>{order[0], 50}));
}

BilevelConfig SmallBilevel() {
  BilevelConfig cfg;
  cfg.rounds = 2;
  cfg.lower_epochs = 1;
  cfg.pga.steps = 3;
  cfg.pga.step_size = 0.02;
  cfg.source_class = 1;
  cfg.gamma = 0.2;
  cfg.sgd.epochs = 1;
  cfg.sgd.batch_size = 8;
  return cfg;
}

TEST(WatermarkUbwC, ZeroStepsIsANoOp) {
  const ImageShape shape{1, 3, 3};
  const auto data = RandomData(30, shape, 3, 14);
  const ModelState model(Mlp(shape, 3, {6}), 1);
  auto cfg = SmallBilevel();
  cfg.rounds = 1;
  cfg.pga.steps = 0;
  const auto r = OptimizeUbwC(data, model, cfg, CornerPixel(shape), RngStream(3));
  EXPECT_EQ(r.data.pixels(), data.pixels());
  EXPECT_EQ(r.data.labels(), data.labels());
  for (const auto& [i, theta] : r.perturbation.perturbations) {
    for (double v : theta) EXPECT_EQ(v, 0.0);
  }
}

TEST(WatermarkUbwC, CleanLabelsAndEpsilonBall) {
  const ImageShape shape{1, 3, 3};
  const auto data = RandomData(40, shape, 3, 15);
  const ModelState model(Mlp(shape, 3, {6}), 1);
  const auto cfg = SmallBilevel();
  const auto r = OptimizeUbwC(data, model, cfg, CornerPixel(shape), RngStream(4));
  ASSERT_EQ(r.data.size(), data.size());
  EXPECT_EQ(r.data.labels(), data.labels());
  ASSERT_EQ(r.log.size(), 2u);
  for (const auto& round : r.log) EXPECT_EQ(round.objective.size(), 3u);
  EXPECT_EQ(r.plan.indices.size(), PoisonCount(40, cfg.gamma));
  std::vector<bool> selected(data.size(), false);
  for (std::size_t i : r.plan.indices) selected[i] = true;
  bool moved = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto a = data.image(i);
    const auto b = r.data.image(i);
    for (std::size_t p = 0; p < a.size(); ++p) {
      ASSERT_LE(std::abs(b[p] - a[p]), cfg.pga.epsilon + 1e-12);
      ASSERT_GE(b[p], 0.0);
      ASSERT_LE(b[p], 1.0);
      if (!selected[i]) ASSERT_EQ(b[p], a[p]);
      moved = moved || b[p] != a[p];
    }
  }
  EXPECT_TRUE(moved);
  for (const auto& [i, theta] : r.perturbation.perturbations) {
    EXPECT_TRUE(selected[i]);
    for (double v : theta) EXPECT_LE(std::abs(v), cfg.pga.epsilon);
  }
  EXPECT_NO_THROW(r.perturbation.Validate());

  const auto again = OptimizeUbwC(data, model, cfg, CornerPixel(shape), RngStream(4));
  EXPECT_EQ(again.data.pixels(), r.data.pixels());
}

}  // namespace
}  // namespace ubw
