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

// Micro-benchmarks: convolution, one SGD step, Student-t CDF, one
// gradient-matching evaluation.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "ubw/data.h"
#include "ubw/nn.h"
#include "ubw/ops.h"
#include "ubw/rng.h"
#include "ubw/student_t.h"
#include "ubw/tensor.h"
#include "ubw/watermark.h"

namespace {

ubw::Tensor RandomTensor(ubw::Shape shape, std::uint64_t seed) {
  ubw::RngStream rng(seed);
  ubw::Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.Normal(0.0, 1.0);
  return t;
}

ubw::LabeledDataset SmallData(std::size_t per_class) {
  ubw::SynthOptions opt;
  opt.per_class = per_class;
  opt.noise = 0.1;
  opt.smooth = 2.0;
  return ubw::SynthPatterns(opt);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = RandomTensor({n, 16, 6, 6}, 1);
  const auto k = RandomTensor({32, 16, 3, 3}, 2);
  ubw::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ubw::Conv2d(x, k));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(32);

void BM_SgdEpoch(benchmark::State& state) {
  const auto data = SmallData(static_cast<std::size_t>(state.range(0)));
  const ubw::ModelState init(ubw::ArchSpec{}, 1);
  ubw::SgdConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(ubw::SgdTrain(init, data, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_SgdEpoch)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_StudentTCdf(benchmark::State& state) {
  const double dof = static_cast<double>(state.range(0));
  double t = -4.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ubw::StudentTCdf(t, dof));
    t = t > 4.0 ? -4.0 : t + 0.01;
  }
}
BENCHMARK(BM_StudentTCdf)->Arg(1)->Arg(99)->Arg(10000);

void BM_GradMatchingStep(benchmark::State& state) {
  const auto data = SmallData(4);
  const ubw::ModelState model(ubw::ArchSpec{}, 1);
  std::vector<std::size_t> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  const auto x = data.Batch(idx);
  const auto labels = data.Labels(idx);
  const auto target = ubw::InferenceLossGradient(model, x, labels, 2.0);
  for (auto _ : state) {
    ubw::Tape tape(ubw::DiffMode::kHigherOrder);
    auto v = x.Clone();
    v.set_requires_grad(true);
    const auto obj = ubw::GradMatchingObjective(model, v, labels, target);
    benchmark::DoNotOptimize(tape.GradOfGrad(obj, v));
  }
}
BENCHMARK(BM_GradMatchingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
