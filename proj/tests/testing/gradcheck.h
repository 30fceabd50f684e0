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

// Finite-difference checks for every differentiable primitive.

#ifndef UBW_TESTS_TESTING_GRADCHECK_H_
#define UBW_TESTS_TESTING_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "testing/test_util.h"
#include "ubw/data.h"
#include "ubw/nn.h"
#include "ubw/ops.h"
#include "ubw/tensor.h"
#include "ubw/watermark.h"

namespace ubw::testing {

using PrimitiveFn = std::function<Tensor(const std::vector<Tensor>&)>;
using InputMaker = std::function<std::vector<Tensor>(std::mt19937_64&)>;

struct PrimitiveCase {
  std::string name;
  PrimitiveFn f;
  InputMaker make;
  std::uint64_t seed;
};

inline void PrintTo(const PrimitiveCase& pc, std::ostream* os) { *os << pc.name; }

inline InputMaker Shapes(std::vector<Shape> shapes) {
  return [shapes](std::mt19937_64& gen) {
    std::vector<Tensor> out;
    for (const auto& s : shapes) out.push_back(RandomTensor(s, gen));
    return out;
  };
}

inline InputMaker Positive(Shape shape) {
  return [shape](std::mt19937_64& gen) {
    return std::vector<Tensor>{RandomTensor(shape, gen, 0.2, 3.0)};
  };
}

inline std::vector<PrimitiveCase> PrimitiveCases() {
  using V = std::vector<Tensor>;
  return {
      {"add", [](const V& v) { return Add(v[0], v[1]); }, Shapes({{3, 4}, {3, 4}}), 1},
      {"add_broadcast", [](const V& v) { return Add(v[0], v[1]); },
       Shapes({{3, 4}, {1, 4}}), 2},
      {"sub", [](const V& v) { return Sub(v[0], v[1]); }, Shapes({{2, 5}, {2, 1}}), 3},
      {"mul", [](const V& v) { return Mul(v[0], v[1]); }, Shapes({{4, 3}, {4, 3}}), 4},
      {"div", [](const V& v) { return Div(v[0], v[1]); },
       [](std::mt19937_64& gen) {
         return V{RandomTensor({3, 3}, gen), RandomTensor({3, 3}, gen, 0.5, 2.0)};
       },
       5},
      {"neg_scale_add_scalar", [](const V& v) { return AddScalar(Scale(Neg(v[0]), 1.7), 0.3); },
       Shapes({{5}}), 6},
      {"matmul", [](const V& v) { return MatMul(v[0], v[1]); }, Shapes({{3, 4}, {4, 2}}), 7},
      {"transpose", [](const V& v) { return Transpose(v[0]); }, Shapes({{3, 5}}), 8},
      {"relu", [](const V& v) { return Relu(v[0]); },
       [](std::mt19937_64& gen) { return V{AwayFromZero({12}, gen)}; }, 9},
      {"clamp", [](const V& v) { return Clamp(v[0], -0.5, 0.5); },
       [](std::mt19937_64& gen) {
         Tensor t = AwayFromZero({12}, gen);
         // Keep every coordinate off the clamp boundaries.
         for (double& x : t.mutable_values()) {
           if (std::abs(std::abs(x) - 0.5) < 0.05) x *= 0.8;
         }
         return V{t};
       },
       10},
      {"log", [](const V& v) { return Log(v[0]); }, Positive({8}), 11},
      {"exp", [](const V& v) { return Exp(v[0]); }, Shapes({{8}}), 12},
      {"sqrt", [](const V& v) { return Sqrt(v[0]); }, Positive({8}), 13},
      {"sum", [](const V& v) { return Sum(v[0]); }, Shapes({{3, 3}}), 14},
      {"mean", [](const V& v) { return Mean(v[0]); }, Shapes({{3, 3}}), 15},
      {"dot", [](const V& v) { return Dot(v[0], v[1]); }, Shapes({{7}, {7}}), 16},
      {"sum_to", [](const V& v) { return SumTo(v[0], {3, 1}); }, Shapes({{3, 4}}), 17},
      {"broadcast_to", [](const V& v) { return BroadcastTo(v[0], {2, 3, 4}); },
       Shapes({{3, 1}}), 18},
      {"reshape", [](const V& v) { return Reshape(v[0], {6, 2}); }, Shapes({{3, 4}}), 19},
      {"softmax", [](const V& v) { return SoftmaxRows(v[0]); }, Shapes({{3, 5}}), 20},
      {"conv2d", [](const V& v) { return Conv2d(v[0], v[1]); },
       Shapes({{2, 2, 5, 5}, {3, 2, 3, 3}}), 21},
      {"max_pool2d", [](const V& v) { return MaxPool2d(v[0], 2); }, Shapes({{1, 2, 5, 4}}), 22},
      {"gather", [](const V& v) { return Gather(v[0], {4, 0, 4, 2, 1}, {5}); },
       Shapes({{5}}), 23},
      {"scatter_add", [](const V& v) { return ScatterAdd(v[0], {1, 1, 3, 0}, {2, 2}); },
       Shapes({{4}}), 24},
  };
}

// Projects f onto a random direction so every output coordinate contributes,
// then compares the tape gradient of every input with central differences.
// Returns the worst relative error over `cases` random draws.
inline double WorstFirstOrderError(const PrimitiveCase& pc, int cases) {
  std::mt19937_64 gen(pc.seed);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const std::vector<Tensor> inputs = pc.make(gen);
    Tensor probe;
    {
      NoGradGuard guard;
      probe = pc.f(inputs);
    }
    const Tensor weight = RandomTensor(probe.shape(), gen);
    auto scalar = [&](const std::vector<Tensor>& in) { return Sum(Mul(pc.f(in), weight)); };

    std::vector<Tensor> leaves;
    for (const auto& x : inputs) leaves.push_back(x.Clone().set_requires_grad(true));
    Tape tape;
    const auto grads = tape.Gradients(scalar(leaves), leaves);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto numeric = NumericGradient(
          [&](const Tensor& xi) {
            NoGradGuard guard;
            auto moved = inputs;
            moved[i] = xi;
            return scalar(moved).item();
          },
          inputs[i]);
      worst = std::max(worst, RelativeError(grads[i].values(), numeric));
    }
  }
  return worst;
}

// Gradient of the gradient-matching objective with respect to the perturbed
// batch on a 2-layer MLP, against central differences. Worst relative error
// over `trials` random models and batches.
inline double WorstUpperLevelError(int trials) {
  const ImageShape shape{1, 2, 3};
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 gen(100 + trial);
    std::uniform_real_distribution<double> u(0.0, 0.99);
    std::vector<double> pixels(8 * shape.size());
    for (double& v : pixels) v = u(gen);
    std::vector<int> labels(8);
    for (std::size_t i = 0; i < 8; ++i) labels[i] = static_cast<int>(i % 3) + 1;
    const LabeledDataset data(shape, 3, std::move(pixels), std::move(labels));
    ArchSpec arch;
    arch.kind = ArchKind::kMlp;
    arch.input = shape;
    arch.classes = 3;
    arch.hidden = {5};
    const ModelState model(arch, 20 + trial);

    const std::vector<std::size_t> first{0, 1, 2, 3};
    const std::vector<std::size_t> second{4, 5, 6, 7};
    const Tensor x0 = data.Batch(first);
    const auto batch_labels = data.Labels(first);
    const auto target =
        InferenceLossGradient(model, data.Batch(second), data.Labels(second), 2.0);

    Tensor x = x0.Clone().set_requires_grad(true);
    Tape tape(DiffMode::kHigherOrder);
    const Tensor objective = GradMatchingObjective(model, x, batch_labels, target);
    const Tensor analytic = tape.GradOfGrad(objective, x);
    const auto numeric = NumericGradient(
        [&](const Tensor& v) {
          return GradMatchingObjective(model, v, batch_labels, target).item();
        },
        x0);
    worst = std::max(worst, RelativeError(analytic.values(), numeric));
  }
  return worst;
}

}  // namespace ubw::testing

#endif  // UBW_TESTS_TESTING_GRADCHECK_H_
