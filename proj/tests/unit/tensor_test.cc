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

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "testing/gradcheck.h"
#include "testing/test_util.h"
#include "ubw/error.h"
#include "ubw/nn.h"
#include "ubw/ops.h"
#include "ubw/tensor.h"

namespace ubw {
namespace {

using testing::AwayFromZero;
using testing::NumericGradient;
using testing::RandomTensor;
using testing::RelativeError;

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

constexpr int kCases = 100;
constexpr double kFirstOrderTol = 1e-4;

TEST(TensorExamples, MatMulByIdentity) {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor id({2, 2}, {1, 0, 0, 1});
  const Tensor out = MatMul(a, id);
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorExamples, Relu) {
  const Tensor out = Relu(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{0, 0, 2}));
}

TEST(TensorExamples, SoftmaxOfEqualLogits) {
  const Tensor out = SoftmaxRows(Tensor({1, 2}, {0, 0}));
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
}

TEST(TensorExamples, SquareGradient) {
  Tensor x = Tensor::Scalar(3.0).set_requires_grad(true);
  Tape tape;
  tape.Backward(Mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(TensorExamples, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  std::mt19937_64 gen(3);
  Tensor z = RandomTensor({1, 5}, gen).set_requires_grad(true);
  const std::vector<int> label{3};
  Tape tape;
  const Tensor probs = SoftmaxRows(z);
  tape.Backward(CrossEntropy(probs, label));
  for (std::size_t k = 0; k < 5; ++k) {
    const double expected = probs[k] - (k == 2 ? 1.0 : 0.0);
    EXPECT_NEAR(z.grad()[k], expected, 1e-12);
  }
}

TEST(TensorExamples, CubeSecondDerivative) {
  Tensor x = Tensor::Scalar(2.0).set_requires_grad(true);
  Tape tape(DiffMode::kHigherOrder);
  const Tensor y = Mul(Mul(x, x), x);
  const Tensor dy = tape.Gradients(y, std::span<const Tensor>(&x, 1), true)[0];
  EXPECT_DOUBLE_EQ(dy.item(), 12.0);
  EXPECT_DOUBLE_EQ(tape.GradOfGrad(dy, x).item(), 12.0);
}

TEST(TensorExamples, GradientNormObjective) {
  // ||d(w.x)/dw||^2 = ||x||^2, whose gradient in x is 2x.
  Tensor w = Tensor({2}, {0.3, -0.7}).set_requires_grad(true);
  Tensor x = Tensor({2}, {1, 2}).set_requires_grad(true);
  Tape tape(DiffMode::kHigherOrder);
  const Tensor g = tape.Gradients(Dot(w, x), std::span<const Tensor>(&w, 1), true)[0];
  const Tensor out = tape.GradOfGrad(Dot(g, g), x);
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 4.0);
}

TEST(TensorExamples, CosineOfLinearGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(11);
  const Tensor fixed = RandomTensor({6}, gen);
  const Tensor x0 = RandomTensor({6}, gen);
  Tensor w = RandomTensor({6}, gen).set_requires_grad(true);
  Tensor x = x0.Clone().set_requires_grad(true);
  auto cosine = [&](const Tensor& g) {
    return Div(Dot(g, fixed), Mul(Sqrt(Dot(g, g)), Sqrt(Dot(fixed, fixed))));
  };
  Tape tape(DiffMode::kHigherOrder);
  const Tensor g = tape.Gradients(Dot(w, x), std::span<const Tensor>(&w, 1), true)[0];
  const Tensor analytic = tape.GradOfGrad(cosine(g), x);
  // L is linear in w, so grad_w L = x and the objective is cos(x, fixed).
  const auto numeric = NumericGradient(
      [&](const Tensor& v) {
        NoGradGuard guard;
        return cosine(v).item();
      },
      x0);
  EXPECT_LE(RelativeError(analytic.values(), numeric), 1e-6);
}

TEST(TensorExamples, IndependentObjectiveGivesZeros) {
  Tensor w = Tensor({2}, {1, 1}).set_requires_grad(true);
  Tensor x = Tensor({2}, {1, 2}).set_requires_grad(true);
  Tape tape(DiffMode::kHigherOrder);
  const Tensor g = tape.Gradients(Sum(Mul(w, w)), std::span<const Tensor>(&w, 1), true)[0];
  const Tensor out = tape.GradOfGrad(Dot(g, g), x);
  ASSERT_EQ(out.shape(), x.shape());
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
}

class TensorFiniteDifference : public ::testing::TestWithParam<testing::PrimitiveCase> {};

TEST_P(TensorFiniteDifference, MatchesCentralDifferences) {
  const double worst = testing::WorstFirstOrderError(GetParam(), kCases);
  ::testing::Test::RecordProperty("worst_relative_error", std::to_string(worst));
  EXPECT_LE(worst, kFirstOrderTol) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(Primitives, TensorFiniteDifference,
                         ::testing::ValuesIn(testing::PrimitiveCases()),
                         [](const auto& info) { return info.param.name; });

// Second order: Hessian-vector products from GradOfGrad against central
// differences of the first-order gradient.
void CheckSecondOrder(const Fn& f, const Shape& shape, std::uint64_t seed, int cases) {
  std::mt19937_64 gen(seed);
  for (int c = 0; c < cases; ++c) {
    const Tensor x0 = RandomTensor(shape, gen);
    const Tensor v = RandomTensor(shape, gen);
    auto directional = [&](const Tensor& at) {
      Tensor leaf = at.Clone().set_requires_grad(true);
      Tape tape;
      const Tensor g = tape.Gradients(f({leaf}), std::span<const Tensor>(&leaf, 1))[0];
      double s = 0.0;
      for (std::size_t i = 0; i < g.numel(); ++i) s += g[i] * v[i];
      return s;
    };
    Tensor x = x0.Clone().set_requires_grad(true);
    Tape tape(DiffMode::kHigherOrder);
    const Tensor g = tape.Gradients(f({x}), std::span<const Tensor>(&x, 1), true)[0];
    const Tensor hv = tape.GradOfGrad(Dot(Reshape(g, {g.numel()}), Reshape(v, {v.numel()})), x);
    const auto numeric = NumericGradient(directional, x0, 1e-4);
    ASSERT_LE(RelativeError(hv.values(), numeric), 1e-3) << "case " << c;
  }
}

TEST(TensorSecondOrder, SmoothComposition) {
  CheckSecondOrder(
      [](const auto& in) {
        const Tensor& x = in[0];
        return Sum(Mul(Exp(Scale(x, 0.5)), SoftmaxRows(Mul(x, x))));
      },
      {3, 4}, 31, 20);
}

TEST(TensorSecondOrder, ConvPoolSoftmaxLog) {
  std::mt19937_64 gen(32);
  const Tensor kernel = RandomTensor({2, 1, 3, 3}, gen);
  const Tensor fc = RandomTensor({8, 3}, gen);
  CheckSecondOrder(
      [&](const auto& in) {
        const Tensor h = MaxPool2d(Relu(Conv2d(in[0], kernel)), 2);
        const Tensor logits = MatMul(Reshape(h, {1, 8}), fc);
        return Neg(Sum(Log(Clamp(SoftmaxRows(logits), 1e-12, 1.0))));
      },
      {1, 1, 6, 6}, 33, 20);
}

TEST(TensorProperties, BackwardIsLinearOverIndependentGraphs) {
  std::mt19937_64 gen(41);
  const Tensor a0 = RandomTensor({3, 3}, gen);
  const Tensor b0 = RandomTensor({4}, gen);
  auto fa = [](const Tensor& a) { return Sum(Exp(MatMul(a, a))); };
  auto fb = [](const Tensor& b) { return Dot(b, Exp(b)); };
  Tensor a = a0.Clone().set_requires_grad(true);
  Tensor b = b0.Clone().set_requires_grad(true);
  {
    Tape tape;
    tape.Backward(Add(fa(a), fb(b)));
  }
  Tensor a1 = a0.Clone().set_requires_grad(true);
  Tensor b1 = b0.Clone().set_requires_grad(true);
  {
    Tape tape;
    tape.Backward(fa(a1));
  }
  {
    Tape tape;
    tape.Backward(fb(b1));
  }
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_DOUBLE_EQ(a.grad()[i], a1.grad()[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_DOUBLE_EQ(b.grad()[i], b1.grad()[i]);
}

TEST(TensorProperties, SoftmaxRowsSumToOneAndClampStaysInBounds) {
  std::mt19937_64 gen(42);
  for (int c = 0; c < 100; ++c) {
    const Tensor z = RandomTensor({4, 7}, gen, -30.0, 30.0);
    const Tensor p = SoftmaxRows(z);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += p[r * 7 + k];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const Tensor q = Clamp(z, -1.25, 2.5);
    for (double v : q.values()) {
      EXPECT_GE(v, -1.25);
      EXPECT_LE(v, 2.5);
    }
  }
}

TEST(TensorErrors, StructuredCodes) {
  auto code_of = [](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code_of([] { Log(Tensor({2}, {1.0, 0.0})); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { Sqrt(Tensor({1}, {-1.0})); }), ErrorCode::kDomain);
  EXPECT_EQ(code_of([] { Add(Tensor({2, 3}), Tensor({3, 2})); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([] { MatMul(Tensor({2, 3}), Tensor({2, 3})); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([] {
              Tensor x = Tensor::Scalar(1.0).set_requires_grad(true);
              Tape tape;
              tape.GradOfGrad(Mul(x, x), x);
            }),
            ErrorCode::kTapeMode);
  EXPECT_EQ(code_of([] {
              Tensor x = Tensor::Scalar(1.0).set_requires_grad(true);
              Tape tape;
              tape.Backward(Mul(x, x));
              tape.Backward(Mul(x, x));
            }),
            ErrorCode::kTapeState);
}

}  // namespace
}  // namespace ubw
