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

#ifndef UBW_OPS_H_
#define UBW_OPS_H_

#include <cstddef>
#include <vector>

#include "ubw/tensor.h"

// Differentiable primitives. Every backward rule is expressed with these same
// primitives, so gradients recorded under DiffMode::kHigherOrder can be
// differentiated again.
namespace ubw {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);

Tensor Neg(const Tensor& x);
Tensor Scale(const Tensor& x, double factor);
Tensor AddScalar(const Tensor& x, double value);

// 2-D only.
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& x);

Tensor Relu(const Tensor& x);
// Gradient passes through where lo <= x <= hi and is zero elsewhere.
Tensor Clamp(const Tensor& x, double lo, double hi);
// Domain error on any non-positive element.
Tensor Log(const Tensor& x);
Tensor Exp(const Tensor& x);
// Domain error on any negative element.
Tensor Sqrt(const Tensor& x);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);
Tensor Dot(const Tensor& a, const Tensor& b);
// Reduces a broadcast result back to `shape` (adjoint of BroadcastTo).
Tensor SumTo(const Tensor& x, const Shape& shape);
Tensor BroadcastTo(const Tensor& x, const Shape& shape);
Tensor Reshape(const Tensor& x, const Shape& shape);

// Softmax along the last axis of a 2-D tensor.
Tensor SoftmaxRows(const Tensor& logits);

// Valid (no padding), stride-1 cross-correlation.
// input [N,C,H,W], kernel [O,C,KH,KW] -> [N,O,H-KH+1,W-KW+1].
Tensor Conv2d(const Tensor& input, const Tensor& kernel);
// Adjoint of Conv2d with respect to its input; result [N,C,height,width].
Tensor Conv2dInputGrad(const Tensor& grad_out, const Tensor& kernel,
                       std::size_t height, std::size_t width);
// Adjoint of Conv2d with respect to its kernel; result [O,C,KH,KW].
Tensor Conv2dWeightGrad(const Tensor& input, const Tensor& grad_out,
                        std::size_t kernel_h, std::size_t kernel_w);

// Non-overlapping max pooling over size x size windows of [N,C,H,W]; trailing
// rows/columns that do not fill a window are dropped. Ties go to the first
// element in row-major window order.
Tensor MaxPool2d(const Tensor& input, std::size_t size);

// out[k] = x[index[k]], reshaped to `shape`.
Tensor Gather(const Tensor& x, std::vector<std::size_t> index, Shape shape);
// out = zeros(shape); out[index[k]] += x[k].
Tensor ScatterAdd(const Tensor& x, std::vector<std::size_t> index, Shape shape);

Shape BroadcastShapes(const Shape& a, const Shape& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return Add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return Sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return Mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return Div(a, b); }
inline Tensor operator-(const Tensor& x) { return Neg(x); }

}  // namespace ubw

#endif  // UBW_OPS_H_
