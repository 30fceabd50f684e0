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

#include "ubw/ops.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "ubw/error.h"

namespace ubw {
namespace {

using Grads = std::vector<Tensor>;

[[noreturn]] void ShapeError(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw Error(ErrorCode::kShapeMismatch, op + ": incompatible shapes " +
                                             ShapeToString(a) + " and " +
                                             ShapeToString(b));
}

void RequireDefined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(op) + ": undefined tensor");
  }
}

std::vector<std::size_t> ContiguousStrides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// Strides into a tensor of shape `src` while walking a tensor of shape `dst`
// that `src` broadcasts to.
std::vector<std::size_t> BroadcastStrides(const Shape& src, const Shape& dst) {
  std::vector<std::size_t> out(dst.size(), 0);
  const std::size_t offset = dst.size() - src.size();
  auto contiguous = ContiguousStrides(src);
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[offset + i] = src[i] == 1 ? 0 : contiguous[i];
  }
  return out;
}

// Calls visit(k, pa, pb) for every flat index k of `dst`, with the matching
// positions inside the two broadcast operands.
template <typename Visit>
void WalkBroadcast(const Shape& dst, const std::vector<std::size_t>& sa,
                   const std::vector<std::size_t>& sb, Visit visit) {
  const std::size_t total = NumElements(dst);
  if (total == 0) return;
  const std::size_t nd = dst.size();
  if (nd == 0) {
    visit(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(nd, 0);
  std::size_t pa = 0, pb = 0;
  for (std::size_t k = 0; k < total; ++k) {
    visit(k, pa, pb);
    std::size_t d = nd - 1;
    while (true) {
      ++idx[d];
      pa += sa[d];
      pb += sb[d];
      if (idx[d] < dst[d] || d == 0) break;
      pa -= sa[d] * dst[d];
      pb -= sb[d] * dst[d];
      idx[d] = 0;
      --d;
    }
  }
}

template <typename F>
Tensor Zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  RequireDefined(a, op);
  RequireDefined(b, op);
  auto va = a.values();
  auto vb = b.values();
  if (a.shape() == b.shape()) {
    std::vector<double> out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i], vb[i]);
    return Tensor(a.shape(), std::move(out));
  }
  Shape shape;
  try {
    shape = BroadcastShapes(a.shape(), b.shape());
  } catch (const Error&) {
    ShapeError(op, a.shape(), b.shape());
  }
  std::vector<double> out(NumElements(shape));
  WalkBroadcast(shape, BroadcastStrides(a.shape(), shape),
                BroadcastStrides(b.shape(), shape),
                [&](std::size_t k, std::size_t pa, std::size_t pb) {
                  out[k] = f(va[pa], vb[pb]);
                });
  return Tensor(std::move(shape), std::move(out));
}

template <typename F>
Tensor Map(const Tensor& x, F f) {
  auto vx = x.values();
  std::vector<double> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(vx[i]);
  return Tensor(x.shape(), std::move(out));
}

// Reduce `g` to `shape` only when broadcasting actually happened.
Tensor Unbroadcast(const Tensor& g, const Shape& shape) {
  return g.shape() == shape ? g : SumTo(g, shape);
}

void Require4d(const Tensor& t, const char* op, const char* what) {
  if (t.dim() != 4) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": " + what + " must be 4-D, got " +
                    ShapeToString(t.shape()));
  }
}

}  // namespace

Shape BroadcastShapes(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      ShapeError("broadcast", a, b);
    }
  }
  return out;
}

Tensor Add(const Tensor& a, const Tensor& b) {
  Tensor out = Zip(a, b, "add", [](double x, double y) { return x + y; });
  return Record(out, {a, b}, [a, b](const Tensor& g) {
    return Grads{Unbroadcast(g, a.shape()), Unbroadcast(g, b.shape())};
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  Tensor out = Zip(a, b, "sub", [](double x, double y) { return x - y; });
  return Record(out, {a, b}, [a, b](const Tensor& g) {
    return Grads{Unbroadcast(g, a.shape()), Unbroadcast(Neg(g), b.shape())};
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  Tensor out = Zip(a, b, "mul", [](double x, double y) { return x * y; });
  return Record(out, {a, b}, [a, b](const Tensor& g) {
    Grads grads(2);
    if (a.requires_grad()) grads[0] = Unbroadcast(Mul(g, b), a.shape());
    if (b.requires_grad()) grads[1] = Unbroadcast(Mul(g, a), b.shape());
    return grads;
  });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  Tensor out = Zip(a, b, "div", [](double x, double y) { return x / y; });
  return Record(out, {a, b}, [a, b, out](const Tensor& g) {
    return Grads{Unbroadcast(Div(g, b), a.shape()),
                 Unbroadcast(Neg(Div(Mul(g, out), b)), b.shape())};
  });
}

Tensor Neg(const Tensor& x) {
  RequireDefined(x, "neg");
  Tensor out = Map(x, [](double v) { return -v; });
  return Record(out, {x}, [](const Tensor& g) { return Grads{Neg(g)}; });
}

Tensor Scale(const Tensor& x, double factor) {
  RequireDefined(x, "scale");
  Tensor out = Map(x, [factor](double v) { return v * factor; });
  return Record(out, {x}, [factor](const Tensor& g) {
    return Grads{Scale(g, factor)};
  });
}

Tensor AddScalar(const Tensor& x, double value) {
  RequireDefined(x, "add_scalar");
  Tensor out = Map(x, [value](double v) { return v + value; });
  return Record(out, {x}, [](const Tensor& g) { return Grads{g}; });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireDefined(a, "matmul");
  RequireDefined(b, "matmul");
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    ShapeError("matmul", a.shape(), b.shape());
  }
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  std::vector<double> out(n * m, 0.0);
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = va[i * k + p];
      if (s == 0.0) continue;
      const double* brow = vb.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += s * brow[j];
    }
  }
  Tensor result(Shape{n, m}, std::move(out));
  return Record(result, {a, b}, [a, b](const Tensor& g) {
    return Grads{MatMul(g, Transpose(b)), MatMul(Transpose(a), g)};
  });
}

Tensor Transpose(const Tensor& x) {
  RequireDefined(x, "transpose");
  if (x.dim() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "transpose: expected 2-D tensor, got " +
                    ShapeToString(x.shape()));
  }
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  auto vx = x.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = vx[i * c + j];
  }
  Tensor result(Shape{c, r}, std::move(out));
  return Record(result, {x},
                [](const Tensor& g) { return Grads{Transpose(g)}; });
}

Tensor Relu(const Tensor& x) {
  RequireDefined(x, "relu");
  Tensor out = Map(x, [](double v) { return v > 0.0 ? v : 0.0; });
  return Record(out, {x}, [x](const Tensor& g) {
    Tensor mask = Map(x, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
    return Grads{Mul(g, mask)};
  });
}

Tensor Clamp(const Tensor& x, double lo, double hi) {
  RequireDefined(x, "clamp");
  if (!(lo <= hi)) {
    throw Error(ErrorCode::kInvalidArgument, "clamp: lo must not exceed hi");
  }
  Tensor out = Map(x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); });
  return Record(out, {x}, [x, lo, hi](const Tensor& g) {
    Tensor mask = Map(x, [lo, hi](double v) {
      return v >= lo && v <= hi ? 1.0 : 0.0;
    });
    return Grads{Mul(g, mask)};
  });
}

Tensor Log(const Tensor& x) {
  RequireDefined(x, "log");
  auto vx = x.values();
  for (std::size_t i = 0; i < vx.size(); ++i) {
    if (!(vx[i] > 0.0)) {
      throw Error(ErrorCode::kDomain, "log: non-positive input " +
                                          std::to_string(vx[i]) +
                                          " at element " + std::to_string(i));
    }
  }
  Tensor out = Map(x, [](double v) { return std::log(v); });
  return Record(out, {x}, [x](const Tensor& g) { return Grads{Div(g, x)}; });
}

Tensor Exp(const Tensor& x) {
  RequireDefined(x, "exp");
  Tensor out = Map(x, [](double v) { return std::exp(v); });
  return Record(out, {x}, [out](const Tensor& g) { return Grads{Mul(g, out)}; });
}

Tensor Sqrt(const Tensor& x) {
  RequireDefined(x, "sqrt");
  auto vx = x.values();
  for (std::size_t i = 0; i < vx.size(); ++i) {
    if (vx[i] < 0.0 || std::isnan(vx[i])) {
      throw Error(ErrorCode::kDomain, "sqrt: negative input " +
                                          std::to_string(vx[i]) +
                                          " at element " + std::to_string(i));
    }
  }
  Tensor out = Map(x, [](double v) { return std::sqrt(v); });
  return Record(out, {x}, [out](const Tensor& g) {
    return Grads{Div(g, Scale(out, 2.0))};
  });
}

Tensor Sum(const Tensor& x) {
  RequireDefined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::Scalar(total);
  return Record(out, {x}, [x](const Tensor& g) {
    return Grads{BroadcastTo(g, x.shape())};
  });
}

Tensor Mean(const Tensor& x) {
  RequireDefined(x, "mean");
  if (x.numel() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "mean of an empty tensor");
  }
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor Dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) ShapeError("dot", a.shape(), b.shape());
  return Sum(Mul(a, b));
}

Tensor SumTo(const Tensor& x, const Shape& shape) {
  RequireDefined(x, "sum_to");
  if (x.shape() == shape) return x;
  Shape joined;
  try {
    joined = BroadcastShapes(shape, x.shape());
  } catch (const Error&) {
    ShapeError("sum_to", x.shape(), shape);
  }
  if (joined != x.shape()) ShapeError("sum_to", x.shape(), shape);
  std::vector<double> out(NumElements(shape), 0.0);
  auto vx = x.values();
  const std::vector<std::size_t> zero(x.dim(), 0);
  WalkBroadcast(x.shape(), BroadcastStrides(shape, x.shape()), zero,
                [&](std::size_t k, std::size_t pt, std::size_t) {
                  out[pt] += vx[k];
                });
  Tensor result(shape, std::move(out));
  return Record(result, {x}, [x](const Tensor& g) {
    return Grads{BroadcastTo(g, x.shape())};
  });
}

Tensor BroadcastTo(const Tensor& x, const Shape& shape) {
  RequireDefined(x, "broadcast_to");
  if (x.shape() == shape) return x;
  Shape joined;
  try {
    joined = BroadcastShapes(x.shape(), shape);
  } catch (const Error&) {
    ShapeError("broadcast_to", x.shape(), shape);
  }
  if (joined != shape) ShapeError("broadcast_to", x.shape(), shape);
  std::vector<double> out(NumElements(shape));
  auto vx = x.values();
  const std::vector<std::size_t> zero(shape.size(), 0);
  WalkBroadcast(shape, BroadcastStrides(x.shape(), shape), zero,
                [&](std::size_t k, std::size_t ps, std::size_t) {
                  out[k] = vx[ps];
                });
  Tensor result(shape, std::move(out));
  return Record(result, {x}, [x](const Tensor& g) {
    return Grads{SumTo(g, x.shape())};
  });
}

Tensor Reshape(const Tensor& x, const Shape& shape) {
  RequireDefined(x, "reshape");
  if (NumElements(shape) != x.numel()) ShapeError("reshape", x.shape(), shape);
  Tensor out(shape, std::vector<double>(x.values().begin(), x.values().end()));
  return Record(out, {x}, [x](const Tensor& g) {
    return Grads{Reshape(g, x.shape())};
  });
}

Tensor SoftmaxRows(const Tensor& logits) {
  RequireDefined(logits, "softmax");
  if (logits.dim() != 2 || logits.shape()[1] == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "softmax: expected non-empty 2-D tensor, got " +
                    ShapeToString(logits.shape()));
  }
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  auto v = logits.values();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * k;
    double* dst = out.data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (std::size_t j = 0; j < k; ++j) dst[j] /= total;
  }
  Tensor result(logits.shape(), std::move(out));
  return Record(result, {logits}, [result, n](const Tensor& g) {
    Tensor weighted = SumTo(Mul(g, result), Shape{n, 1});
    return Grads{Mul(result, Sub(g, weighted))};
  });
}

Tensor Conv2d(const Tensor& input, const Tensor& kernel) {
  RequireDefined(input, "conv2d");
  RequireDefined(kernel, "conv2d");
  Require4d(input, "conv2d", "input");
  Require4d(kernel, "conv2d", "kernel");
  const auto& xs = input.shape();
  const auto& ks = kernel.shape();
  if (xs[1] != ks[1] || ks[2] > xs[2] || ks[3] > xs[3] || ks[2] == 0 ||
      ks[3] == 0) {
    ShapeError("conv2d", xs, ks);
  }
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t o = ks[0], kh = ks[2], kw = ks[3];
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  std::vector<double> out(n * o * oh * ow, 0.0);
  auto vx = input.values();
  auto vk = kernel.values();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      double* plane = out.data() + (b * o + oc) * oh * ow;
      for (std::size_t ic = 0; ic < c; ++ic) {
        const double* src = vx.data() + (b * c + ic) * h * w;
        const double* kern = vk.data() + (oc * c + ic) * kh * kw;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t e = 0; e < kw; ++e) {
            const double wv = kern[a * kw + e];
            for (std::size_t i = 0; i < oh; ++i) {
              const double* xrow = src + (i + a) * w + e;
              double* yrow = plane + i * ow;
              for (std::size_t j = 0; j < ow; ++j) yrow[j] += wv * xrow[j];
            }
          }
        }
      }
    }
  }
  Tensor result(Shape{n, o, oh, ow}, std::move(out));
  return Record(result, {input, kernel}, [input, kernel, h, w, kh, kw](const Tensor& g) {
    return Grads{Conv2dInputGrad(g, kernel, h, w),
                 Conv2dWeightGrad(input, g, kh, kw)};
  });
}

Tensor Conv2dInputGrad(const Tensor& grad_out, const Tensor& kernel,
                       std::size_t height, std::size_t width) {
  RequireDefined(grad_out, "conv2d_input_grad");
  RequireDefined(kernel, "conv2d_input_grad");
  Require4d(grad_out, "conv2d_input_grad", "grad");
  Require4d(kernel, "conv2d_input_grad", "kernel");
  const auto& gs = grad_out.shape();
  const auto& ks = kernel.shape();
  const std::size_t n = gs[0], o = gs[1], oh = gs[2], ow = gs[3];
  const std::size_t c = ks[1], kh = ks[2], kw = ks[3];
  if (ks[0] != o || kh > height || kw > width || oh != height - kh + 1 ||
      ow != width - kw + 1) {
    ShapeError("conv2d_input_grad", gs, ks);
  }
  const std::size_t h = height, w = width;
  std::vector<double> out(n * c * h * w, 0.0);
  auto vg = grad_out.values();
  auto vk = kernel.values();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      const double* gplane = vg.data() + (b * o + oc) * oh * ow;
      for (std::size_t ic = 0; ic < c; ++ic) {
        double* dst = out.data() + (b * c + ic) * h * w;
        const double* kern = vk.data() + (oc * c + ic) * kh * kw;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t e = 0; e < kw; ++e) {
            const double wv = kern[a * kw + e];
            for (std::size_t i = 0; i < oh; ++i) {
              double* xrow = dst + (i + a) * w + e;
              const double* grow = gplane + i * ow;
              for (std::size_t j = 0; j < ow; ++j) xrow[j] += wv * grow[j];
            }
          }
        }
      }
    }
  }
  Tensor result(Shape{n, c, h, w}, std::move(out));
  return Record(result, {grad_out, kernel},
                [grad_out, kernel, kh, kw](const Tensor& g) {
                  return Grads{Conv2d(g, kernel),
                               Conv2dWeightGrad(g, grad_out, kh, kw)};
                });
}

Tensor Conv2dWeightGrad(const Tensor& input, const Tensor& grad_out,
                        std::size_t kernel_h, std::size_t kernel_w) {
  RequireDefined(input, "conv2d_weight_grad");
  RequireDefined(grad_out, "conv2d_weight_grad");
  Require4d(input, "conv2d_weight_grad", "input");
  Require4d(grad_out, "conv2d_weight_grad", "grad");
  const auto& xs = input.shape();
  const auto& gs = grad_out.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t o = gs[1], oh = gs[2], ow = gs[3];
  const std::size_t kh = kernel_h, kw = kernel_w;
  if (gs[0] != n || kh > h || kw > w || oh != h - kh + 1 || ow != w - kw + 1) {
    ShapeError("conv2d_weight_grad", xs, gs);
  }
  std::vector<double> out(o * c * kh * kw, 0.0);
  auto vx = input.values();
  auto vg = grad_out.values();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oc = 0; oc < o; ++oc) {
      const double* gplane = vg.data() + (b * o + oc) * oh * ow;
      for (std::size_t ic = 0; ic < c; ++ic) {
        const double* src = vx.data() + (b * c + ic) * h * w;
        double* kern = out.data() + (oc * c + ic) * kh * kw;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t e = 0; e < kw; ++e) {
            double acc = 0.0;
            for (std::size_t i = 0; i < oh; ++i) {
              const double* xrow = src + (i + a) * w + e;
              const double* grow = gplane + i * ow;
              for (std::size_t j = 0; j < ow; ++j) acc += xrow[j] * grow[j];
            }
            kern[a * kw + e] += acc;
          }
        }
      }
    }
  }
  Tensor result(Shape{o, c, kh, kw}, std::move(out));
  return Record(result, {input, grad_out}, [input, grad_out, h, w](const Tensor& g) {
    return Grads{Conv2dInputGrad(grad_out, g, h, w), Conv2d(input, g)};
  });
}

Tensor MaxPool2d(const Tensor& input, std::size_t size) {
  RequireDefined(input, "max_pool2d");
  Require4d(input, "max_pool2d", "input");
  if (size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_pool2d: window size is 0");
  }
  const auto& xs = input.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  const std::size_t oh = h / size, ow = w / size;
  if (oh == 0 || ow == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "max_pool2d: window larger than input " + ShapeToString(xs));
  }
  auto vx = input.values();
  std::vector<std::size_t> index;
  index.reserve(n * c * oh * ow);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = base + (i * size) * w + j * size;
        for (std::size_t a = 0; a < size; ++a) {
          for (std::size_t e = 0; e < size; ++e) {
            const std::size_t at = base + (i * size + a) * w + j * size + e;
            if (vx[at] > vx[best]) best = at;
          }
        }
        index.push_back(best);
      }
    }
  }
  return Gather(input, std::move(index), Shape{n, c, oh, ow});
}

Tensor Gather(const Tensor& x, std::vector<std::size_t> index, Shape shape) {
  RequireDefined(x, "gather");
  if (index.size() != NumElements(shape)) {
    throw Error(ErrorCode::kShapeMismatch,
                "gather: index count does not match shape " +
                    ShapeToString(shape));
  }
  auto vx = x.values();
  std::vector<double> out(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= vx.size()) {
      throw Error(ErrorCode::kInvalidArgument, "gather: index out of range");
    }
    out[k] = vx[index[k]];
  }
  Tensor result(std::move(shape), std::move(out));
  return Record(result, {x}, [x, index = std::move(index)](const Tensor& g) {
    return Grads{ScatterAdd(g, index, x.shape())};
  });
}

Tensor ScatterAdd(const Tensor& x, std::vector<std::size_t> index,
                  Shape shape) {
  RequireDefined(x, "scatter_add");
  if (index.size() != x.numel()) {
    throw Error(ErrorCode::kShapeMismatch,
                "scatter_add: index count does not match input " +
                    ShapeToString(x.shape()));
  }
  auto vx = x.values();
  std::vector<double> out(NumElements(shape), 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= out.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "scatter_add: index out of range");
    }
    out[index[k]] += vx[k];
  }
  Tensor result(std::move(shape), std::move(out));
  return Record(result, {x}, [x, index = std::move(index)](const Tensor& g) {
    return Grads{Gather(g, index, x.shape())};
  });
}

}  // namespace ubw
