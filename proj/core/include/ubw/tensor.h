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

#ifndef UBW_TENSOR_H_
#define UBW_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ubw {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

class Tape;

// Dense row-major array of doubles. Copies share storage (handle semantics);
// use Clone() for an independent copy. Values are fixed after construction
// except through mutable_values() on leaves, which optimizers use for
// in-place parameter updates.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Scalar(double value);
  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Full(Shape shape, double value);
  static Tensor Ones(Shape shape) { return Full(std::move(shape), 1.0); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  // Leaf tensors with requires_grad set are the variables gradients are
  // taken with respect to.
  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  // Accumulated by Tape::Backward; undefined until the first backward.
  Tensor grad() const;
  void ZeroGrad();

  Tensor Detach() const;
  Tensor Clone() const;

  bool SameStorage(const Tensor& other) const { return impl_ == other.impl_; }

  struct Impl;

 private:
  friend class Tape;
  friend Tensor Record(Tensor out, std::vector<Tensor> inputs,
                       std::function<std::vector<Tensor>(const Tensor&)> fn);
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<Impl> grad;
  // Nonzero for tensors produced by a recorded op; identifies the tape.
  std::uint64_t tape_id = 0;
  std::size_t node = 0;
};

enum class DiffMode {
  kFirstOrder,
  // The backward pass records onto the tape so gradients can be
  // differentiated again.
  kHigherOrder,
};

// Wengert list of primitive ops. Constructing a Tape makes it the active tape
// of the current thread until it is destroyed; tapes nest LIFO. Ops record a
// node whenever one of their inputs is a requires_grad leaf or an output of
// the active tape.
class Tape {
 public:
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor&)>;

  explicit Tape(DiffMode mode = DiffMode::kFirstOrder);
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DiffMode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  // d(loss)/d(wrt[i]) for every requested tensor; zeros when loss does not
  // depend on it. With create_graph the returned gradients are themselves
  // recorded (requires kHigherOrder).
  std::vector<Tensor> Gradients(const Tensor& loss, std::span<const Tensor> wrt,
                                bool create_graph = false);

  // Accumulates d(loss)/d(leaf) into leaf.grad() for every requires_grad
  // leaf reachable from loss.
  void Backward(const Tensor& loss);

  // Second-order entry point: `objective` is a scalar built from gradients
  // obtained with create_graph. Fails on first-order tapes.
  Tensor GradOfGrad(const Tensor& objective, const Tensor& wrt);

  // Drops all recorded nodes; outputs recorded so far become constants.
  void Reset();

  static Tape* Current();
  bool Participates(const Tensor& t) const;

 private:
  friend Tensor Record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn);
  struct Node {
    std::vector<Tensor> inputs;
    BackwardFn backward;
  };
  struct Pass {
    std::vector<Tensor> node_grads;
    std::unordered_map<const Tensor::Impl*, Tensor> leaf_grads;
    std::vector<Tensor> leaves;
  };
  Pass Run(const Tensor& loss, bool create_graph);

  DiffMode mode_;
  std::uint64_t id_;
  Tape* previous_;
  bool consumed_ = false;
  bool in_backward_ = false;
  std::deque<Node> nodes_;
};

// Suspends recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool RecordingEnabled();

// Appends a node for `out` to the active tape when any input participates.
Tensor Record(Tensor out, std::vector<Tensor> inputs, Tape::BackwardFn fn);

}  // namespace ubw

#endif  // UBW_TENSOR_H_
