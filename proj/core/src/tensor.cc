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

#include "ubw/tensor.h"

#include <atomic>
#include <cmath>
#include <sstream>
#include <utility>

#include "ubw/error.h"
#include "ubw/ops.h"

namespace ubw {
namespace {

thread_local Tape* current_tape = nullptr;
thread_local bool recording_enabled = true;
std::atomic<std::uint64_t> next_tape_id{1};

// Makes `tape` current with recording on for the duration of a
// create_graph backward pass.
class RecordingScope {
 public:
  RecordingScope(Tape* tape, bool enable)
      : saved_tape_(current_tape), saved_recording_(recording_enabled) {
    current_tape = tape;
    recording_enabled = enable;
  }
  ~RecordingScope() {
    current_tape = saved_tape_;
    recording_enabled = saved_recording_;
  }

 private:
  Tape* saved_tape_;
  bool saved_recording_;
};

}  // namespace

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(NumElements(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<Impl>()) {
  if (values.size() != NumElements(shape)) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor of shape " + ShapeToString(shape) + " given " +
                    std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.impl_->data) v = value;
  return t;
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return impl_ ? impl_->shape : kEmpty;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return impl_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) return {};
  if (impl_->tape_id != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "only leaf tensors may be mutated in place");
  }
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "item() needs a one-element tensor, got shape " +
                    ShapeToString(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw Error(ErrorCode::kInvalidArgument, "undefined tensor");
  if (impl_->tape_id != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "requires_grad can only be set on leaf tensors");
  }
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && impl_->tape_id == 0; }

Tensor Tensor::grad() const {
  if (!impl_ || !impl_->grad) return Tensor();
  return Tensor(impl_->grad);
}

void Tensor::ZeroGrad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::Detach() const {
  if (!impl_) return Tensor();
  return Tensor(impl_->shape, impl_->data);
}

Tensor Tensor::Clone() const {
  Tensor out = Detach();
  if (impl_ && impl_->tape_id == 0) out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tape::Tape(DiffMode mode)
    : mode_(mode), id_(next_tape_id.fetch_add(1)), previous_(current_tape) {
  current_tape = this;
}

Tape::~Tape() {
  if (current_tape == this) current_tape = previous_;
}

Tape* Tape::Current() { return current_tape; }

bool RecordingEnabled() { return recording_enabled; }

NoGradGuard::NoGradGuard() : previous_(recording_enabled) {
  recording_enabled = false;
}

NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

bool Tape::Participates(const Tensor& t) const {
  if (!t.impl_) return false;
  if (t.impl_->tape_id == id_) return true;
  return t.impl_->tape_id == 0 && t.impl_->requires_grad;
}

Tensor Record(Tensor out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  Tape* tape = current_tape;
  if (tape == nullptr || !recording_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || tape->Participates(in);
  if (!any) return out;
  out.impl_->tape_id = tape->id_;
  out.impl_->node = tape->nodes_.size();
  out.impl_->requires_grad = true;
  tape->nodes_.push_back(Tape::Node{std::move(inputs), std::move(fn)});
  return out;
}

Tape::Pass Tape::Run(const Tensor& loss, bool create_graph) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "backward needs a scalar loss, got shape " +
                    ShapeToString(loss.shape()));
  }
  if (create_graph && mode_ != DiffMode::kHigherOrder) {
    throw Error(ErrorCode::kTapeMode,
                "create_graph requires a tape constructed with "
                "DiffMode::kHigherOrder");
  }
  if (in_backward_) {
    throw Error(ErrorCode::kTapeState, "backward is not reentrant");
  }
  if (mode_ == DiffMode::kFirstOrder && consumed_) {
    throw Error(ErrorCode::kTapeState,
                "backward already ran on this first-order tape; call Reset() "
                "before recording a new graph");
  }
  consumed_ = true;

  Pass pass;
  if (loss.impl_->tape_id != id_) {
    if (loss.impl_->tape_id == 0 && loss.impl_->requires_grad) {
      pass.leaf_grads[loss.impl_.get()] = Tensor::Ones(loss.shape());
      pass.leaves.push_back(loss);
    }
    return pass;
  }

  struct Flag {
    bool& f;
    explicit Flag(bool& v) : f(v) { f = true; }
    ~Flag() { f = false; }
  } flag(in_backward_);

  RecordingScope scope(this, create_graph);
  const std::size_t top = loss.impl_->node;
  pass.node_grads.resize(top + 1);
  pass.node_grads[top] = Tensor::Ones(loss.shape());

  auto accumulate = [](Tensor& slot, const Tensor& g) {
    slot = slot.defined() ? Add(slot, g) : g;
  };

  for (std::size_t i = top + 1; i-- > 0;) {
    if (!pass.node_grads[i].defined()) continue;
    Tensor grad_out = pass.node_grads[i];
    // Only drop the slot when the graph is not needed again.
    if (!create_graph) pass.node_grads[i] = Tensor();
    else pass.node_grads[i] = grad_out;
    // deque references stay valid while backward appends new nodes.
    const Node& node = nodes_[i];
    std::vector<Tensor> grads = node.backward(grad_out);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      if (j >= grads.size() || !grads[j].defined()) continue;
      const Tensor& in = node.inputs[j];
      if (in.impl_->tape_id == id_) {
        accumulate(pass.node_grads[in.impl_->node], grads[j]);
      } else if (in.impl_->tape_id == 0 && in.impl_->requires_grad) {
        auto [it, inserted] = pass.leaf_grads.try_emplace(in.impl_.get());
        if (inserted) pass.leaves.push_back(in);
        accumulate(it->second, grads[j]);
      }
    }
  }
  return pass;
}

std::vector<Tensor> Tape::Gradients(const Tensor& loss,
                                    std::span<const Tensor> wrt,
                                    bool create_graph) {
  Pass pass = Run(loss, create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    Tensor g;
    if (w.impl_) {
      if (w.impl_->tape_id == id_ && w.impl_->node < pass.node_grads.size()) {
        g = pass.node_grads[w.impl_->node];
      } else if (w.impl_->tape_id == 0) {
        auto it = pass.leaf_grads.find(w.impl_.get());
        if (it != pass.leaf_grads.end()) g = it->second;
      }
    }
    out.push_back(g.defined() ? g : Tensor::Zeros(w.shape()));
  }
  return out;
}

void Tape::Backward(const Tensor& loss) {
  Pass pass = Run(loss, false);
  for (const Tensor& leaf : pass.leaves) {
    const Tensor& g = pass.leaf_grads.at(leaf.impl_.get());
    auto& slot = leaf.impl_->grad;
    if (!slot) {
      slot = std::make_shared<Tensor::Impl>();
      slot->shape = leaf.impl_->shape;
      slot->data.assign(g.values().begin(), g.values().end());
    } else {
      auto src = g.values();
      for (std::size_t k = 0; k < src.size(); ++k) slot->data[k] += src[k];
    }
  }
}

Tensor Tape::GradOfGrad(const Tensor& objective, const Tensor& wrt) {
  if (mode_ != DiffMode::kHigherOrder) {
    throw Error(ErrorCode::kTapeMode,
                "gradient of a gradient needs a tape constructed with "
                "DiffMode::kHigherOrder");
  }
  return Gradients(objective, std::span<const Tensor>(&wrt, 1))[0];
}

void Tape::Reset() {
  nodes_.clear();
  consumed_ = false;
  // Fresh id so tensors recorded before the reset read as constants.
  id_ = next_tape_id.fetch_add(1);
}

}  // namespace ubw
