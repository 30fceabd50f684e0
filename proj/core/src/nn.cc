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

#include "ubw/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ubw/container.h"
#include "ubw/error.h"
#include "ubw/ops.h"
#include "ubw/rng.h"

namespace ubw {
namespace {

constexpr double kProbFloor = 1e-12;
constexpr std::size_t kEvalBatch = 256;

std::size_t PooledExtent(std::size_t extent) {
  // conv3x3 -> pool2 -> conv3x3 -> pool2
  if (extent < 10) return 0;
  return ((extent - 2) / 2 - 2) / 2;
}

std::string ArchName(ArchKind kind) {
  return kind == ArchKind::kMlp ? "mlp" : "small-cnn";
}

Tensor HeUniform(const Shape& shape, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = (2.0 * rng.Uniform() - 1.0) * bound;
  return Tensor(shape, std::move(v));
}

Tensor FlipHorizontal(const Tensor& batch, RngStream& rng) {
  const auto& s = batch.shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  std::vector<double> v(batch.values().begin(), batch.values().end());
  for (std::size_t b = 0; b < n; ++b) {
    if (rng.Uniform() >= 0.5) continue;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h; ++i) {
        double* row = v.data() + ((b * c + ch) * h + i) * w;
        std::reverse(row, row + w);
      }
    }
  }
  return Tensor(s, std::move(v));
}

Tensor OneHot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > static_cast<int>(classes)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label " + std::to_string(labels[i]) + " outside {1.." +
                      std::to_string(classes) + "}");
    }
    v[i * classes + static_cast<std::size_t>(labels[i] - 1)] = 1.0;
  }
  return Tensor(Shape{labels.size(), classes}, std::move(v));
}

}  // namespace

nlohmann::json ArchSpec::ToJson() const {
  nlohmann::json j = {
      {"kind", ArchName(kind)},
      {"input", {input.channels, input.height, input.width}},
      {"classes", classes},
  };
  if (kind == ArchKind::kMlp) {
    j["hidden"] = hidden;
    j["bias"] = bias;
  } else {
    j["conv_channels"] = {conv1, conv2};
    j["fc_hidden"] = fc_hidden;
  }
  return j;
}

ArchSpec ArchSpec::FromJson(const nlohmann::json& j) {
  ArchSpec a;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "mlp") {
    a.kind = ArchKind::kMlp;
  } else if (kind == "small-cnn") {
    a.kind = ArchKind::kSmallCnn;
  } else {
    throw Error(ErrorCode::kConfig, "unknown architecture '" + kind + "'");
  }
  if (j.contains("input")) {
    auto in = j.at("input").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw Error(ErrorCode::kConfig, "input must be [C,H,W]");
    a.input = ImageShape{in[0], in[1], in[2]};
  }
  a.classes = j.value("classes", a.classes);
  a.hidden = j.value("hidden", a.hidden);
  a.bias = j.value("bias", a.bias);
  if (j.contains("conv_channels")) {
    auto cc = j.at("conv_channels").get<std::vector<std::size_t>>();
    if (cc.size() != 2) {
      throw Error(ErrorCode::kConfig, "conv_channels must list two widths");
    }
    a.conv1 = cc[0];
    a.conv2 = cc[1];
  }
  a.fc_hidden = j.value("fc_hidden", a.fc_hidden);
  return a;
}

ModelState::ModelState(ArchSpec arch, std::uint64_t seed)
    : arch_(std::move(arch)), seed_(seed) {
  if (arch_.classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "model needs at least 2 classes");
  }
  if (arch_.input.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model input has zero extent");
  }
  RngStream rng = RngStream(seed).Substream("init");
  std::size_t offset = 0;
  std::size_t layer = 0;
  auto add = [&](std::string name, Shape shape, bool conv, Tensor value) {
    layout_.push_back(ParamSlot{std::move(name), shape, offset, layer, conv});
    offset += NumElements(shape);
    value.set_requires_grad(true);
    params_.push_back(std::move(value));
  };
  auto linear = [&](std::size_t in, std::size_t out, bool with_bias) {
    const std::string tag = "fc" + std::to_string(layer);
    add(tag + ".weight", {in, out}, false, HeUniform({in, out}, in, rng));
    if (with_bias) add(tag + ".bias", {out}, false, Tensor::Zeros({out}));
    ++layer;
  };
  if (arch_.kind == ArchKind::kMlp) {
    std::size_t width = arch_.input.size();
    for (std::size_t h : arch_.hidden) {
      if (h == 0) throw Error(ErrorCode::kInvalidArgument, "zero hidden width");
      linear(width, h, arch_.bias);
      width = h;
    }
    linear(width, arch_.classes, arch_.bias);
    return;
  }
  const std::size_t ph = PooledExtent(arch_.input.height);
  const std::size_t pw = PooledExtent(arch_.input.width);
  if (ph == 0 || pw == 0 || arch_.conv1 == 0 || arch_.conv2 == 0 ||
      arch_.fc_hidden == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "small-cnn needs images of at least 10x10 and nonzero widths");
  }
  const std::size_t c = arch_.input.channels;
  add("conv0.weight", {arch_.conv1, c, 3, 3}, true,
      HeUniform({arch_.conv1, c, 3, 3}, c * 9, rng));
  add("conv0.bias", {arch_.conv1}, true, Tensor::Zeros({arch_.conv1}));
  ++layer;
  add("conv1.weight", {arch_.conv2, arch_.conv1, 3, 3}, true,
      HeUniform({arch_.conv2, arch_.conv1, 3, 3}, arch_.conv1 * 9, rng));
  add("conv1.bias", {arch_.conv2}, true, Tensor::Zeros({arch_.conv2}));
  ++layer;
  linear(arch_.conv2 * ph * pw, arch_.fc_hidden, true);
  linear(arch_.fc_hidden, arch_.classes, true);
  channel_mask_.assign(arch_.conv2, 1.0);
}

ModelState::ModelState(const ModelState& other)
    : arch_(other.arch_),
      seed_(other.seed_),
      layout_(other.layout_),
      channel_mask_(other.channel_mask_) {
  params_.reserve(other.params_.size());
  for (const Tensor& p : other.params_) {
    Tensor copy = p.Detach();
    copy.set_requires_grad(true);
    params_.push_back(std::move(copy));
  }
}

ModelState& ModelState::operator=(const ModelState& other) {
  if (this != &other) {
    ModelState copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t ModelState::parameter_count() const {
  return layout_.empty() ? 0
                         : layout_.back().offset +
                               NumElements(layout_.back().shape);
}

std::size_t ModelState::layer_count() const {
  return layout_.empty() ? 0 : layout_.back().layer + 1;
}

std::vector<double> ModelState::FlatParameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const Tensor& p : params_) {
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return out;
}

void ModelState::SetFlatParameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorCode::kShapeMismatch,
                "parameter vector has " + std::to_string(values.size()) +
                    " entries; architecture needs " +
                    std::to_string(parameter_count()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].mutable_values();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(layout_[i].offset),
                dst.size(), dst.begin());
  }
}

void ModelState::set_channel_mask(std::vector<double> mask) {
  if (arch_.kind != ArchKind::kSmallCnn) {
    throw Error(ErrorCode::kUnsupportedArch,
                "channel masks need a convolutional architecture");
  }
  if (mask.size() != arch_.conv2) {
    throw Error(ErrorCode::kShapeMismatch,
                "channel mask has " + std::to_string(mask.size()) +
                    " entries; last convolution has " +
                    std::to_string(arch_.conv2) + " channels");
  }
  channel_mask_ = std::move(mask);
}

void ModelState::CheckBatch(const Tensor& batch) const {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != arch_.input.channels ||
      s[2] != arch_.input.height || s[3] != arch_.input.width || s[0] == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "model expects a batch of shape [N," +
                    std::to_string(arch_.input.channels) + "," +
                    std::to_string(arch_.input.height) + "," +
                    std::to_string(arch_.input.width) + "], got " +
                    ShapeToString(s));
  }
}

Tensor ModelState::ConvTrunk(const Tensor& batch, bool stop_at_last_conv) const {
  const Tensor& w0 = params_[0];
  const Tensor& b0 = params_[1];
  const Tensor& w1 = params_[2];
  const Tensor& b1 = params_[3];
  Tensor h = Conv2d(batch, w0) + Reshape(b0, {1, arch_.conv1, 1, 1});
  h = MaxPool2d(Relu(h), 2);
  h = Conv2d(h, w1) + Reshape(b1, {1, arch_.conv2, 1, 1});
  h = Mul(h, Tensor(Shape{1, arch_.conv2, 1, 1}, channel_mask_));
  if (stop_at_last_conv) return h;
  return MaxPool2d(Relu(h), 2);
}

Tensor ModelState::Logits(const Tensor& batch) const {
  CheckBatch(batch);
  const std::size_t n = batch.shape()[0];
  Tensor h;
  std::size_t next = 0;
  if (arch_.kind == ArchKind::kMlp) {
    h = Reshape(batch, {n, arch_.input.size()});
  } else {
    Tensor trunk = ConvTrunk(batch, false);
    h = Reshape(trunk, {n, trunk.numel() / n});
    next = 4;
  }
  const std::size_t layers = layer_count();
  for (std::size_t i = next; i < params_.size();) {
    const std::size_t layer = layout_[i].layer;
    h = MatMul(h, params_[i]);
    ++i;
    if (i < params_.size() && layout_[i].layer == layer) {
      h = h + params_[i];
      ++i;
    }
    if (layer + 1 < layers) h = Relu(h);
  }
  return h;
}

Tensor ModelState::Forward(const Tensor& batch) const {
  return SoftmaxRows(Logits(batch));
}

Tensor ModelState::LastConvOutput(const Tensor& batch) const {
  if (arch_.kind != ArchKind::kSmallCnn) {
    throw Error(ErrorCode::kUnsupportedArch,
                "last-convolution activations need a convolutional "
                "architecture");
  }
  CheckBatch(batch);
  return ConvTrunk(batch, true);
}

std::vector<double> ModelState::Predict(std::span<const double> image) const {
  if (image.size() != arch_.input.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "image has " + std::to_string(image.size()) +
                    " values; model expects " +
                    std::to_string(arch_.input.size()));
  }
  NoGradGuard no_grad;
  Tensor batch(Shape{1, arch_.input.channels, arch_.input.height,
                     arch_.input.width},
               std::vector<double>(image.begin(), image.end()));
  Tensor probs = Forward(batch);
  return std::vector<double>(probs.values().begin(), probs.values().end());
}

std::vector<std::size_t> ModelState::TrainableAfterFreezing(
    std::size_t frozen_layers) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].layer >= frozen_layers) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> ModelState::FullyConnectedParameters() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (!layout_[i].conv) out.push_back(i);
  }
  return out;
}

Tensor CrossEntropy(const Tensor& probs, std::span<const int> labels) {
  if (probs.dim() != 2 || probs.shape()[0] != labels.size() ||
      labels.empty()) {
    throw Error(ErrorCode::kShapeMismatch,
                "cross_entropy: probabilities " + ShapeToString(probs.shape()) +
                    " do not match " + std::to_string(labels.size()) +
                    " labels");
  }
  const std::size_t n = probs.shape()[0];
  Tensor picked = SumTo(Mul(probs, OneHot(labels, probs.shape()[1])), {n, 1});
  return Neg(Mean(Log(Clamp(picked, kProbFloor, 1.0))));
}

Tensor MeanEntropy(const Tensor& probs) {
  if (probs.dim() != 2 || probs.shape()[0] == 0) {
    throw Error(ErrorCode::kShapeMismatch,
                "entropy: expected [N,K] probabilities, got " +
                    ShapeToString(probs.shape()));
  }
  Tensor plogp = Mul(probs, Log(Clamp(probs, kProbFloor, 1.0)));
  return Scale(Sum(plogp), -1.0 / static_cast<double>(probs.shape()[0]));
}

std::vector<int> ArgmaxRows(const Tensor& probs) {
  const std::size_t n = probs.shape().at(0), k = probs.shape().at(1);
  std::vector<int> out(n);
  auto v = probs.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row) + 1;
  }
  return out;
}

void SgdConfig::Validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw Error(ErrorCode::kConfig, "learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kConfig, "momentum must lie in [0,1)");
  }
  if (weight_decay < 0.0) {
    throw Error(ErrorCode::kConfig, "weight decay must be non-negative");
  }
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch size must be >= 1");
  if (epochs < 0) throw Error(ErrorCode::kConfig, "epochs must be >= 0");
  if (!(decay > 0.0)) throw Error(ErrorCode::kConfig, "decay must be positive");
}

double SgdConfig::LearningRate(int epoch) const {
  double rate = lr;
  for (int m : milestones) {
    if (epoch >= m) rate *= decay;
  }
  return rate;
}

nlohmann::json SgdConfig::ToJson() const {
  return {{"lr", lr},
          {"milestones", milestones},
          {"decay", decay},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"augment_flip", augment_flip}};
}

SgdConfig SgdConfig::FromJson(const nlohmann::json& j, const SgdConfig& base) {
  SgdConfig c = base;
  c.lr = j.value("lr", c.lr);
  c.milestones = j.value("milestones", c.milestones);
  c.decay = j.value("decay", c.decay);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.augment_flip = j.value("augment_flip", c.augment_flip);
  return c;
}

TrainResult SgdTrain(const ModelState& init, const LabeledDataset& data,
                     const SgdConfig& cfg, const TrainHooks& hooks) {
  cfg.Validate();
  if (data.classes() != init.classes() ||
      data.image_shape() != init.arch().input) {
    throw Error(ErrorCode::kShapeMismatch,
                "dataset geometry or class count does not match the model");
  }
  TrainResult result{init, {}};
  ModelState& model = result.model;
  const auto& params = model.parameters();

  std::vector<std::size_t> trainable = hooks.trainable;
  if (trainable.empty()) {
    trainable.resize(params.size());
    std::iota(trainable.begin(), trainable.end(), std::size_t{0});
  }
  std::vector<bool> is_trainable(params.size(), false);
  for (std::size_t i : trainable) is_trainable.at(i) = true;
  std::vector<Tensor> wrt;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    p.set_requires_grad(is_trainable[i]);
    if (is_trainable[i]) wrt.push_back(p);
  }
  std::vector<std::vector<double>> velocity(wrt.size());
  for (std::size_t k = 0; k < wrt.size(); ++k) velocity[k].assign(wrt[k].numel(), 0.0);

  RngStream shuffle = RngStream(cfg.seed).Substream("shuffle");
  RngStream augment = RngStream(cfg.seed).Substream("augment");
  const std::size_t n = data.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.LearningRate(epoch);
    const auto order = shuffle.Permutation(n);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      Tensor x = data.Batch(idx);
      if (cfg.augment_flip) x = FlipHorizontal(x, augment);
      const std::vector<int> y = data.Labels(idx);

      Tape tape;
      Tensor loss;
      try {
        loss = CrossEntropy(model.Forward(x), y);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDomain) throw;
        throw Error(ErrorCode::kDivergence, "training diverged at epoch " +
                                                std::to_string(epoch) + ", batch " +
                                                std::to_string(batch_index) + ": " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::kDivergence,
                    "non-finite training loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch_index));
      }
      loss_sum += value * static_cast<double>(idx.size());
      auto grads = tape.Gradients(loss, wrt);
      for (std::size_t k = 0; k < wrt.size(); ++k) {
        auto w = wrt[k].mutable_values();
        auto g = grads[k].values();
        auto& v = velocity[k];
        for (std::size_t e = 0; e < w.size(); ++e) {
          const double step = g[e] + cfg.weight_decay * w[e];
          v[e] = cfg.momentum * v[e] + step;
          w[e] -= lr * v[e];
          if (!std::isfinite(w[e])) {
            throw Error(ErrorCode::kDivergence,
                        "non-finite weight after update at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
          }
        }
      }
    }
    EpochRecord record{epoch, lr, loss_sum / static_cast<double>(n), {}};
    if (hooks.evaluate) record.accuracy = hooks.evaluate(model, epoch);
    result.log.push_back(record);
  }
  for (const Tensor& p : params) {
    Tensor handle = p;
    handle.set_requires_grad(true);
  }
  return result;
}

std::vector<std::vector<double>> PredictAll(const ModelState& model,
                                            const LabeledDataset& data) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  const std::size_t k = model.classes();
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const std::size_t stop = std::min(data.size(), start + kEvalBatch);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor probs = model.Forward(data.Batch(idx));
    auto v = probs.values();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(i * k),
                       v.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    }
  }
  return out;
}

double Accuracy(const ModelState& model, const LabeledDataset& data) {
  const auto probs = PredictAll(model, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& row = probs[i];
    const int pred =
        static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
    correct += pred == data.label(i);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<double> PerSampleGradientNorms(const ModelState& model,
                                           const LabeledDataset& data) {
  std::vector<double> norms;
  norms.reserve(data.size());
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t one[] = {i};
    const int y[] = {data.label(i)};
    Tape tape;
    Tensor loss = CrossEntropy(model.Forward(data.Batch(one)), y);
    auto grads = tape.Gradients(loss, params);
    double total = 0.0;
    for (const Tensor& g : grads) {
      for (double v : g.values()) total += v * v;
    }
    norms.push_back(std::sqrt(total));
  }
  return norms;
}

void PgaConfig::Validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kConfig, "PGA epsilon must be > 0");
  if (steps < 1) throw Error(ErrorCode::kConfig, "PGA needs at least one step");
  if (!(step_size > 0.0)) {
    throw Error(ErrorCode::kConfig, "PGA step size must be > 0");
  }
  if (!(lower <= upper)) {
    throw Error(ErrorCode::kConfig, "PGA range lower bound exceeds upper");
  }
}

Tensor ProjectToFeasible(const Tensor& candidate, const Tensor& center,
                         const PgaConfig& cfg) {
  if (candidate.shape() != center.shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "projection: candidate " + ShapeToString(candidate.shape()) +
                    " vs center " + ShapeToString(center.shape()));
  }
  auto c = candidate.values();
  auto z = center.values();
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double lo = std::max(z[i] - cfg.epsilon, cfg.lower);
    const double hi = std::min(z[i] + cfg.epsilon, cfg.upper);
    out[i] = std::clamp(c[i], lo, std::max(lo, hi));
  }
  return Tensor(candidate.shape(), std::move(out));
}

Tensor PgaAscend(const ScalarObjective& objective, const Tensor& center,
                 const PgaConfig& cfg, DiffMode mode, const Tensor& initial,
                 std::vector<double>* trace) {
  cfg.Validate();
  Tensor current = ProjectToFeasible(initial.defined() ? initial : center,
                                     center, cfg);
  for (int step = 0; step < cfg.steps; ++step) {
    Tensor vars = current.Detach();
    vars.set_requires_grad(true);
    Tensor grad;
    {
      Tape tape(mode);
      Tensor value = objective(vars);
      if (trace) trace->push_back(value.item());
      grad = tape.Gradients(value, std::span<const Tensor>(&vars, 1))[0];
    }
    auto g = grad.values();
    auto x = vars.values();
    std::vector<double> next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw Error(ErrorCode::kDivergence,
                    "non-finite gradient in projected ascent at step " +
                        std::to_string(step) + ", element " + std::to_string(i));
      }
      const double dir = cfg.sign_steps ? (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0))
                                        : g[i];
      next[i] = x[i] + cfg.step_size * dir;
    }
    current = ProjectToFeasible(Tensor(vars.shape(), std::move(next)), center, cfg);
  }
  return current;
}

void WriteCheckpoint(const std::filesystem::path& path, const ModelState& model,
                     const nlohmann::json& meta) {
  Container c;
  c.kind = ContainerKind::kCheckpoint;
  nlohmann::json layout = nlohmann::json::array();
  for (const ParamSlot& slot : model.layout()) {
    layout.push_back({{"name", slot.name},
                      {"shape", slot.shape},
                      {"offset", slot.offset},
                      {"layer", slot.layer}});
  }
  c.header = {{"format", "ubw-checkpoint"},
              {"arch", model.arch().ToJson()},
              {"seed", model.seed()},
              {"layout", layout},
              {"channel_mask", model.channel_mask()},
              {"meta", meta}};
  c.payload = model.FlatParameters();
  WriteContainer(path, c);
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  Container c = ReadContainer(path);
  if (c.kind != ContainerKind::kCheckpoint) {
    throw Error(ErrorCode::kFormat, path.string() + " is not a checkpoint");
  }
  try {
    const auto& h = c.header;
    ModelState model(ArchSpec::FromJson(h.at("arch")),
                     h.at("seed").get<std::uint64_t>());
    if (h.at("layout").size() != model.layout().size()) {
      throw Error(ErrorCode::kFormat, "checkpoint layout disagrees with arch");
    }
    model.SetFlatParameters(c.payload);
    auto mask = h.at("channel_mask").get<std::vector<double>>();
    if (!mask.empty()) model.set_channel_mask(std::move(mask));
    return Checkpoint{std::move(model), h.at("meta")};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                "malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

}  // namespace ubw
