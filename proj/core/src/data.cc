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

#include "ubw/data.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "ubw/container.h"
#include "ubw/error.h"

namespace ubw {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarSide = 32;

std::uint32_t ReadBe32(std::span<const std::uint8_t> bytes, std::size_t at,
                       const std::filesystem::path& path) {
  if (bytes.size() < at + 4) {
    throw Error(ErrorCode::kFormat,
                "truncated IDX header in " + path.string(), bytes.size());
  }
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void PutBe32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void CheckPayload(std::span<const std::uint8_t> bytes, std::size_t header,
                  std::size_t expected, const std::filesystem::path& path) {
  const std::size_t have = bytes.size() - header;
  if (have < expected) {
    throw Error(ErrorCode::kFormat,
                "truncated IDX payload in " + path.string() + ": expected " +
                    std::to_string(expected) + " bytes, found " +
                    std::to_string(have),
                bytes.size());
  }
  if (have > expected) {
    throw Error(ErrorCode::kFormat,
                "trailing bytes after IDX payload in " + path.string(),
                header + expected);
  }
}

LabeledDataset FromBytes(ImageShape shape, std::size_t classes,
                         std::span<const std::uint8_t> pixels,
                         std::vector<int> labels) {
  std::vector<double> values(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) values[i] = pixels[i] / 255.0;
  return LabeledDataset(shape, classes, std::move(values), std::move(labels));
}

}  // namespace

LabeledDataset::LabeledDataset(ImageShape shape, std::size_t classes,
                               std::vector<double> pixels,
                               std::vector<int> labels, Provenance provenance)
    : shape_(shape),
      classes_(classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      provenance_(std::move(provenance)) {
  if (labels_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset must not be empty");
  }
  if (shape_.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "image shape has zero extent");
  }
  if (classes_ < 2) {
    throw Error(ErrorCode::kInvalidArgument, "dataset needs at least 2 classes");
  }
  if (pixels_.size() != labels_.size() * shape_.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "pixel buffer holds " + std::to_string(pixels_.size()) +
                    " values; expected " + std::to_string(labels_.size()) +
                    " images of " + ShapeToString(shape_.AsShape()));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 1 || labels_[i] > static_cast<int>(classes_)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label " + std::to_string(labels_[i]) + " of sample " +
                      std::to_string(i) + " outside {1.." +
                      std::to_string(classes_) + "}");
    }
  }
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    if (!(pixels_[i] >= 0.0 && pixels_[i] <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pixel " + std::to_string(i) + " outside [0,1]: " +
                      std::to_string(pixels_[i]));
    }
  }
}

std::span<const double> LabeledDataset::image(std::size_t i) const {
  if (i >= size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sample index " + std::to_string(i) + " out of range");
  }
  return std::span<const double>(pixels_).subspan(i * shape_.size(),
                                                  shape_.size());
}

std::vector<std::size_t> LabeledDataset::ClassCounts() const {
  std::vector<std::size_t> counts(classes_, 0);
  for (int y : labels_) ++counts[y - 1];
  return counts;
}

std::vector<std::size_t> LabeledDataset::IndicesOfClass(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) out.push_back(i);
  }
  return out;
}

Tensor LabeledDataset::Batch(std::span<const std::size_t> indices) const {
  const std::size_t stride = shape_.size();
  std::vector<double> values(indices.size() * stride);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto src = image(indices[k]);
    std::copy(src.begin(), src.end(), values.begin() + k * stride);
  }
  return Tensor(Shape{indices.size(), shape_.channels, shape_.height,
                      shape_.width},
                std::move(values));
}

std::vector<int> LabeledDataset::Labels(
    std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(label(i));
  return out;
}

LabeledDataset LabeledDataset::Subset(
    std::span<const std::size_t> indices) const {
  std::vector<double> values;
  values.reserve(indices.size() * shape_.size());
  for (std::size_t i : indices) {
    auto src = image(i);
    values.insert(values.end(), src.begin(), src.end());
  }
  return LabeledDataset(shape_, classes_, std::move(values), Labels(indices),
                        provenance_);
}

std::size_t PoisonCount(std::size_t n, double gamma) {
  // The epsilon absorbs representation error such as 0.29 * 100.
  return static_cast<std::size_t>(
      std::floor(gamma * static_cast<double>(n) + 1e-9));
}

SplitPlan SelectSubset(std::size_t n, double gamma, const RngStream& rng) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "poisoning rate must lie in (0,1), got " + std::to_string(gamma));
  }
  RngStream stream = rng.Substream("selection");
  SplitPlan plan;
  plan.seed = rng.seed();
  plan.gamma = gamma;
  plan.indices = stream.SampleWithoutReplacement(n, PoisonCount(n, gamma));
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

SplitPlan SplitPlanFromIndices(std::size_t n, std::vector<std::size_t> indices) {
  std::set<std::size_t> seen;
  for (std::size_t i : indices) {
    if (i >= n) {
      throw Error(ErrorCode::kInvalidArgument,
                  "subset index " + std::to_string(i) + " out of range for n=" +
                      std::to_string(n));
    }
    if (!seen.insert(i).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate subset index " + std::to_string(i));
    }
  }
  SplitPlan plan;
  plan.indices.assign(seen.begin(), seen.end());
  plan.gamma = n ? static_cast<double>(plan.indices.size()) / n : 0.0;
  return plan;
}

LabeledDataset LoadIdx(const std::filesystem::path& images,
                       const std::filesystem::path& labels,
                       std::size_t classes) {
  const auto image_bytes = ReadFileBytes(images);
  const auto label_bytes = ReadFileBytes(labels);
  if (ReadBe32(image_bytes, 0, images) != kIdxImageMagic) {
    throw Error(ErrorCode::kFormat, "bad IDX image magic in " + images.string(),
                0);
  }
  if (ReadBe32(label_bytes, 0, labels) != kIdxLabelMagic) {
    throw Error(ErrorCode::kFormat, "bad IDX label magic in " + labels.string(),
                0);
  }
  const std::size_t n = ReadBe32(image_bytes, 4, images);
  const std::size_t rows = ReadBe32(image_bytes, 8, images);
  const std::size_t cols = ReadBe32(image_bytes, 12, images);
  const std::size_t label_count = ReadBe32(label_bytes, 4, labels);
  if (n != label_count) {
    throw Error(ErrorCode::kFormat,
                "IDX count mismatch: " + std::to_string(n) + " images, " +
                    std::to_string(label_count) + " labels",
                4);
  }
  if (n == 0) throw Error(ErrorCode::kFormat, "IDX files hold no samples", 4);
  CheckPayload(image_bytes, 16, n * rows * cols, images);
  CheckPayload(label_bytes, 8, n, labels);
  std::vector<int> ys(n);
  int largest = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = label_bytes[8 + i] + 1;
    largest = std::max(largest, ys[i]);
  }
  if (classes == 0) classes = std::max(2, largest);
  return FromBytes(ImageShape{1, rows, cols}, classes,
                   std::span<const std::uint8_t>(image_bytes).subspan(16),
                   std::move(ys));
}

void WriteIdx(const LabeledDataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  const ImageShape& shape = data.image_shape();
  if (shape.channels != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "IDX export supports single-channel images only");
  }
  std::vector<std::uint8_t> img;
  PutBe32(img, kIdxImageMagic);
  PutBe32(img, static_cast<std::uint32_t>(data.size()));
  PutBe32(img, static_cast<std::uint32_t>(shape.height));
  PutBe32(img, static_cast<std::uint32_t>(shape.width));
  for (double v : data.pixels()) {
    img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  std::vector<std::uint8_t> lab;
  PutBe32(lab, kIdxLabelMagic);
  PutBe32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels()) {
    if (y - 1 > 255) {
      throw Error(ErrorCode::kInvalidArgument, "IDX labels must fit in a byte");
    }
    lab.push_back(static_cast<std::uint8_t>(y - 1));
  }
  WriteFileBytes(images, img);
  WriteFileBytes(labels, lab);
}

LabeledDataset LoadCifarBinary(std::span<const std::filesystem::path> files) {
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& path : files) {
    const auto bytes = ReadFileBytes(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw Error(ErrorCode::kFormat,
                  "CIFAR batch " + path.string() + " has " +
                      std::to_string(bytes.size()) +
                      " bytes, not a positive multiple of 3073",
                  bytes.size() - bytes.size() % kCifarRecord);
    }
    for (std::size_t at = 0; at < bytes.size(); at += kCifarRecord) {
      if (bytes[at] > 9) {
        throw Error(ErrorCode::kFormat,
                    "CIFAR label byte " + std::to_string(bytes[at]) +
                        " out of range",
                    at);
      }
      labels.push_back(bytes[at] + 1);
      for (std::size_t k = 1; k < kCifarRecord; ++k) {
        pixels.push_back(bytes[at + k] / 255.0);
      }
    }
  }
  if (labels.empty()) {
    throw Error(ErrorCode::kFormat, "no CIFAR records supplied");
  }
  return LabeledDataset(ImageShape{3, kCifarSide, kCifarSide}, 10,
                        std::move(pixels), std::move(labels));
}

namespace {

constexpr std::size_t kGrid = 4;

// Bilinear upsampling of a kGrid x kGrid lattice onto an h x w image.
void UpsampleGrid(std::span<const double> grid, std::size_t h, std::size_t w,
                  std::vector<double>& out) {
  for (std::size_t i = 0; i < h; ++i) {
    const double fy =
        h > 1 ? static_cast<double>(i) * (kGrid - 1) / static_cast<double>(h - 1) : 0.0;
    const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), kGrid - 2);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t j = 0; j < w; ++j) {
      const double fx =
          w > 1 ? static_cast<double>(j) * (kGrid - 1) / static_cast<double>(w - 1) : 0.0;
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), kGrid - 2);
      const double tx = fx - static_cast<double>(x0);
      const double top = grid[y0 * kGrid + x0] * (1 - tx) + grid[y0 * kGrid + x0 + 1] * tx;
      const double bottom =
          grid[(y0 + 1) * kGrid + x0] * (1 - tx) + grid[(y0 + 1) * kGrid + x0 + 1] * tx;
      out.push_back(top * (1 - ty) + bottom * ty);
    }
  }
}

}  // namespace

std::vector<double> SynthTemplates(const SynthOptions& options) {
  if (options.classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic data needs K >= 2");
  }
  const ImageShape& s = options.shape;
  if (s.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic image size is zero");
  }
  RngStream rng = RngStream(options.seed).Substream("synth-templates");
  std::vector<double> out;
  out.reserve(options.classes * s.size());
  std::vector<double> grid(kGrid * kGrid);
  for (std::size_t k = 0; k < options.classes; ++k) {
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (double& g : grid) g = 0.1 + 0.8 * rng.Uniform();
      UpsampleGrid(grid, s.height, s.width, out);
    }
  }
  return out;
}

LabeledDataset SynthPatterns(const SynthOptions& options) {
  if (options.per_class == 0) {
    throw Error(ErrorCode::kInvalidArgument, "per_class must be positive");
  }
  if (options.noise < 0.0 || options.smooth < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise scales must be non-negative");
  }
  const std::vector<double> templates = SynthTemplates(options);
  const ImageShape& s = options.shape;
  const std::size_t stride = s.size();
  const std::size_t n = options.classes * options.per_class;
  RngStream rng =
      RngStream(options.seed).Substream("synth-noise-" + options.split);
  std::vector<double> pixels;
  pixels.reserve(n * stride);
  std::vector<int> labels;
  labels.reserve(n);
  std::vector<double> grid(kGrid * kGrid);
  std::vector<double> field;
  field.reserve(stride);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % options.classes;
    labels.push_back(static_cast<int>(k) + 1);
    field.clear();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (double& g : grid) g = rng.Normal(0.0, options.noise * options.smooth);
      UpsampleGrid(grid, s.height, s.width, field);
    }
    for (std::size_t p = 0; p < stride; ++p) {
      const double v =
          templates[k * stride + p] + field[p] + rng.Normal(0.0, options.noise);
      pixels.push_back(std::clamp(v, 0.0, 1.0));
    }
  }
  return LabeledDataset(options.shape, options.classes, std::move(pixels),
                        std::move(labels));
}

void WriteDatasetFile(const std::filesystem::path& path,
                      const LabeledDataset& data) {
  Container c;
  c.kind = ContainerKind::kDataset;
  const ImageShape& s = data.image_shape();
  c.header = {
      {"format", "ubw-dataset"},
      {"n", data.size()},
      {"classes", data.classes()},
      {"channels", s.channels},
      {"height", s.height},
      {"width", s.width},
      {"labels", data.labels()},
      {"provenance",
       {{"kind", data.provenance().kind}, {"detail", data.provenance().detail}}},
      {"config_digest", data.provenance().config_digest},
  };
  c.payload = data.pixels();
  WriteContainer(path, c);
}

LabeledDataset ReadDatasetFile(const std::filesystem::path& path) {
  Container c = ReadContainer(path);
  if (c.kind != ContainerKind::kDataset) {
    throw Error(ErrorCode::kFormat, path.string() + " is not a dataset file");
  }
  try {
    const auto& h = c.header;
    ImageShape shape{h.at("channels").get<std::size_t>(),
                     h.at("height").get<std::size_t>(),
                     h.at("width").get<std::size_t>()};
    Provenance prov;
    prov.kind = h.at("provenance").at("kind").get<std::string>();
    prov.detail = h.at("provenance").at("detail");
    prov.config_digest = h.value("config_digest", "");
    auto labels = h.at("labels").get<std::vector<int>>();
    if (labels.size() != h.at("n").get<std::size_t>()) {
      throw Error(ErrorCode::kFormat, "label count disagrees with n");
    }
    return LabeledDataset(shape, h.at("classes").get<std::size_t>(),
                          std::move(c.payload), std::move(labels),
                          std::move(prov));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                "malformed dataset header in " + path.string() + ": " + e.what());
  }
}

}  // namespace ubw
