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

#ifndef UBW_DATA_H_
#define UBW_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ubw/rng.h"
#include "ubw/tensor.h"

namespace ubw {

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  Shape AsShape() const { return {channels, height, width}; }
  bool operator==(const ImageShape&) const = default;
};

// Where a dataset came from. `detail` holds the poisoning method, rate,
// trigger description and digest, and the poison plan for poisoned sets.
struct Provenance {
  std::string kind = "benign";  // benign | poisoned
  nlohmann::json detail = nlohmann::json::object();
  std::string config_digest;
};

// n images of shape C x H x W with pixels in [0,1] and labels in {1..K}.
// Immutable once constructed.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(ImageShape shape, std::size_t classes,
                 std::vector<double> pixels, std::vector<int> labels,
                 Provenance provenance = {});

  std::size_t size() const { return labels_.size(); }
  std::size_t classes() const { return classes_; }
  const ImageShape& image_shape() const { return shape_; }

  std::span<const double> image(std::size_t i) const;
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<double>& pixels() const { return pixels_; }
  const std::vector<int>& labels() const { return labels_; }
  const Provenance& provenance() const { return provenance_; }
  void set_provenance(Provenance provenance) {
    provenance_ = std::move(provenance);
  }

  // counts[k - 1] = number of samples labelled k.
  std::vector<std::size_t> ClassCounts() const;
  std::vector<std::size_t> IndicesOfClass(int label) const;

  // [indices.size(), C, H, W]
  Tensor Batch(std::span<const std::size_t> indices) const;
  std::vector<int> Labels(std::span<const std::size_t> indices) const;
  LabeledDataset Subset(std::span<const std::size_t> indices) const;

 private:
  ImageShape shape_;
  std::size_t classes_ = 0;
  std::vector<double> pixels_;
  std::vector<int> labels_;
  Provenance provenance_;
};

// Selected subset D_s of a dataset: sorted, unique indices.
struct SplitPlan {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  std::vector<std::size_t> indices;
};

// floor(gamma * n) indices drawn from the "selection" substream of `rng`.
// gamma must lie in the open interval (0, 1).
SplitPlan SelectSubset(std::size_t n, double gamma, const RngStream& rng);
SplitPlan SplitPlanFromIndices(std::size_t n, std::vector<std::size_t> indices);
std::size_t PoisonCount(std::size_t n, double gamma);

// IDX (MNIST) image/label pair. Labels are shifted from 0-based to 1-based.
// `classes` = 0 infers K from the largest label.
LabeledDataset LoadIdx(const std::filesystem::path& images,
                       const std::filesystem::path& labels,
                       std::size_t classes = 0);
// Pixels are quantized to round(255 * v); single-channel datasets only.
void WriteIdx(const LabeledDataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// Concatenation of CIFAR-10 binary batches (1 label byte + 3072 pixel bytes,
// R, G, B planes). K = 10, labels shifted to {1..10}.
LabeledDataset LoadCifarBinary(std::span<const std::filesystem::path> files);

struct SynthOptions {
  std::size_t classes = 10;
  std::size_t per_class = 100;
  ImageShape shape{1, 14, 14};
  double noise = 0.1;
  // Low-frequency noise: a 4x4 lattice of N(0, (noise * smooth)^2) values,
  // upsampled like the templates. Gives each sample a distinct shape.
  double smooth = 0.0;
  std::uint64_t seed = 1;
  // Selects the noise stream; class templates depend on `seed` only, so
  // "train" and "test" splits share templates.
  std::string split = "train";
};

// Smooth class templates plus clamped low-frequency and pixel noise. Sample i has
// label (i mod K) + 1.
LabeledDataset SynthPatterns(const SynthOptions& options);
// K templates, each of image size, concatenated.
std::vector<double> SynthTemplates(const SynthOptions& options);

void WriteDatasetFile(const std::filesystem::path& path,
                      const LabeledDataset& data);
LabeledDataset ReadDatasetFile(const std::filesystem::path& path);

}  // namespace ubw

#endif  // UBW_DATA_H_
