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

#ifndef UBW_DISPERSIBILITY_H_
#define UBW_DISPERSIBILITY_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ubw {

// Ground-truth labels plus either hard predictions or full probability rows.
// Labels and predictions are 1-based. Tables built from probabilities also
// carry argmax predictions (lowest index wins ties).
class PredictionTable {
 public:
  static PredictionTable FromHard(std::size_t classes, std::vector<int> labels,
                                  std::vector<int> predicted);
  static PredictionTable FromProbabilities(
      std::size_t classes, std::vector<int> labels,
      std::vector<std::vector<double>> probabilities);

  std::size_t classes() const { return classes_; }
  std::size_t size() const { return labels_.size(); }
  bool has_probabilities() const { return !probabilities_.empty(); }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& predicted() const { return predicted_; }
  const std::vector<std::vector<double>>& probabilities() const {
    return probabilities_;
  }

 private:
  PredictionTable() = default;

  std::size_t classes_ = 0;
  std::vector<int> labels_;
  std::vector<int> predicted_;
  std::vector<std::vector<double>> probabilities_;
};

// -sum p ln p with 0 ln 0 = 0. Rejects negative entries and rows whose sum is
// off by more than 1e-6.
double Entropy(std::span<const double> p);

// D_p: sum_j (n_j / N) H(P^(j)), where P^(j) is the histogram of hard
// predictions among samples labelled j.
double PredictionDispersibility(const PredictionTable& table);

// D_s: mean entropy of the probability rows.
double SampleDispersibility(const PredictionTable& table);

// D_c: sum_j (n_j / N) H(mean probability row of class j).
double ClassDispersibility(const PredictionTable& table);

struct DispersibilityBound {
  double class_wise = 0.0;
  double sample_wise_over_n = 0.0;
  bool holds = false;
};

// Compares D_c against D_s / N. Requires N >= 2.
DispersibilityBound CheckDispersibilityBound(const PredictionTable& table);

// CSV rows of either "y,pred" or "y,p_1,...,p_K". A non-numeric first line is
// treated as a header. Probability rows within 1e-6 of unit sum are
// renormalized.
PredictionTable LoadPredictionCsv(const std::filesystem::path& path,
                                  std::size_t classes);

}  // namespace ubw

#endif  // UBW_DISPERSIBILITY_H_
