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

#include "ubw/dispersibility.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "ubw/error.h"

namespace ubw {
namespace {

constexpr double kRowTolerance = 1e-9;
constexpr double kEntropyTolerance = 1e-6;

void CheckLabels(std::size_t classes, std::span<const int> labels,
                 const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > static_cast<int>(classes)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(what) + " " + std::to_string(labels[i]) +
                      " at row " + std::to_string(i) + " outside {1.." +
                      std::to_string(classes) + "}");
    }
  }
}

std::vector<std::size_t> ClassSizes(const PredictionTable& table) {
  std::vector<std::size_t> n(table.classes(), 0);
  for (int y : table.labels()) ++n[static_cast<std::size_t>(y - 1)];
  return n;
}

void RequireProbabilities(const PredictionTable& table) {
  if (!table.has_probabilities()) {
    throw Error(ErrorCode::kInvalidArgument,
                "prediction table holds hard labels only");
  }
}

}  // namespace

PredictionTable PredictionTable::FromHard(std::size_t classes,
                                          std::vector<int> labels,
                                          std::vector<int> predicted) {
  if (classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least 2 classes");
  }
  if (labels.empty() || labels.size() != predicted.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(labels.size()) + " labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  CheckLabels(classes, labels, "label");
  CheckLabels(classes, predicted, "prediction");
  PredictionTable t;
  t.classes_ = classes;
  t.labels_ = std::move(labels);
  t.predicted_ = std::move(predicted);
  return t;
}

PredictionTable PredictionTable::FromProbabilities(
    std::size_t classes, std::vector<int> labels,
    std::vector<std::vector<double>> probabilities) {
  if (classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least 2 classes");
  }
  if (labels.empty() || labels.size() != probabilities.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(labels.size()) + " labels vs " +
                    std::to_string(probabilities.size()) + " probability rows");
  }
  CheckLabels(classes, labels, "label");
  std::vector<int> predicted(labels.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto& row = probabilities[i];
    if (row.size() != classes) {
      throw Error(ErrorCode::kShapeMismatch,
                  "row " + std::to_string(i) + " has " +
                      std::to_string(row.size()) + " entries; expected " +
                      std::to_string(classes));
    }
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw Error(ErrorCode::kDomain,
                    "row " + std::to_string(i) + " has a negative or "
                    "non-finite probability");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw Error(ErrorCode::kDomain, "row " + std::to_string(i) +
                                          " sums to " + std::to_string(sum));
    }
    predicted[i] =
        static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
  }
  PredictionTable t;
  t.classes_ = classes;
  t.labels_ = std::move(labels);
  t.predicted_ = std::move(predicted);
  t.probabilities_ = std::move(probabilities);
  return t;
}

double Entropy(std::span<const double> p) {
  if (p.empty()) throw Error(ErrorCode::kInvalidArgument, "empty distribution");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kDomain,
                  "distribution has a negative or non-finite component");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kEntropyTolerance) {
    throw Error(ErrorCode::kDomain,
                "distribution sums to " + std::to_string(sum) + ", not 1");
  }
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double PredictionDispersibility(const PredictionTable& table) {
  const std::size_t k = table.classes();
  std::vector<std::vector<double>> counts(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < table.size(); ++i) {
    counts[static_cast<std::size_t>(table.labels()[i] - 1)]
          [static_cast<std::size_t>(table.predicted()[i] - 1)] += 1.0;
  }
  const auto n = ClassSizes(table);
  const double total = static_cast<double>(table.size());
  double d = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (n[j] == 0) continue;
    for (double& c : counts[j]) c /= static_cast<double>(n[j]);
    d += static_cast<double>(n[j]) / total * Entropy(counts[j]);
  }
  return d;
}

double SampleDispersibility(const PredictionTable& table) {
  RequireProbabilities(table);
  double sum = 0.0;
  for (const auto& row : table.probabilities()) sum += Entropy(row);
  return sum / static_cast<double>(table.size());
}

double ClassDispersibility(const PredictionTable& table) {
  RequireProbabilities(table);
  const std::size_t k = table.classes();
  std::vector<std::vector<double>> mean(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto& acc = mean[static_cast<std::size_t>(table.labels()[i] - 1)];
    const auto& row = table.probabilities()[i];
    for (std::size_t c = 0; c < k; ++c) acc[c] += row[c];
  }
  const auto n = ClassSizes(table);
  const double total = static_cast<double>(table.size());
  double d = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (n[j] == 0) continue;
    for (double& v : mean[j]) v /= static_cast<double>(n[j]);
    d += static_cast<double>(n[j]) / total * Entropy(mean[j]);
  }
  return d;
}

DispersibilityBound CheckDispersibilityBound(const PredictionTable& table) {
  if (table.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "the class-wise bound needs at least two samples");
  }
  DispersibilityBound w;
  w.class_wise = ClassDispersibility(table);
  w.sample_wise_over_n =
      SampleDispersibility(table) / static_cast<double>(table.size());
  w.holds = w.class_wise > w.sample_wise_over_n;
  return w;
}

PredictionTable LoadPredictionCsv(const std::filesystem::path& path,
                                  std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<int> labels;
  std::vector<int> hard;
  std::vector<std::vector<double>> probs;
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cells.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (line_no == 1) continue;
      throw Error(ErrorCode::kFormat,
                  "non-numeric cell on line " + std::to_string(line_no),
                  line_offset);
    }
    if (cells.size() != 2 && cells.size() != classes + 1) {
      throw Error(ErrorCode::kFormat,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " columns; expected 2 or " +
                      std::to_string(classes + 1),
                  line_offset);
    }
    const bool is_prob = cells.size() == classes + 1;
    if ((is_prob && !hard.empty()) || (!is_prob && !probs.empty())) {
      throw Error(ErrorCode::kFormat,
                  "line " + std::to_string(line_no) + " mixes row kinds",
                  line_offset);
    }
    labels.push_back(static_cast<int>(cells[0]));
    if (is_prob) {
      std::vector<double> row(cells.begin() + 1, cells.end());
      const double sum = std::accumulate(row.begin(), row.end(), 0.0);
      if (std::abs(sum - 1.0) > kEntropyTolerance) {
        throw Error(ErrorCode::kDomain,
                    "line " + std::to_string(line_no) + " sums to " +
                        std::to_string(sum),
                    line_offset);
      }
      for (double& p : row) p /= sum;
      probs.push_back(std::move(row));
    } else {
      hard.push_back(static_cast<int>(cells[1]));
    }
  }
  if (labels.empty()) {
    throw Error(ErrorCode::kFormat, path.string() + " holds no prediction rows");
  }
  if (!probs.empty()) {
    return PredictionTable::FromProbabilities(classes, std::move(labels),
                                              std::move(probs));
  }
  return PredictionTable::FromHard(classes, std::move(labels), std::move(hard));
}

}  // namespace ubw
