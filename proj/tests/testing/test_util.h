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

// Shared helpers for unit and acceptance tests.

#ifndef UBW_TESTS_TESTING_TEST_UTIL_H_
#define UBW_TESTS_TESTING_TEST_UTIL_H_

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <cstdlib>
#include <functional>
#include <span>
#include <random>
#include <string>
#include <vector>

#include "ubw/tensor.h"

namespace ubw::testing {

inline Tensor RandomTensor(Shape shape, std::mt19937_64& gen, double lo = -1.0,
                           double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = dist(gen);
  return t;
}

// Values with |v| in [margin, 1], random sign. Keeps kinks out of reach of
// the finite-difference stencil.
inline Tensor AwayFromZero(Shape shape, std::mt19937_64& gen, double margin = 0.05) {
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = sign(gen) ? mag(gen) : -mag(gen);
  return t;
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> NumericGradient(const std::function<double(const Tensor&)>& f,
                                           const Tensor& x, double h = 1e-5) {
  std::vector<double> g(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor plus = x.Clone();
    Tensor minus = x.Clone();
    plus.mutable_values()[i] += h;
    minus.mutable_values()[i] -= h;
    g[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||b||, floor); b is the reference.
inline double RelativeError(std::span<const double> a, std::span<const double> b,
                            double floor = 1e-6) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

inline std::vector<double> Dirichlet(std::size_t k, std::mt19937_64& gen,
                                     double concentration = 1.0) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (double& v : p) total += (v = gamma(gen));
  for (double& v : p) v /= total;
  return p;
}

class TempDir {
 public:
  TempDir() {
    std::string pattern =
        (std::filesystem::temp_directory_path() / "ubw-test-XXXXXX").string();
    path_ = ::mkdtemp(pattern.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ubw::testing

#endif  // UBW_TESTS_TESTING_TEST_UTIL_H_
