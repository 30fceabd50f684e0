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

#ifndef UBW_RNG_H_
#define UBW_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ubw {

// Seeded random stream. Named substreams are derived from (seed, name) only,
// so drawing from one never shifts another. Conventional names: "selection",
// "labels", "init", "shuffle", "triggers", "augment", "verify".
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream Substream(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  // [0, 1)
  double Uniform();
  double Normal(double mean, double stddev);
  // [0, n)
  std::size_t UniformIndex(std::size_t n);
  std::vector<std::size_t> Permutation(std::size_t n);
  // k distinct values from [0, n), in draw order.
  std::vector<std::size_t> SampleWithoutReplacement(std::size_t n,
                                                    std::size_t k);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ubw

#endif  // UBW_RNG_H_
