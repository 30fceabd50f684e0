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

#include "ubw/rng.h"

#include <numeric>

#include "ubw/error.h"

namespace ubw {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t Fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed)
    : seed_(seed), engine_(SplitMix64(seed)) {}

RngStream RngStream::Substream(std::string_view name) const {
  return RngStream(SplitMix64(seed_ ^ Fnv1a(name)));
}

double RngStream::Uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::Normal(double mean, double stddev) {
  if (stddev == 0.0) return mean;
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::size_t RngStream::UniformIndex(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "UniformIndex(0)");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::vector<std::size_t> RngStream::Permutation(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(out[i - 1], out[UniformIndex(i)]);
  }
  return out;
}

std::vector<std::size_t> RngStream::SampleWithoutReplacement(std::size_t n,
                                                             std::size_t k) {
  if (k > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot draw " + std::to_string(k) + " of " +
                    std::to_string(n) + " without replacement");
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + UniformIndex(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace ubw
