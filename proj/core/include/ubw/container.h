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

#ifndef UBW_CONTAINER_H_
#define UBW_CONTAINER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ubw {

// On-disk layout shared by dataset files and checkpoints (all integers
// little-endian):
//
//   offset  size  field
//   0       8     magic "UBWCNTR\0"
//   8       4     format version (currently 1)
//   12      4     kind (1 = dataset, 2 = checkpoint)
//   16      8     header length L
//   24      L     header, UTF-8 JSON
//   24+L    8     payload count P
//   32+L    8*P   payload, IEEE-754 binary64
//   32+L+8P 32    SHA-256 of every preceding byte
enum class ContainerKind : std::uint32_t { kDataset = 1, kCheckpoint = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  ContainerKind kind = ContainerKind::kDataset;
  nlohmann::json header = nlohmann::json::object();
  std::vector<double> payload;
};

std::vector<std::uint8_t> EncodeContainer(const Container& container);
Container DecodeContainer(std::span<const std::uint8_t> bytes);

void WriteContainer(const std::filesystem::path& path,
                    const Container& container);
Container ReadContainer(const std::filesystem::path& path);

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);
std::string FileSha256(const std::filesystem::path& path);

}  // namespace ubw

#endif  // UBW_CONTAINER_H_
