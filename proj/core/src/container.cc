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

#include "ubw/container.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ubw/digest.h"
#include "ubw/error.h"

namespace ubw {
namespace {

constexpr char kMagic[8] = {'U', 'B', 'W', 'C', 'N', 'T', 'R', '\0'};
constexpr std::size_t kDigestBytes = 32;

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }

  void Need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kFormat,
                  std::string("truncated container while reading ") + what,
                  pos_);
    }
  }
  std::uint64_t U64(const char* what) {
    Need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t U32(const char* what) {
    Need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> Bytes(std::size_t n, const char* what) {
    Need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> EncodeContainer(const Container& container) {
  const std::string header = container.header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(64 + header.size() + 8 * container.payload.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  PutU32(out, kContainerVersion);
  PutU32(out, static_cast<std::uint32_t>(container.kind));
  PutU64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  PutU64(out, container.payload.size());
  for (double v : container.payload) PutU64(out, std::bit_cast<std::uint64_t>(v));
  const std::string digest = Sha256Hex(out);
  for (std::size_t i = 0; i < kDigestBytes; ++i) {
    out.push_back(static_cast<std::uint8_t>(
        std::stoi(digest.substr(2 * i, 2), nullptr, 16)));
  }
  return out;
}

Container DecodeContainer(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.Bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kFormat, "bad container magic", 0);
  }
  const std::uint32_t version = in.U32("version");
  if (version != kContainerVersion) {
    throw Error(ErrorCode::kFormat,
                "unsupported container version " + std::to_string(version), 8);
  }
  const std::uint32_t kind = in.U32("kind");
  if (kind != 1 && kind != 2) {
    throw Error(ErrorCode::kFormat,
                "unknown container kind " + std::to_string(kind), 12);
  }
  Container out;
  out.kind = static_cast<ContainerKind>(kind);
  const std::uint64_t header_len = in.U64("header length");
  const std::uint64_t header_at = in.offset();
  auto header = in.Bytes(header_len, "header");
  try {
    out.header = nlohmann::json::parse(header.begin(), header.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string("container header is not valid JSON: ") + e.what(),
                header_at);
  }
  const std::uint64_t count = in.U64("payload count");
  if (count > (bytes.size() - in.offset()) / 8) {
    throw Error(ErrorCode::kFormat, "payload count exceeds file size",
                in.offset() - 8);
  }
  auto payload = in.Bytes(count * 8, "payload");
  out.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t{payload[8 * i + b]} << (8 * b);
    out.payload[i] = std::bit_cast<double>(v);
  }
  const std::uint64_t body_end = in.offset();
  auto stored = in.Bytes(kDigestBytes, "digest");
  if (in.offset() != bytes.size()) {
    throw Error(ErrorCode::kFormat, "trailing bytes after container digest",
                in.offset());
  }
  const std::string expect = Sha256Hex(bytes.subspan(0, body_end));
  for (std::size_t i = 0; i < kDigestBytes; ++i) {
    if (stored[i] != std::stoi(expect.substr(2 * i, 2), nullptr, 16)) {
      throw Error(ErrorCode::kFormat, "container digest mismatch", body_end);
    }
  }
  return out;
}

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::filesystem::path& path,
                    std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  WriteFileBytes(path, std::span<const std::uint8_t>(
                           reinterpret_cast<const std::uint8_t*>(text.data()),
                           text.size()));
}

void WriteContainer(const std::filesystem::path& path,
                    const Container& container) {
  WriteFileBytes(path, EncodeContainer(container));
}

Container ReadContainer(const std::filesystem::path& path) {
  return DecodeContainer(ReadFileBytes(path));
}

std::string FileSha256(const std::filesystem::path& path) {
  return Sha256Hex(ReadFileBytes(path));
}

}  // namespace ubw
