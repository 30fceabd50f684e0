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

#ifndef UBW_ERROR_H_
#define UBW_ERROR_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ubw {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kDomain,
  kTapeState,
  kTapeMode,
  kFormat,
  kIo,
  kDivergence,
  kDegenerateGradient,
  kInsufficientSamples,
  kProtocol,
  kUnsupportedArch,
  kConfig,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library. `offset` is set for file-format errors
// and points at the byte where parsing stopped.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> offset = std::nullopt);

  ErrorCode code() const { return code_; }
  std::optional<std::uint64_t> offset() const { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> offset_;
};

}  // namespace ubw

#endif  // UBW_ERROR_H_
