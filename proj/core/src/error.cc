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

#include "ubw/error.h"

namespace ubw {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kTapeState: return "tape-state";
    case ErrorCode::kTapeMode: return "tape-mode";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kDegenerateGradient: return "degenerate-gradient";
    case ErrorCode::kInsufficientSamples: return "insufficient-samples";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kUnsupportedArch: return "unsupported-arch";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

namespace {

std::string Decorate(ErrorCode code, const std::string& message,
                     std::optional<std::uint64_t> offset) {
  std::string out = "[";
  out += ErrorCodeName(code);
  out += "] ";
  out += message;
  if (offset) out += " (at byte offset " + std::to_string(*offset) + ")";
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::uint64_t> offset)
    : std::runtime_error(Decorate(code, message, offset)),
      code_(code),
      offset_(offset) {}

}  // namespace ubw
