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

#ifndef UBW_ORACLE_H_
#define UBW_ORACLE_H_

#include <cstdio>
#include <iosfwd>
#include <span>
#include <string>
#include <sys/types.h>
#include <vector>

#include "ubw/data.h"
#include "ubw/nn.h"

namespace ubw {

// Black-box access to a suspicious model: one image in, K probabilities out.
class ModelOracle {
 public:
  virtual ~ModelOracle() = default;
  virtual std::vector<double> Query(std::span<const double> image,
                                    const ImageShape& shape) = 0;
};

class InProcessOracle final : public ModelOracle {
 public:
  explicit InProcessOracle(const ModelState& model) : model_(model) {}
  std::vector<double> Query(std::span<const double> image,
                            const ImageShape& shape) override;

 private:
  const ModelState& model_;
};

// Runs `command` through /bin/sh and speaks line-delimited JSON on its
// stdin/stdout:
//   request  {"shape": [C, H, W], "image": [...]}
//   response {"probabilities": [...]}  or  {"error": "..."}
// SIGPIPE is ignored for the calling process while any instance exists.
class SubprocessOracle final : public ModelOracle {
 public:
  explicit SubprocessOracle(const std::string& command);
  ~SubprocessOracle() override;
  SubprocessOracle(const SubprocessOracle&) = delete;
  SubprocessOracle& operator=(const SubprocessOracle&) = delete;

  std::vector<double> Query(std::span<const double> image,
                            const ImageShape& shape) override;

 private:
  std::string command_;
  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
};

// Serves `model` over the subprocess protocol until `in` reaches EOF.
// Malformed requests get an error response; the loop continues.
void ServeModel(const ModelState& model, std::istream& in, std::ostream& out);

}  // namespace ubw

#endif  // UBW_ORACLE_H_
