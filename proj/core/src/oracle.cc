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

#include "ubw/oracle.h"

#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ubw/error.h"

namespace ubw {
namespace {

void CheckImage(std::span<const double> image, const ImageShape& shape) {
  if (image.size() != shape.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "query image has " + std::to_string(image.size()) +
                    " values; shape " + ShapeToString(shape.AsShape()) +
                    " needs " + std::to_string(shape.size()));
  }
}

}  // namespace

std::vector<double> InProcessOracle::Query(std::span<const double> image,
                                           const ImageShape& shape) {
  CheckImage(image, shape);
  if (!(shape == model_.arch().input)) {
    throw Error(ErrorCode::kShapeMismatch,
                "query shape " + ShapeToString(shape.AsShape()) +
                    " does not match the model input");
  }
  return model_.Predict(image);
}

SubprocessOracle::SubprocessOracle(const std::string& command) : command_(command) {
  std::signal(SIGPIPE, SIG_IGN);
  int to_fd[2];
  int from_fd[2];
  if (pipe(to_fd) != 0) {
    throw Error(ErrorCode::kIo, std::string("pipe: ") + std::strerror(errno));
  }
  if (pipe(from_fd) != 0) {
    close(to_fd[0]);
    close(to_fd[1]);
    throw Error(ErrorCode::kIo, std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) {
    for (int fd : {to_fd[0], to_fd[1], from_fd[0], from_fd[1]}) close(fd);
    throw Error(ErrorCode::kIo, std::string("fork: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    dup2(to_fd[0], STDIN_FILENO);
    dup2(from_fd[1], STDOUT_FILENO);
    for (int fd : {to_fd[0], to_fd[1], from_fd[0], from_fd[1]}) close(fd);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_fd[0]);
  close(from_fd[1]);
  to_child_ = fdopen(to_fd[1], "w");
  from_child_ = fdopen(from_fd[0], "r");
  if (to_child_ == nullptr || from_child_ == nullptr) {
    throw Error(ErrorCode::kIo, "cannot open oracle pipes");
  }
}

SubprocessOracle::~SubprocessOracle() {
  if (to_child_ != nullptr) std::fclose(to_child_);
  if (from_child_ != nullptr) std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::vector<double> SubprocessOracle::Query(std::span<const double> image,
                                            const ImageShape& shape) {
  CheckImage(image, shape);
  const nlohmann::json request = {
      {"shape", {shape.channels, shape.height, shape.width}},
      {"image", std::vector<double>(image.begin(), image.end())}};
  const std::string line = request.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size() ||
      std::fflush(to_child_) != 0) {
    throw Error(ErrorCode::kProtocol,
                "oracle process '" + command_ + "' stopped accepting requests");
  }
  std::string reply;
  char buffer[4096];
  while (std::fgets(buffer, sizeof(buffer), from_child_) != nullptr) {
    reply += buffer;
    if (!reply.empty() && reply.back() == '\n') break;
  }
  if (reply.empty()) {
    throw Error(ErrorCode::kProtocol,
                "oracle process '" + command_ + "' closed its output");
  }
  nlohmann::json response;
  try {
    response = nlohmann::json::parse(reply);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("oracle reply is not JSON: ") + e.what());
  }
  if (response.is_object() && response.contains("error")) {
    throw Error(ErrorCode::kProtocol,
                "oracle reported: " + response.at("error").dump());
  }
  if (!response.is_object() || !response.contains("probabilities") ||
      !response.at("probabilities").is_array()) {
    throw Error(ErrorCode::kProtocol, "oracle reply lacks a probabilities array");
  }
  std::vector<double> probs;
  for (const auto& v : response.at("probabilities")) {
    if (!v.is_number()) {
      throw Error(ErrorCode::kProtocol, "oracle reply holds a non-numeric probability");
    }
    probs.push_back(v.get<double>());
  }
  return probs;
}

void ServeModel(const ModelState& model, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json reply;
    try {
      const auto request = nlohmann::json::parse(line);
      const auto shape = request.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3) {
        throw Error(ErrorCode::kProtocol, "shape must be [C,H,W]");
      }
      const auto image = request.at("image").get<std::vector<double>>();
      InProcessOracle oracle(model);
      reply = {{"probabilities",
                oracle.Query(image, ImageShape{shape[0], shape[1], shape[2]})}};
    } catch (const std::exception& e) {
      reply = {{"error", e.what()}};
    }
    out << reply.dump() << '\n';
    out.flush();
  }
}

}  // namespace ubw
