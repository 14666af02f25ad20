// Copyright 2026 The MOGNET Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MOGNET_ERRORS_HPP_
#define MOGNET_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mognet {

// Invalid hyperparameters or structurally inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions that do not line up.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, empty or malformed datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed checkpoint. Carries the byte offset at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Violated internal contract: overflow bound exceeded, non-finite loss,
// engines disagreeing.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mognet

#endif  // MOGNET_ERRORS_HPP_
