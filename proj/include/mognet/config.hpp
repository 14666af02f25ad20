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

// Run configuration files: one `key = value` per line, `#` starts a
// comment, blank lines ignored. Keys are the field names of ModelConfig and
// TrainConfig plus a handful of run-level settings; see kConfigKeys in
// config.cpp. A manifest written by write_manifest() is itself a valid
// config file that reproduces the run.

#ifndef MOGNET_CONFIG_HPP_
#define MOGNET_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include "mognet/blocks.hpp"
#include "mognet/data.hpp"
#include "mognet/training.hpp"

namespace mognet {

inline constexpr const char* kToolkitVersion = "1.0.0";

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int synth_samples = 1000;
  std::uint64_t synth_seed = 7;
  std::size_t max_samples = 0;  // 0 keeps the whole training set
  std::string data;             // recorded by manifests; --data overrides

  SyntheticSpec synthetic() const;
  // Throws ConfigError naming the field.
  void validate() const;
};

// Throws ConfigError with the offending key and line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

std::string format_manifest(const RunConfig& cfg);
void write_manifest(const RunConfig& cfg, const std::string& path);

}  // namespace mognet

#endif  // MOGNET_CONFIG_HPP_
