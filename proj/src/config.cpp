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

#include "mognet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string_view>
#include <vector>

#include "mognet/errors.hpp"

namespace mognet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MOGNET_INT_FIELD(name, expr)                                                    \
  Field {                                                                               \
    name, [](RunConfig& c, std::string_view v) { expr = parse_number<std::decay_t<decltype(expr)>>(v); }, \
        [](const RunConfig& c) { return std::to_string(expr); }                         \
  }
#define MOGNET_REAL_FIELD(name, expr)                                           \
  Field {                                                                       \
    name, [](RunConfig& c, std::string_view v) { expr = parse_number<double>(v); }, \
        [](const RunConfig& c) { return fmt_double(expr); }                     \
  }
#define MOGNET_BOOL_FIELD(name, expr)                                       \
  Field {                                                                   \
    name, [](RunConfig& c, std::string_view v) { expr = parse_bool(v); },   \
        [](const RunConfig& c) { return std::string(expr ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      MOGNET_INT_FIELD("n", c.model.n),
      MOGNET_INT_FIELD("groups", c.model.groups),
      MOGNET_INT_FIELD("k", c.model.k),
      MOGNET_INT_FIELD("stages", c.model.stages),
      MOGNET_INT_FIELD("blocks_per_stage", c.model.blocks_per_stage),
      MOGNET_INT_FIELD("class_count", c.model.class_count),
      MOGNET_INT_FIELD("in_channels", c.model.in_channels),
      MOGNET_INT_FIELD("image_size", c.model.image_size),
      MOGNET_INT_FIELD("ca_rule", c.model.ca_rule),
      MOGNET_BOOL_FIELD("shared_ca_seed", c.model.shared_ca_seed),
      MOGNET_INT_FIELD("master_seed", c.model.master_seed),
      MOGNET_INT_FIELD("epochs_stage1", c.train.epochs_stage1),
      MOGNET_INT_FIELD("epochs_stage2", c.train.epochs_stage2),
      MOGNET_INT_FIELD("decay_start_stage1", c.train.decay_start_stage1),
      MOGNET_INT_FIELD("decay_start_stage2", c.train.decay_start_stage2),
      MOGNET_INT_FIELD("batch_size", c.train.batch_size),
      MOGNET_REAL_FIELD("lr", c.train.lr),
      MOGNET_REAL_FIELD("lr_decay_rate", c.train.lr_decay_rate),
      MOGNET_REAL_FIELD("beta1", c.train.beta1),
      MOGNET_REAL_FIELD("beta2", c.train.beta2),
      MOGNET_REAL_FIELD("adam_epsilon", c.train.adam_epsilon),
      MOGNET_BOOL_FIELD("clip_proxies", c.train.clip_proxies),
      MOGNET_INT_FIELD("rng_seed", c.train.rng_seed),
      MOGNET_BOOL_FIELD("augment_pad_crop", c.train.augment.pad_crop),
      MOGNET_BOOL_FIELD("augment_hflip", c.train.augment.hflip),
      MOGNET_INT_FIELD("synth_samples", c.synth_samples),
      MOGNET_INT_FIELD("synth_seed", c.synth_seed),
      MOGNET_INT_FIELD("max_samples", c.max_samples),
      Field{"data", [](RunConfig& c, std::string_view v) { c.data = std::string(v); },
            [](const RunConfig& c) { return c.data; }},
  };
  return table;
}

#undef MOGNET_INT_FIELD
#undef MOGNET_REAL_FIELD
#undef MOGNET_BOOL_FIELD

}  // namespace

SyntheticSpec RunConfig::synthetic() const {
  SyntheticSpec s;
  s.samples = synth_samples;
  s.image_size = model.image_size;
  s.channels = model.in_channels;
  s.class_count = model.class_count;
  s.seed = synth_seed;
  return s;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (synth_samples < 1) throw ConfigError("synth_samples: must be positive");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key (" + where + ")");
    if (key == "toolkit_version") continue;
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) throw ConfigError(key + ": unknown key (" + where + ")");
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what() + " (" + where + ")");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_manifest(const RunConfig& cfg) {
  std::string out = "toolkit_version = ";
  out += kToolkitVersion;
  out += '\n';
  for (const Field& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

void write_manifest(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << format_manifest(cfg);
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace mognet
