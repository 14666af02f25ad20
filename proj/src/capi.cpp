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

#include "mognet.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "mognet/ca.hpp"
#include "mognet/checkpoint.hpp"
#include "mognet/config.hpp"
#include "mognet/errors.hpp"
#include "mognet/int_inference.hpp"
#include "mognet/training.hpp"

struct mognet_model {
  mognet::Model model;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
mognet_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return MOGNET_OK;
  } catch (const mognet::ConfigError& e) {
    g_last_error = e.what();
    return MOGNET_ERR_CONFIG;
  } catch (const mognet::DataError& e) {
    g_last_error = e.what();
    return MOGNET_ERR_DATA;
  } catch (const mognet::ParseError& e) {
    g_last_error = e.what();
    return MOGNET_ERR_DATA;
  } catch (const mognet::ShapeError& e) {
    g_last_error = e.what();
    return MOGNET_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MOGNET_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MOGNET_ERR_INTERNAL;
  }
}

void require_arg(const void* p, const char* name) {
  if (p == nullptr) throw mognet::ConfigError(std::string(name) + ": must not be null");
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw mognet::InternalError("out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void check_geometry(const mognet::ModelConfig& cfg, const mognet::Dataset& data) {
  if (data.size() == 0) throw mognet::DataError("dataset is empty");
  if (data.channels != cfg.in_channels || data.height != cfg.image_size ||
      data.width != cfg.image_size) {
    throw mognet::DataError("dataset images are " + std::to_string(data.channels) + "x" +
                            std::to_string(data.height) + "x" + std::to_string(data.width) +
                            ", model expects " + std::to_string(cfg.in_channels) + "x" +
                            std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
  for (int label : data.labels) {
    if (label < 0 || label >= cfg.class_count) {
      throw mognet::DataError("label " + std::to_string(label) + " outside the model's " +
                              std::to_string(cfg.class_count) + " classes");
    }
  }
}

mognet::Dataset load_data(const std::string& data, const mognet::SyntheticSpec& synth, bool train) {
  if (data == "synth") return mognet::make_synthetic(synth);
  if (data.empty()) throw mognet::DataError("no dataset given");
  return mognet::load_cifar(data, train);
}

mognet::SyntheticSpec synth_for(const mognet::ModelConfig& cfg) {
  mognet::RunConfig run;
  run.model = cfg;
  return run.synthetic();
}

}  // namespace

extern "C" {

const char* mognet_version(void) { return mognet::kToolkitVersion; }

const char* mognet_last_error(void) { return g_last_error.c_str(); }

void mognet_string_free(char* s) { std::free(s); }

mognet_status mognet_model_create(const char* config_path, mognet_model** out) {
  return guarded([&] {
    require_arg(config_path, "config_path");
    require_arg(out, "out");
    const mognet::RunConfig cfg = mognet::load_config(config_path);
    *out = new mognet_model{mognet::build_model(cfg.model)};
  });
}

mognet_status mognet_model_load(const char* checkpoint_path, mognet_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path, "checkpoint_path");
    require_arg(out, "out");
    *out = new mognet_model{mognet::import_checkpoint(checkpoint_path)};
  });
}

mognet_status mognet_model_save(const mognet_model* model, const char* path) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(path, "path");
    mognet::export_checkpoint(model->model, path);
  });
}

void mognet_model_free(mognet_model* model) { delete model; }

mognet_status mognet_model_info_get(const mognet_model* model, mognet_model_info* out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(out, "out");
    const mognet::ModelConfig& c = model->model.cfg;
    *out = mognet_model_info{c.n,           c.groups,      c.k,           c.stages,
                             c.blocks_per_stage, c.class_count, c.in_channels, c.image_size};
  });
}

mognet_status mognet_train(const char* config_path, const char* data, const char* out_dir,
                           mognet_epoch_fn on_epoch, void* user) {
  return guarded([&] {
    require_arg(config_path, "config_path");
    require_arg(out_dir, "out_dir");
    mognet::RunConfig cfg = mognet::load_config(config_path);
    if (data != nullptr) cfg.data = data;
    mognet::Dataset set = load_data(cfg.data, cfg.synthetic(), true);
    if (cfg.max_samples > 0 && cfg.max_samples < set.size()) set = set.subset(cfg.max_samples);
    check_geometry(cfg.model, set);

    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw mognet::DataError("cannot create " + dir.string() + ": " + ec.message());
    mognet::write_manifest(cfg, (dir / "manifest").string());
    std::ofstream metrics(dir / "metrics.log", std::ios::trunc);
    if (!metrics) throw mognet::DataError("cannot write " + (dir / "metrics.log").string());

    mognet::Model model = mognet::build_model(cfg.model);
    mognet::two_stage_train(model, set, cfg.train, [&](const mognet::EpochMetrics& m) {
      const std::string line = m.to_line();
      metrics << line << '\n' << std::flush;
      if (on_epoch != nullptr) on_epoch(line.c_str(), user);
    });
    mognet::export_checkpoint(model, (dir / "model.ckpt").string());
  });
}

mognet_status mognet_eval(const mognet_model* model, const char* data, size_t max_samples,
                          mognet_engine engine, mognet_eval_result* out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(data, "data");
    require_arg(out, "out");
    if (engine < MOGNET_ENGINE_REAL || engine > MOGNET_ENGINE_BOTH) {
      throw mognet::ConfigError("engine: must be real, integer or both");
    }
    const mognet::Model& m = model->model;
    mognet::Dataset set = load_data(data, synth_for(m.cfg), false);
    if (max_samples > 0 && max_samples < set.size()) set = set.subset(max_samples);
    check_geometry(m.cfg, set);

    *out = mognet_eval_result{set.size(), 0, 0, 0, -1};
    std::vector<int> real;
    std::vector<int> integer;
    if (engine & MOGNET_ENGINE_REAL) real = mognet::predict(m, set);
    if (engine & MOGNET_ENGINE_INTEGER) {
      const mognet::IntModel im(m);
      constexpr std::size_t kBatch = 100;
      for (std::size_t start = 0; start < set.size(); start += kBatch) {
        const std::size_t end = std::min(set.size(), start + kBatch);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const mognet::Shape4 shape{static_cast<int>(idx.size()), set.channels, set.height,
                                   set.width};
        for (const auto& p : im.forward(mognet::pixels_to_quant(set.gather(idx), shape))) {
          integer.push_back(p.label);
        }
      }
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (!real.empty()) out->correct_real += real[i] == set.labels[i];
      if (!integer.empty()) out->correct_integer += integer[i] == set.labels[i];
      if (!real.empty() && !integer.empty() && real[i] != integer[i]) {
        if (out->disagreements++ == 0) out->first_divergent = static_cast<int64_t>(i);
      }
    }
    if (out->disagreements > 0) {
      const auto i = static_cast<std::size_t>(out->first_divergent);
      throw mognet::InternalError("engines disagree on " + std::to_string(out->disagreements) +
                                  " samples; first divergent sample " + std::to_string(i) +
                                  " (real " + std::to_string(real[i]) + ", integer " +
                                  std::to_string(integer[i]) + ")");
    }
  });
}

mognet_status mognet_infer(const mognet_model* model, const uint8_t* pixels, size_t pixel_count,
                           int64_t* scores, size_t score_capacity, int* label) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(pixels, "pixels");
    const mognet::ModelConfig& c = model->model.cfg;
    const std::size_t expected = static_cast<std::size_t>(c.in_channels) * c.image_size * c.image_size;
    if (pixel_count != expected) {
      throw mognet::DataError("image has " + std::to_string(pixel_count) + " bytes, expected " +
                              std::to_string(expected));
    }
    if (scores != nullptr && score_capacity < static_cast<std::size_t>(c.class_count)) {
      throw mognet::ConfigError("score_capacity: smaller than the class count");
    }
    const mognet::IntModel im(model->model);
    const mognet::IntPrediction p = im.forward_one(std::vector<std::uint8_t>(pixels, pixels + pixel_count));
    if (scores != nullptr) std::copy(p.scores.begin(), p.scores.end(), scores);
    if (label != nullptr) *label = p.label;
  });
}

mognet_status mognet_size_report(const mognet_model* model, int machine, char** out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(out, "out");
    const mognet::SizeReport r = mognet::size_report(model->model.cfg);
    *out = duplicate(machine != 0 ? r.key_values() : r.text());
  });
}

mognet_status mognet_gen_ca(int rule, int width, int steps, const char* seed, char** out) {
  return guarded([&] {
    require_arg(seed, "seed");
    require_arg(out, "out");
    if (width < 3) throw mognet::ConfigError("width: must be at least 3");
    if (steps < 1) throw mognet::ConfigError("steps: must be positive");
    const std::string s(seed);
    mognet::CAConfig cfg;
    cfg.rule = rule;
    cfg.width = width;
    cfg.steps = steps;
    const bool is_row = static_cast<int>(s.size()) == width &&
                        s.find_first_not_of("01") == std::string::npos;
    if (is_row) {
      for (char ch : s) cfg.seed_row.push_back(ch == '1');
    } else {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0') {
        throw mognet::ConfigError("seed: expected a " + std::to_string(width) +
                                  "-cell 0/1 row or a decimal integer");
      }
      cfg.seed_row = mognet::default_seed(width, v);
    }
    *out = duplicate(mognet::format_states(mognet::generate_kernel(cfg)));
  });
}

}  // extern "C"
