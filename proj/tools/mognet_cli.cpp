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

// mognet: train, evaluate, size and inspect MOGNET models.

#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mognet.h"

namespace {

struct ModelDeleter {
  void operator()(mognet_model* m) const { mognet_model_free(m); }
};
using ModelPtr = std::unique_ptr<mognet_model, ModelDeleter>;

int fail(mognet_status st) {
  std::fprintf(stderr, "mognet: %s\n", mognet_last_error());
  return st;
}

int print_owned(char* text) {
  std::fputs(text, stdout);
  mognet_string_free(text);
  return 0;
}

int load(const std::string& checkpoint, ModelPtr& out) {
  mognet_model* m = nullptr;
  const mognet_status st = mognet_model_load(checkpoint.c_str(), &m);
  if (st != MOGNET_OK) return fail(st);
  out.reset(m);
  return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out_dir,
              bool quiet) {
  auto echo = [](const char* line, void*) {
    std::printf("%s\n", line);
    std::fflush(stdout);
  };
  const mognet_status st = mognet_train(config.c_str(), data.empty() ? nullptr : data.c_str(),
                                        out_dir.c_str(), quiet ? nullptr : +echo, nullptr);
  if (st != MOGNET_OK) return fail(st);
  std::printf("wrote %s/model.ckpt, %s/metrics.log, %s/manifest\n", out_dir.c_str(),
              out_dir.c_str(), out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& engine,
             std::size_t max_samples) {
  ModelPtr model;
  if (int rc = load(checkpoint, model)) return rc;
  const mognet_engine e = engine == "real"      ? MOGNET_ENGINE_REAL
                          : engine == "integer" ? MOGNET_ENGINE_INTEGER
                                                : MOGNET_ENGINE_BOTH;
  mognet_eval_result r{};
  const mognet_status st = mognet_eval(model.get(), data.c_str(), max_samples, e, &r);
  if (st != MOGNET_OK) {
    if (r.disagreements > 0) {
      std::printf("samples=%zu disagreements=%zu first_divergent=%lld\n", r.samples,
                  r.disagreements, static_cast<long long>(r.first_divergent));
    }
    return fail(st);
  }
  std::printf("samples=%zu\n", r.samples);
  if (e & MOGNET_ENGINE_REAL) {
    std::printf("real_accuracy=%.4f\n", static_cast<double>(r.correct_real) / r.samples);
  }
  if (e & MOGNET_ENGINE_INTEGER) {
    std::printf("integer_accuracy=%.4f\n", static_cast<double>(r.correct_integer) / r.samples);
  }
  if (e == MOGNET_ENGINE_BOTH) std::printf("disagreements=%zu\n", r.disagreements);
  return 0;
}

int cmd_size(const std::string& config, const std::string& checkpoint, bool machine) {
  ModelPtr model;
  if (!checkpoint.empty()) {
    if (int rc = load(checkpoint, model)) return rc;
  } else {
    mognet_model* m = nullptr;
    const mognet_status st = mognet_model_create(config.c_str(), &m);
    if (st != MOGNET_OK) return fail(st);
    model.reset(m);
  }
  char* text = nullptr;
  const mognet_status st = mognet_size_report(model.get(), machine ? 1 : 0, &text);
  if (st != MOGNET_OK) return fail(st);
  return print_owned(text);
}

int cmd_gen_ca(int rule, int width, int steps, const std::string& seed) {
  char* text = nullptr;
  const mognet_status st = mognet_gen_ca(rule, width, steps, seed.c_str(), &text);
  if (st != MOGNET_OK) return fail(st);
  return print_owned(text);
}

int cmd_infer(const std::string& checkpoint, const std::string& image) {
  ModelPtr model;
  if (int rc = load(checkpoint, model)) return rc;
  std::ifstream in(image, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "mognet: cannot open %s\n", image.c_str());
    return MOGNET_ERR_DATA;
  }
  const std::vector<uint8_t> pixels((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
  mognet_model_info info{};
  mognet_model_info_get(model.get(), &info);
  std::vector<int64_t> scores(info.class_count);
  int label = -1;
  const mognet_status st = mognet_infer(model.get(), pixels.data(), pixels.size(), scores.data(),
                                        scores.size(), &label);
  if (st != MOGNET_OK) return fail(st);
  std::printf("scores=");
  for (std::size_t c = 0; c < scores.size(); ++c) {
    std::printf(c == 0 ? "%lld" : ",%lld", static_cast<long long>(scores[c]));
  }
  std::printf("\nlabel=%d\n", label);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MOGNET quantized CNN toolkit"};
  app.set_version_flag("--version", std::string(mognet_version()));
  app.require_subcommand(1);

  std::string config, data, out_dir, checkpoint, engine = "both", image, seed = "1";
  std::size_t max_samples = 0;
  bool quiet = false, machine = false;
  int rule = 30, width = 0, steps = 0;

  auto* train = app.add_subcommand("train", "two-stage training");
  train->add_option("--config", config, "run config file (key = value)")->required();
  train->add_option("--data", data, "'synth' or a CIFAR-10 binary directory");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--quiet", quiet, "do not echo per-epoch metrics");

  auto* eval = app.add_subcommand("eval", "top-1 accuracy of a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data, "'synth' or a CIFAR-10 binary directory")->required();
  eval->add_option("--engine", engine)->check(CLI::IsMember({"real", "integer", "both"}));
  eval->add_option("--max-samples", max_samples, "0 evaluates the whole set");

  auto* size = app.add_subcommand("size", "model size and CFLOG compression rates");
  auto* size_cfg = size->add_option("--config", config);
  auto* size_ckpt = size->add_option("--checkpoint", checkpoint);
  size_cfg->excludes(size_ckpt);
  size->add_flag("--machine", machine, "key=value output");

  auto* gen_ca = app.add_subcommand("gen-ca", "print cellular automaton states");
  gen_ca->add_option("--rule", rule, "elementary rule")->capture_default_str();
  gen_ca->add_option("--width", width)->required();
  gen_ca->add_option("--steps", steps)->required();
  gen_ca->add_option("--seed", seed, "0/1 seed row, or an integer seeding a random row")
      ->capture_default_str();

  auto* infer = app.add_subcommand("infer", "integer-engine inference on one raw CHW image");
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--image", image)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : MOGNET_ERR_CONFIG;
  }

  if (*train) return cmd_train(config, data, out_dir, quiet);
  if (*eval) return cmd_eval(checkpoint, data, engine, max_samples);
  if (*size) {
    if (config.empty() && checkpoint.empty()) {
      std::fprintf(stderr, "mognet: size needs --config or --checkpoint\n");
      return MOGNET_ERR_CONFIG;
    }
    return cmd_size(config, checkpoint, machine);
  }
  if (*gen_ca) return cmd_gen_ca(rule, width, steps, seed);
  return cmd_infer(checkpoint, image);
}
