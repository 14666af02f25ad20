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

#include "mognet/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

namespace mognet {

namespace fs = std::filesystem;

std::vector<std::uint8_t> Dataset::gather(const std::vector<std::size_t>& indices) const {
  std::vector<std::uint8_t> out;
  out.reserve(indices.size() * image_bytes());
  for (std::size_t i : indices) {
    if (i >= size()) throw DataError("sample index out of range");
    out.insert(out.end(), image(i), image(i) + image_bytes());
  }
  return out;
}

Dataset Dataset::subset(std::size_t count) const {
  Dataset d = *this;
  count = std::min(count, size());
  d.labels.resize(count);
  d.pixels.resize(count * image_bytes());
  return d;
}

Dataset parse_cifar_records(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) throw DataError("empty CIFAR file");
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw DataError("CIFAR file size " + std::to_string(bytes.size()) +
                    " is not a multiple of 3073-byte records");
  }
  Dataset d;
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  d.labels.reserve(count);
  d.pixels.reserve(count * d.image_bytes());
  for (std::size_t r = 0; r < count; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] >= d.class_count) {
      throw DataError("CIFAR label " + std::to_string(rec[0]) + " out of range in record " +
                      std::to_string(r));
    }
    d.labels.push_back(rec[0]);
    d.pixels.insert(d.pixels.end(), rec + 1, rec + kCifarRecordBytes);
  }
  return d;
}

Dataset load_cifar_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar_records(bytes);
}

Dataset load_cifar(const std::string& dir, bool train) {
  if (fs::is_regular_file(dir)) return load_cifar_file(dir);
  if (!fs::is_directory(dir)) throw DataError("dataset path not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const bool match = train ? name.rfind("data_batch_", 0) == 0 : name == "test_batch.bin";
    if (match && entry.path().extension() == ".bin") files.push_back(entry.path());
  }
  if (files.empty()) {
    throw DataError("no CIFAR " + std::string(train ? "training" : "test") + " batches in " + dir);
  }
  std::sort(files.begin(), files.end());
  Dataset all;
  for (const auto& f : files) {
    Dataset part = load_cifar_file(f.string());
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
  }
  return all;
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.samples <= 0) throw DataError("synthetic set needs at least one sample");
  if (spec.image_size <= 0 || spec.channels <= 0 || spec.class_count < 2) {
    throw ConfigError("invalid synthetic dataset geometry");
  }
  Dataset d;
  d.channels = spec.channels;
  d.height = spec.image_size;
  d.width = spec.image_size;
  d.class_count = spec.class_count;
  d.labels.resize(spec.samples);
  d.pixels.resize(static_cast<std::size_t>(spec.samples) * d.image_bytes());
  std::mt19937_64 rng(spec.seed);
  const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
  for (int i = 0; i < spec.samples; ++i) {
    const int label = i % spec.class_count;
    d.labels[i] = label;
    const int bright = label % spec.channels;
    const int dark = (label + 1) % spec.channels;
    std::uint8_t* img = d.pixels.data() + static_cast<std::size_t>(i) * d.image_bytes();
    for (int c = 0; c < spec.channels; ++c) {
      const int shift = c == bright ? 40 : (c == dark && dark != bright ? -40 : 0);
      for (std::size_t p = 0; p < plane; ++p) {
        const int noise = static_cast<int>(rng() % 121) - 60;
        img[c * plane + p] = static_cast<std::uint8_t>(std::clamp(128 + shift + noise, 0, 255));
      }
    }
  }
  return d;
}

}  // namespace mognet
