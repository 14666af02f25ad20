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

#ifndef MOGNET_DATA_HPP_
#define MOGNET_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mognet/tensor.hpp"

namespace mognet {

// Images stored as 8-bit CHW planes, one after another.
struct Dataset {
  int channels = 3;
  int height = 32;
  int width = 32;
  int class_count = 10;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * image_bytes(); }
  // Gathers `indices` into an (n, c, h, w) byte buffer.
  std::vector<std::uint8_t> gather(const std::vector<std::size_t>& indices) const;
  Dataset subset(std::size_t count) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

// Parses CIFAR-10 binary records: 1 label byte followed by 3072 pixel bytes
// (1024 red, 1024 green, 1024 blue, row-major 32x32).
Dataset parse_cifar_records(const std::vector<std::uint8_t>& bytes);
Dataset load_cifar_file(const std::string& path);
// `dir` holding data_batch_*.bin (train) or test_batch.bin (test). A path
// to a single .bin file is also accepted.
Dataset load_cifar(const std::string& dir, bool train);

struct SyntheticSpec {
  int samples = 1000;
  int image_size = 8;
  int channels = 3;
  int class_count = 2;
  std::uint64_t seed = 7;
};

// Class-conditioned colour cast on uniform noise: class c brightens
// channel c % channels and darkens the next one. Linearly separable
// through the per-channel image means.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace mognet

#endif  // MOGNET_DATA_HPP_
