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

// Checkpoint file format, version 1. All integers little-endian.
//
//   magic        8 bytes  "MOGNETCK"
//   version      u16      1
//   config       n, groups, k, stages, blocks_per_stage, class_count,
//                in_channels, image_size, ca_rule (u32 each),
//                shared_ca_seed (u8), master_seed (u64)
//   stem         weight record
//   stem.bn      bn record
//   per block:   cflog record, bn record, cflog record, bn record
//   head         weight record
//   head.bn      bn record
//   checksum     u64 FNV-1a over every preceding byte
//
// weight record: kind u8 (1 binary, 2 ternary), shape 4 x u32, then codes
//   packed LSB first. Ternary uses 2 bits per weight (00 = 0, 01 = +1,
//   11 = -1; 10 is invalid), binary 1 bit (1 = +1, 0 = -1).
// bn record: channels u32, gamma, beta, moving_mean, moving_var as
//   channels x f32 each, epsilon f32.
// cflog record: c_in, c_out, latent, groups, ca rule, ca width, ca steps
//   (u32 each), seed row packed 1 bit per cell, then the reduce and grouped
//   weight records. CA kernels are regenerated from the seed on import.
//
// Proxy weights and step sizes are training state and are not stored.

#ifndef MOGNET_CHECKPOINT_HPP_
#define MOGNET_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mognet/blocks.hpp"

namespace mognet {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'G', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
// Throws ParseError carrying the byte offset of the first inconsistency.
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void export_checkpoint(const Model& model, const std::string& path);
Model import_checkpoint(const std::string& path);

std::vector<std::uint8_t> pack_ternary(const std::vector<std::int8_t>& codes);
std::vector<std::uint8_t> pack_binary(const std::vector<std::int8_t>& codes);

}  // namespace mognet

#endif  // MOGNET_CHECKPOINT_HPP_
