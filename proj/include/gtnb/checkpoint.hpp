// Copyright 2026 The GTNB Authors
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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "gtnb/layers.hpp"
#include "gtnb/optim.hpp"

namespace gtnb {

// Stage tags written into checkpoints.
inline constexpr const char* kStageGtnPretrain = "gtn-pretrain";
inline constexpr const char* kStageVqvae = "vqvae";
inline constexpr const char* kStageFramework = "framework";

// Snapshot of a training stage. Parameters and optimizer moments are kept
// as 32-bit tensors so the file round-trip is exact.
struct ModelCheckpoint {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::uint32_t epoch = 0;
  std::string rng_state;
  std::set<std::string> frozen;
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor<float>> tensors;

  std::uint64_t optimizer_step = 0;
  std::map<std::string, Tensor<float>> first_moment;
  std::map<std::string, Tensor<float>> second_moment;

  bool operator==(const ModelCheckpoint&) const = default;
};

ModelCheckpoint snapshot(const nn::ParameterStore<float>& store);
void attach_optimizer(ModelCheckpoint& ckpt, const nn::OptimizerState<float>& state);
nn::OptimizerState<float> restore_optimizer(const ModelCheckpoint& ckpt, nn::AdamConfig config);

// Copies checkpoint tensors into an existing store. With a prefix, only
// matching names are copied; every such name must exist on both sides.
template <typename T>
void restore(const ModelCheckpoint& ckpt, nn::ParameterStore<T>& store,
             const std::string& prefix = "");

// Byte layout (all integers little-endian):
//
//   "GTNB"                        magic
//   u32    version                (currently 1)
//   u64    entry count N
//   N x { u32 name_len, name (UTF-8), u32 rank, u64 dims[rank],
//         f32 values[prod(dims)] }
//   u32 stage_len, stage
//   u64 config_hash
//   u32 epoch
//   u64 optimizer_step
//   u32 frozen_count,   frozen_count x { u32 len, prefix }
//   u32 metadata_count, metadata_count x { u32 len, key, u32 len, value }
//   u32 rng_len, rng_state
//   "BNTG"                        end marker
//
// Optimizer moments are stored as ordinary entries named "@adam.m/<param>"
// and "@adam.v/<param>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);
// Throws StageMismatchError unless the stored stage equals `required_stage`.
ModelCheckpoint load_checkpoint(const std::string& path, const std::string& required_stage);

std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(const std::string& bytes);

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace gtnb
