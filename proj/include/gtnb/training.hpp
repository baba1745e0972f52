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

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gtnb/checkpoint.hpp"
#include "gtnb/config.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/gpt.hpp"
#include "gtnb/gtn.hpp"
#include "gtnb/vqvae.hpp"

namespace gtnb {

// Per-optimizer-step losses of the framework stage. `total` is
// alpha * gtn + beta * gpt evaluated in double from the reported parts;
// `total_graph` is the value of the float graph that was differentiated.
struct StepRecord {
  std::uint32_t epoch = 0;
  std::size_t step = 0;
  double total = 0.0;
  double total_graph = 0.0;
  double gtn = 0.0;
  double gpt = 0.0;
};

struct EpochRecord {
  std::string stage;
  std::uint32_t epoch = 0;
  std::map<std::string, double> losses;
  double accuracy = 0.0;
  double wall_seconds = 0.0;
};

// Training history. When `stream` is set every epoch is also written there
// as one JSON object per line.
struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::ostream* stream = nullptr;
};

// Optional inputs shared by the stage drivers.
struct StageRun {
  TrainLog* log = nullptr;
  const ModelCheckpoint* resume = nullptr;  // continue a stopped run of the same stage
};

ModelCheckpoint pretrain_gtn(const std::vector<Clip>& clips, const GtnConfig& model,
                             const FeatureConfig& features, const StageConfig& stage,
                             StageRun run = {});

ModelCheckpoint train_vqvae(const std::vector<Clip>& clips, const VqConfig& model,
                            const StageConfig& stage, StageRun run = {});

ModelCheckpoint train_framework(const std::vector<Clip>& clips, const ModelCheckpoint& gtn_ckpt,
                                const ModelCheckpoint& vq_ckpt, const GptConfig& model,
                                const StageConfig& stage, StageRun run = {});

// Rebuild models from checkpoints. Parameters land in `store`.
GenreTokenNetwork<float> gtn_from_checkpoint(const ModelCheckpoint& ckpt,
                                             nn::ParameterStore<float>& store);
VqVae<float> vq_from_checkpoint(const ModelCheckpoint& ckpt, nn::ParameterStore<float>& store);
CrossConditionalGpt<float> gpt_from_checkpoint(const ModelCheckpoint& ckpt,
                                               nn::ParameterStore<float>& store);

// Column mean and reciprocal standard deviation of [music | energy] over the
// clips, for CrossConditionalGpt::set_feature_normalization.
std::pair<Tensor<float>, Tensor<float>> condition_statistics(const std::vector<Clip>& clips);

// CSV: clip_id, genre_code, w0..w9, e0..e{width-1}; one row per clip.
void export_embeddings(const ModelCheckpoint& ckpt, const std::vector<Clip>& clips,
                       const std::string& out_path);

}  // namespace gtnb
