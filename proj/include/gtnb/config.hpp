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
#include <string>

#include "gtnb/features.hpp"
#include "gtnb/gpt.hpp"
#include "gtnb/gtn.hpp"
#include "gtnb/vqvae.hpp"

namespace gtnb {

// Flat "section.key" -> value map. Checkpoints carry the configuration they
// were trained with in this form, and the config hash is taken over its
// canonical text (sorted "key=value" lines).
using ConfigMap = std::map<std::string, std::string>;

struct StageConfig {
  std::string stage;
  std::uint32_t epochs = 1;
  std::size_t batch_size = 4;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  std::uint32_t freeze_epoch = 90;  // framework stage: last epoch that updates the GTN
  bool teacher_forcing = true;
  double alpha = 1.0;
  double beta = 0.001;
  std::size_t clip_frames = 240;  // clips are cropped to this many frames (4 s)
  // Stop after this epoch (0 = run all epochs); the checkpoint can be resumed.
  std::uint32_t stop_after_epoch = 0;

  void validate() const;
};

StageConfig default_stage_config(const std::string& stage);

void put_config(ConfigMap& map, const FeatureConfig& config);
void put_config(ConfigMap& map, const GtnConfig& config);
void put_config(ConfigMap& map, const VqConfig& config);
void put_config(ConfigMap& map, const GptConfig& config);
// stop_after_epoch is a run control, not part of the configuration.
void put_config(ConfigMap& map, const StageConfig& config);

FeatureConfig feature_config_from(const ConfigMap& map);
GtnConfig gtn_config_from(const ConfigMap& map);
VqConfig vq_config_from(const ConfigMap& map);
GptConfig gpt_config_from(const ConfigMap& map);
StageConfig stage_config_from(const ConfigMap& map);

std::string config_text(const ConfigMap& map);
std::uint64_t config_hash(const ConfigMap& map);

}  // namespace gtnb
