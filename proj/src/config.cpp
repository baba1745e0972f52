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

#include "gtnb/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "gtnb/checkpoint.hpp"
#include "gtnb/error.hpp"

namespace gtnb {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

const std::string& require(const ConfigMap& map, const std::string& key) {
  const auto it = map.find(key);
  if (it == map.end()) throw FormatError("configuration is missing key " + key);
  return it->second;
}

std::uint64_t get_uint(const ConfigMap& map, const std::string& key) {
  const auto& text = require(map, key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("configuration key " + key + " is not an unsigned integer: " + text);
  }
  return v;
}

std::size_t get_size(const ConfigMap& map, const std::string& key) {
  return static_cast<std::size_t>(get_uint(map, key));
}

double get_double(const ConfigMap& map, const std::string& key) {
  const auto& text = require(map, key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("configuration key " + key + " is not a number: " + text);
}

bool get_bool(const ConfigMap& map, const std::string& key) {
  const auto& text = require(map, key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw FormatError("configuration key " + key + " is not a boolean: " + text);
}

std::vector<std::size_t> get_list(const ConfigMap& map, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream in(require(map, key));
  std::string item;
  while (std::getline(in, item, ',')) {
    ConfigMap one{{key, item}};
    out.push_back(get_size(one, key));
  }
  return out;
}

}  // namespace

void StageConfig::validate() const {
  if (epochs == 0) throw Error("epochs must be positive");
  if (batch_size == 0) throw Error("batch size must be positive");
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (freeze_epoch > epochs) throw Error("freeze_epoch must not exceed epochs");
  if (alpha < 0.0 || beta < 0.0) throw Error("alpha and beta must be non-negative");
  if (clip_frames == 0 || clip_frames % kVqDownsample != 0) {
    throw Error("clip_frames must be a positive multiple of 8");
  }
  if (stop_after_epoch > epochs) throw Error("stop_after_epoch must not exceed epochs");
}

StageConfig default_stage_config(const std::string& stage) {
  StageConfig c;
  c.stage = stage;
  if (stage == kStageGtnPretrain) {
    c.epochs = 250;
    c.freeze_epoch = 0;
  } else if (stage == kStageVqvae) {
    c.epochs = 500;
    c.freeze_epoch = 0;
  } else if (stage == kStageFramework) {
    c.epochs = 400;
    c.freeze_epoch = 90;
  } else {
    throw Error("unknown stage " + stage);
  }
  return c;
}

void put_config(ConfigMap& map, const FeatureConfig& c) {
  map["features.sample_rate"] = fmt(static_cast<std::uint64_t>(c.sample_rate));
  map["features.window"] = fmt(c.window);
  map["features.hop"] = fmt(c.hop);
  map["features.mel_bands"] = fmt(c.mel_bands);
  map["features.log_floor"] = fmt(c.log_floor);
  map["features.tempogram_window"] = fmt(c.tempogram_window);
  map["features.beat_min_gap_seconds"] = fmt(c.beat_min_gap_seconds);
}

void put_config(ConfigMap& map, const GtnConfig& c) {
  map["gtn.mel_bands"] = fmt(c.mel_bands);
  map["gtn.channels"] = fmt_list(c.channels);
  map["gtn.width"] = fmt(c.width);
  map["gtn.genres"] = fmt(c.genres);
  map["gtn.project_tokens"] = c.project_tokens ? "true" : "false";
  map["gtn.input_scale"] = fmt(c.input_scale);
  map["gtn.token_init_stddev"] = fmt(c.token_init_stddev);
}

void put_config(ConfigMap& map, const VqConfig& c) {
  map["vq.codebook_size"] = fmt(c.codebook_size);
  map["vq.code_dim"] = fmt(c.code_dim);
  map["vq.hidden"] = fmt(c.hidden);
  map["vq.commitment"] = fmt(c.commitment);
  map["vq.codebook_init_stddev"] = fmt(c.codebook_init_stddev);
  map["vq.warmup_epochs"] = fmt(c.warmup_epochs);
  map["vq.codebook_data_init"] = c.codebook_data_init ? "true" : "false";
}

void put_config(ConfigMap& map, const GptConfig& c) {
  map["gpt.d_model"] = fmt(c.d_model);
  map["gpt.heads"] = fmt(c.heads);
  map["gpt.blocks"] = fmt(c.blocks);
  map["gpt.codebook_size"] = fmt(c.codebook_size);
  map["gpt.music_dim"] = fmt(c.music_dim);
  map["gpt.max_steps"] = fmt(c.max_steps);
  map["gpt.mlp_ratio"] = fmt(c.mlp_ratio);
}

void put_config(ConfigMap& map, const StageConfig& c) {
  map["stage.name"] = c.stage;
  map["stage.epochs"] = fmt(static_cast<std::uint64_t>(c.epochs));
  map["stage.batch_size"] = fmt(c.batch_size);
  map["stage.learning_rate"] = fmt(c.learning_rate);
  map["stage.seed"] = fmt(c.seed);
  map["stage.freeze_epoch"] = fmt(static_cast<std::uint64_t>(c.freeze_epoch));
  map["stage.teacher_forcing"] = c.teacher_forcing ? "true" : "false";
  map["stage.alpha"] = fmt(c.alpha);
  map["stage.beta"] = fmt(c.beta);
  map["stage.clip_frames"] = fmt(c.clip_frames);
}

FeatureConfig feature_config_from(const ConfigMap& m) {
  FeatureConfig c;
  c.sample_rate = static_cast<int>(get_uint(m, "features.sample_rate"));
  c.window = get_size(m, "features.window");
  c.hop = get_size(m, "features.hop");
  c.mel_bands = get_size(m, "features.mel_bands");
  c.log_floor = get_double(m, "features.log_floor");
  c.tempogram_window = get_size(m, "features.tempogram_window");
  c.beat_min_gap_seconds = get_double(m, "features.beat_min_gap_seconds");
  return c;
}

GtnConfig gtn_config_from(const ConfigMap& m) {
  GtnConfig c;
  c.mel_bands = get_size(m, "gtn.mel_bands");
  c.channels = get_list(m, "gtn.channels");
  c.width = get_size(m, "gtn.width");
  c.genres = get_size(m, "gtn.genres");
  c.project_tokens = get_bool(m, "gtn.project_tokens");
  c.input_scale = get_double(m, "gtn.input_scale");
  c.token_init_stddev = get_double(m, "gtn.token_init_stddev");
  return c;
}

VqConfig vq_config_from(const ConfigMap& m) {
  VqConfig c;
  c.codebook_size = get_size(m, "vq.codebook_size");
  c.code_dim = get_size(m, "vq.code_dim");
  c.hidden = get_size(m, "vq.hidden");
  c.commitment = get_double(m, "vq.commitment");
  c.codebook_init_stddev = get_double(m, "vq.codebook_init_stddev");
  c.warmup_epochs = get_size(m, "vq.warmup_epochs");
  c.codebook_data_init = get_bool(m, "vq.codebook_data_init");
  return c;
}

GptConfig gpt_config_from(const ConfigMap& m) {
  GptConfig c;
  c.d_model = get_size(m, "gpt.d_model");
  c.heads = get_size(m, "gpt.heads");
  c.blocks = get_size(m, "gpt.blocks");
  c.codebook_size = get_size(m, "gpt.codebook_size");
  c.music_dim = get_size(m, "gpt.music_dim");
  c.max_steps = get_size(m, "gpt.max_steps");
  c.mlp_ratio = get_size(m, "gpt.mlp_ratio");
  return c;
}

StageConfig stage_config_from(const ConfigMap& m) {
  StageConfig c;
  c.stage = require(m, "stage.name");
  c.epochs = static_cast<std::uint32_t>(get_uint(m, "stage.epochs"));
  c.batch_size = get_size(m, "stage.batch_size");
  c.learning_rate = get_double(m, "stage.learning_rate");
  c.seed = get_uint(m, "stage.seed");
  c.freeze_epoch = static_cast<std::uint32_t>(get_uint(m, "stage.freeze_epoch"));
  c.teacher_forcing = get_bool(m, "stage.teacher_forcing");
  c.alpha = get_double(m, "stage.alpha");
  c.beta = get_double(m, "stage.beta");
  c.clip_frames = get_size(m, "stage.clip_frames");
  return c;
}

std::string config_text(const ConfigMap& map) {
  std::string out;
  for (const auto& [k, v] : map) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t config_hash(const ConfigMap& map) { return fnv1a(config_text(map)); }

}  // namespace gtnb
