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
#include <iosfwd>
#include <string>
#include <vector>

#include "gtnb/features.hpp"
#include "gtnb/pose.hpp"
#include "gtnb/rng.hpp"

namespace gtnb {

// One manifest row. Paths are resolved against the manifest's directory when
// read. genre is -1 when the manifest has no genre_code column.
struct ClipRecord {
  std::string clip_id;
  std::string pose_path;
  std::string wav_path;
  int genre = -1;
  std::string split;
};

// Tab-separated, header row first. Columns are found by name: clip_id and
// wav_path are required; pose_path, genre_code and split are optional.
std::vector<ClipRecord> read_manifest(const std::string& path);
// Writes clip_id, pose_path, wav_path, genre_code, split with paths as given.
void write_manifest(const std::string& path, const std::vector<ClipRecord>& clips);

struct Clip {
  ClipRecord record;
  MusicFeatureClip features;
  PoseSequence pose;  // empty unless poses were requested
};

struct LoadOptions {
  FeatureConfig features;
  std::size_t clip_frames = 240;  // crop length; shorter clips are skipped
  bool need_pose = false;
  bool need_label = false;
  std::string split;  // only rows with this split; empty keeps all
};

struct Dataset {
  std::vector<Clip> clips;
  std::size_t skipped = 0;
};

// Loads audio (and poses), extracts features and crops to clip_frames.
// Unreadable or too-short clips are skipped with a JSON warning line on
// `log` and counted.
Dataset load_dataset(const std::string& manifest_path, const LoadOptions& options,
                     std::ostream* log = nullptr);

MusicFeatureClip crop_features(const MusicFeatureClip& features, std::size_t frames);

struct SyntheticCorpusConfig {
  std::size_t clips_per_genre = 8;
  std::size_t test_per_genre = 2;  // the last clips of every genre
  double seconds = 4.0;
  int sample_rate = 15360;
};

// Per-genre audio signature: tone pitch, harmonic content and tempo.
struct GenreSignature {
  double pitch_hz;
  int harmonics;
  double bpm;
};
GenreSignature genre_signature(int genre);

// One synthetic clip. The beat grid starts at `beat_offset` seconds; audio
// and motion share it, and motion reverses direction on every beat.
AudioClip synth_audio(int genre, double seconds, int sample_rate, double beat_offset, Rng& rng);
PoseSequence synth_pose(int genre, std::size_t frames, double beat_offset, Rng& rng);
// Static rest pose (T-pose), [1, 72].
Tensor<float> rest_pose();

// Writes audio/<id>.wav, pose/<id>.csv and manifest.tsv under out_dir and
// returns the manifest path. Deterministic for a given seed.
std::string make_synthetic_corpus(const std::string& out_dir, std::uint64_t seed,
                                  const SyntheticCorpusConfig& config = {});

}  // namespace gtnb
