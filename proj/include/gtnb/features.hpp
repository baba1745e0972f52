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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gtnb/audio.hpp"
#include "gtnb/tensor.hpp"

namespace gtnb {

struct FeatureConfig {
  int sample_rate = 15360;
  std::size_t window = 1024;
  std::size_t hop = 256;  // 15360 / 256 = 60 frames per second
  std::size_t mel_bands = 80;
  double log_floor = 1e-10;
  std::size_t tempogram_window = 384;
  double beat_min_gap_seconds = 0.25;

  double frame_rate() const { return static_cast<double>(sample_rate) / static_cast<double>(hop); }
};

// Column layout of the 438-wide music feature matrix.
namespace music_columns {
inline constexpr std::size_t kMfcc = 0;            // 20 MFCCs
inline constexpr std::size_t kMfccCount = 20;
inline constexpr std::size_t kMfccDelta = 20;      // 20 MFCC deltas
inline constexpr std::size_t kChroma = 40;         // 12 pitch classes, C first
inline constexpr std::size_t kChromaCount = 12;
inline constexpr std::size_t kTempogram = 52;      // 384 autocorrelation lags, lag 0 first
inline constexpr std::size_t kTempogramCount = 384;
inline constexpr std::size_t kOnset = 436;         // onset strength
inline constexpr std::size_t kBeat = 437;          // beat one-hot
inline constexpr std::size_t kWidth = 438;
}  // namespace music_columns

struct MusicFeatureClip {
  Tensor<float> mel;     // [frames, 80] natural-log mel power
  Tensor<float> music;   // [frames, 438]
  Tensor<float> energy;  // [frames, 1]
  std::vector<int> beat_frames;
  double frame_rate = 60.0;

  std::size_t frames() const { return mel.empty() ? 0 : mel.rows(); }
};

// Centered frames: frame t covers samples [t*hop - window/2, t*hop + window/2)
// with zero padding, t in [0, ceil(len / hop)). Periodic Hann window.
// Returns |X_k| for k in [0, window/2].
Tensor<double> stft_magnitude(const AudioClip& clip, const FeatureConfig& config = {});

// Triangular filters on the HTK mel scale spanning 0 Hz to Nyquist, peak 1.
// Shape [bands, window/2 + 1].
Tensor<double> mel_filterbank(const FeatureConfig& config = {});
std::vector<double> mel_center_frequencies(const FeatureConfig& config = {});
double hz_to_mel(double hz);
double mel_to_hz(double mel);

Tensor<float> extract_mel(const AudioClip& clip, const FeatureConfig& config = {});
Tensor<float> extract_energy(const AudioClip& clip, const FeatureConfig& config = {});
Tensor<float> extract_music_features(const AudioClip& clip, const FeatureConfig& config = {});
// All three matrices from one STFT pass.
MusicFeatureClip extract_features(const AudioClip& clip, const FeatureConfig& config = {});

// Building blocks, exposed for tests and the Python module.
std::vector<double> onset_strength(const Tensor<double>& log_mel);
// Windowed (Hann) autocorrelation of the onset envelope around each frame,
// normalised by the lag-0 value; [frames, lags].
Tensor<double> tempogram(std::span<const double> onset, std::size_t lags, std::size_t window);
Tensor<double> chroma(const Tensor<double>& magnitude, const FeatureConfig& config = {});

// Local maxima of the envelope above mean + 1 stddev, keeping the strongest
// peaks at least `min_gap_seconds` apart. Returns sorted frame indices.
std::vector<int> detect_music_beats(std::span<const double> onset_envelope, double frame_rate,
                                    double min_gap_seconds = 0.25);

// Feature cache file. Layout (little-endian):
//   "GTNF" magic, u32 version (1), u64 frames, f64 frame_rate,
//   u32 column count (3), u32 widths[3] = {80, 438, 1},
//   u32 beat count, u32 beat_frames[count],
//   f32 mel[frames*80], f32 music[frames*438], f32 energy[frames]
void save_features(const MusicFeatureClip& features, const std::string& path);
MusicFeatureClip load_features(const std::string& path);

}  // namespace gtnb
