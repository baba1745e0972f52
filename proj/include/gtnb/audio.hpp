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

#include <string>
#include <vector>

namespace gtnb {

// Mono audio with samples in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a PCM WAV file (8/16/24/32-bit integer or 32-bit float, any channel
// count), averages channels, linearly resamples to `target_sample_rate` and
// clamps to [-1, 1]. Integer samples are scaled by 1 / 2^(bits - 1).
AudioClip load_audio(const std::string& path, int target_sample_rate);
AudioClip decode_wav(const std::string& bytes, int target_sample_rate);

// Writes 16-bit PCM mono.
void write_wav(const std::string& path, const AudioClip& clip);
// Interleaved multi-channel 16-bit writer, mainly for tests.
void write_wav_pcm16(const std::string& path, const std::vector<std::vector<float>>& channels,
                     int sample_rate);

// Output length is round(len * target / source).
AudioClip resample_linear(const AudioClip& clip, int target_sample_rate);

}  // namespace gtnb
