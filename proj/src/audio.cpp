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

#include "gtnb/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gtnb/error.hpp"

namespace gtnb {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t u32_at(const std::string& b, std::size_t pos) {
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16_at(const std::string& b, std::size_t pos) {
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + pos);
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

std::int16_t to_pcm16(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0f, -32768.0f, 32767.0f)));
}

}  // namespace

AudioClip decode_wav(const std::string& b, int target_sample_rate) {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_len = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::string id = b.substr(pos, 4);
    const std::size_t len = u32_at(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + 16 > b.size()) throw FormatError("truncated fmt chunk");
      format = u16_at(b, body);
      channels = u16_at(b, body + 2);
      rate = u32_at(b, body + 4);
      block_align = u16_at(b, body + 12);
      bits = u16_at(b, body + 14);
      if (format == kFormatExtensible) {
        if (len < 40 || body + 26 > b.size()) throw FormatError("truncated extensible fmt chunk");
        format = u16_at(b, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_len = std::min(len, b.size() - body);
      have_data = true;
      break;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw FormatError("WAV file lacks fmt or data chunk");
  if (channels == 0 || rate == 0) throw FormatError("WAV header has zero channels or rate");
  const bool pcm_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && bits == 32;
  if (!pcm_ok && !float_ok) {
    throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits); only PCM and 32-bit float are read");
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) throw FormatError("inconsistent block align");
  const std::size_t frames = data_len / block_align;
  if (frames == 0) throw EmptyInputError("WAV file has no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  const auto* p = reinterpret_cast<const unsigned char*>(b.data() + data_pos);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = p + f * block_align + c * bytes_per_sample;
      double v = 0.0;
      if (float_ok) {
        float x;
        std::memcpy(&x, s, 4);
        v = x;
      } else if (bits == 8) {
        v = (static_cast<int>(s[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(s[0] | (s[1] << 8)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = s[0] | (s[1] << 8) | (s[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = x / 8388608.0;
      } else {
        std::int32_t x;
        std::memcpy(&x, s, 4);
        v = x / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[f] = static_cast<float>(acc / channels);
  }
  if (target_sample_rate > 0 && target_sample_rate != clip.sample_rate) {
    clip = resample_linear(clip, target_sample_rate);
  }
  for (auto& s : clip.samples) {
    s = std::isfinite(s) ? std::clamp(s, -1.0f, 1.0f) : 0.0f;
  }
  return clip;
}

AudioClip load_audio(const std::string& path, int target_sample_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_wav(ss.str(), target_sample_rate);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

AudioClip resample_linear(const AudioClip& clip, int target_sample_rate) {
  if (clip.samples.empty()) throw EmptyInputError("cannot resample empty audio");
  if (target_sample_rate <= 0 || clip.sample_rate <= 0) throw Error("invalid sample rate");
  const double ratio = static_cast<double>(clip.sample_rate) / target_sample_rate;
  const auto n = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) / ratio));
  AudioClip out;
  out.sample_rate = target_sample_rate;
  out.samples.resize(n);
  const std::size_t last = clip.samples.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double src = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(src), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double frac = src - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[i0] + frac * clip.samples[i1]);
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const std::vector<std::vector<float>>& channels,
                     int sample_rate) {
  if (channels.empty()) throw EmptyInputError("no channels to write");
  const std::size_t frames = channels.front().size();
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * nch * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, nch);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * nch * 2);
  put_u16(out, static_cast<std::uint16_t>(nch * 2));
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_len);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& ch : channels) put_u16(out, static_cast<std::uint16_t>(to_pcm16(ch.at(f))));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open for writing: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing: " + path);
}

void write_wav(const std::string& path, const AudioClip& clip) {
  write_wav_pcm16(path, {clip.samples}, clip.sample_rate);
}

}  // namespace gtnb
