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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "gtnb/audio.hpp"
#include "gtnb/error.hpp"
#include "gtnb/features.hpp"
#include "gtnb/rng.hpp"

using namespace gtnb;
namespace fs = std::filesystem;
namespace mc = music_columns;

namespace {

constexpr int kRate = 15360;
constexpr double kPi = std::numbers::pi;

template <typename U>
void put(std::string& s, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  s.append(b, sizeof(U));
}

// Minimal RIFF/WAVE writer: `data` holds interleaved sample bytes.
std::string wav_bytes(int format, int channels, int rate, int bits, const std::string& data) {
  std::string s = "RIFF";
  put<std::uint32_t>(s, static_cast<std::uint32_t>(36 + data.size()));
  s += "WAVEfmt ";
  put<std::uint32_t>(s, 16);
  put<std::uint16_t>(s, static_cast<std::uint16_t>(format));
  put<std::uint16_t>(s, static_cast<std::uint16_t>(channels));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(rate));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(rate * channels * bits / 8));
  put<std::uint16_t>(s, static_cast<std::uint16_t>(channels * bits / 8));
  put<std::uint16_t>(s, static_cast<std::uint16_t>(bits));
  s += "data";
  put<std::uint32_t>(s, static_cast<std::uint32_t>(data.size()));
  return s + data;
}

AudioClip sine(double hz, double seconds, double amp = 1.0, double phase = 0.0) {
  AudioClip c;
  c.sample_rate = kRate;
  c.samples.resize(static_cast<std::size_t>(std::lround(seconds * kRate)));
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    c.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * i / kRate + phase));
  return c;
}

AudioClip silence(double seconds) {
  AudioClip c;
  c.sample_rate = kRate;
  c.samples.assign(static_cast<std::size_t>(std::lround(seconds * kRate)), 0.0f);
  return c;
}

// Decaying noise bursts every `period` samples.
AudioClip clicks(std::size_t period, double seconds, std::uint64_t seed) {
  AudioClip c = silence(seconds);
  Rng rng(seed);
  for (std::size_t start = period / 2; start < c.samples.size(); start += period)
    for (std::size_t i = 0; i < 400 && start + i < c.samples.size(); ++i)
      c.samples[start + i] = static_cast<float>(rng.uniform(-1, 1) * std::exp(-static_cast<double>(i) / 60.0));
  return c;
}

// Direct DFT of one centered, periodic-Hann-windowed frame.
std::vector<double> dft_frame(const AudioClip& clip, std::size_t t, std::size_t n, std::size_t hop) {
  std::vector<double> x(n, 0.0);
  const long start = static_cast<long>(t * hop) - static_cast<long>(n / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const long s = start + static_cast<long>(i);
    if (s >= 0 && s < static_cast<long>(clip.samples.size()))
      x[i] = (0.5 - 0.5 * std::cos(2 * kPi * i / n)) * clip.samples[static_cast<std::size_t>(s)];
  }
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -2 * kPi * k * i / n);
    mag[k] = std::abs(acc);
  }
  return mag;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool all_finite(const Tensor<float>& t) {
  for (float v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_CASE("load_audio") {
  const fs::path dir = fs::temp_directory_path() / "gtnb_test_audio";
  fs::create_directories(dir);

  SUBCASE("stereo 44.1 kHz resampled to the feature rate") {
    std::vector<std::vector<float>> ch(2, std::vector<float>(4 * 44100));
    for (std::size_t i = 0; i < ch[0].size(); ++i) {
      ch[0][i] = static_cast<float>(0.5 * std::sin(2 * kPi * 440.0 * i / 44100));
      ch[1][i] = -ch[0][i];
    }
    const auto path = (dir / "stereo.wav").string();
    write_wav_pcm16(path, ch, 44100);
    const auto clip = load_audio(path, kRate);
    CHECK(clip.samples.size() == 61440);
    CHECK(clip.sample_rate == kRate);
    for (float v : clip.samples) CHECK(std::abs(v) <= 1.0f / 32768.0f);  // channels cancel
  }
  SUBCASE("silence") {
    const auto path = (dir / "silent.wav").string();
    write_wav(path, silence(1.0));
    const auto clip = load_audio(path, kRate);
    for (float v : clip.samples) CHECK(v == 0.0f);
  }
  SUBCASE("16-bit full-scale square wave") {
    std::string data;
    for (int i = 0; i < 200; ++i) put<std::int16_t>(data, (i / 10) % 2 ? -32767 : 32767);
    const auto clip = decode_wav(wav_bytes(1, 1, kRate, 16, data), kRate);
    REQUIRE(clip.samples.size() == 200);
    for (int i = 0; i < 200; ++i)
      CHECK(clip.samples[i] == static_cast<float>(((i / 10) % 2 ? -1 : 1) * 32767.0 / 32768.0));
  }
  SUBCASE("8-bit, 24-bit and float formats") {
    std::string d8, d24, d32;
    for (int v : {128, 255, 0, 192}) d8.push_back(static_cast<char>(v));
    for (int v : {0, 4194304, -8388608}) {
      const auto u = static_cast<std::uint32_t>(v);
      d24.push_back(static_cast<char>(u & 0xff));
      d24.push_back(static_cast<char>((u >> 8) & 0xff));
      d24.push_back(static_cast<char>((u >> 16) & 0xff));
    }
    for (float v : {0.25f, -0.75f, 2.0f}) put<float>(d32, v);
    const auto a = decode_wav(wav_bytes(1, 1, kRate, 8, d8), kRate).samples;
    const auto b = decode_wav(wav_bytes(1, 1, kRate, 24, d24), kRate).samples;
    const auto c = decode_wav(wav_bytes(3, 1, kRate, 32, d32), kRate).samples;
    CHECK(a == std::vector<float>{0.0f, 127.0f / 128.0f, -1.0f, 0.5f});
    CHECK(b == std::vector<float>{0.0f, 0.5f, -1.0f});
    CHECK(c == std::vector<float>{0.25f, -0.75f, 1.0f});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(decode_wav("RIFF1234WAVEjunk", kRate), FormatError);
    CHECK_THROWS_AS(decode_wav("ID3 mp3 data here........", kRate), FormatError);
    CHECK_THROWS_AS(decode_wav(wav_bytes(1, 1, kRate, 16, ""), kRate), EmptyInputError);
    CHECK_THROWS_AS(load_audio((dir / "missing.wav").string(), kRate), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("stft matches a direct DFT") {
  const auto clip = sine(1234.5, 1.0, 0.8, 0.3);
  const auto mag = stft_magnitude(clip);
  REQUIRE(mag.rows() == 60);
  REQUIRE(mag.cols() == 513);
  std::size_t agree = 0;
  for (std::size_t t = 0; t < mag.rows(); ++t) {
    const auto oracle = dft_frame(clip, t, 1024, 256);
    agree += argmax(oracle) == argmax(mag.row_span(t)) ? 1 : 0;
    if (t % 13 == 0) {
      const double peak = oracle[argmax(oracle)];
      for (std::size_t k = 0; k < oracle.size(); ++k)
        CHECK(std::abs(mag.at(t, k) - oracle[k]) <= 1e-9 * peak);
    }
  }
  CHECK(agree >= 59);
}

TEST_CASE("mel") {
  SUBCASE("silence hits the log floor") {
    const auto mel = extract_mel(silence(1.0));
    for (float v : mel.values()) CHECK(v == static_cast<float>(std::log(1e-10)));
  }
  SUBCASE("frame count") {
    CHECK(extract_mel(silence(4.0)).rows() == 240);
    auto odd = silence(1.0);
    odd.samples.resize(5000);
    CHECK(extract_mel(odd).rows() == 20);  // ceil(5000 / 256)
  }
  SUBCASE("440 Hz lands in the band centred nearest 440 Hz") {
    const double top = 2595.0 * std::log10(1.0 + 7680.0 / 700.0);
    std::size_t best = 0;
    double best_d = 1e9;
    for (std::size_t b = 0; b < 80; ++b) {
      const double c = 700.0 * (std::pow(10.0, top * (b + 1) / 81.0 / 2595.0) - 1.0);
      if (std::abs(c - 440.0) < best_d) best_d = std::abs(c - 440.0), best = b;
    }
    const auto mel = extract_mel(sine(440.0, 2.0));
    for (std::size_t t = 2; t + 2 < mel.rows(); ++t) {
      std::vector<double> row(mel.row_span(t).begin(), mel.row_span(t).end());
      CHECK(argmax(row) == best);
    }
    CHECK(std::abs(mel_center_frequencies()[best] - 440.0) == doctest::Approx(best_d));
  }
  SUBCASE("too short") {
    auto c = silence(1.0);
    c.samples.resize(1000);
    CHECK_THROWS_AS(extract_mel(c), EmptyInputError);
  }
}

TEST_CASE("energy") {
  const auto quiet = extract_energy(silence(1.0));
  for (float v : quiet.values()) CHECK(v == 0.0f);
  const auto e = extract_energy(sine(700.0, 2.0));
  const auto e2 = extract_energy(sine(700.0, 2.0, 2.0));
  float lo = 1e30f, hi = 0.0f;
  for (std::size_t t = 4; t + 4 < e.rows(); ++t) lo = std::min(lo, e[t]), hi = std::max(hi, e[t]);
  CHECK(hi / lo < 1.01f);
  for (std::size_t t = 0; t < e.rows(); ++t) {
    CHECK(e[t] >= 0.0f);
    CHECK(e2[t] == doctest::Approx(2.0 * e[t]).epsilon(1e-5));
  }
}

TEST_CASE("music features") {
  SUBCASE("width and silence") {
    const auto m = extract_music_features(silence(2.0));
    CHECK(m.cols() == 438);
    for (std::size_t t = 0; t < m.rows(); ++t) {
      CHECK(m.at(t, mc::kOnset) == 0.0f);
      CHECK(m.at(t, mc::kBeat) == 0.0f);
    }
  }
  SUBCASE("2 Hz clicks peak at the 30-frame lag") {
    const auto clip = clicks(kRate / 2, 8.0, 3);
    const auto f = extract_features(clip);
    const std::size_t t = f.frames() / 2;
    std::size_t best = 10;
    for (std::size_t lag = 10; lag < 50; ++lag)
      if (f.music.at(t, mc::kTempogram + lag) > f.music.at(t, mc::kTempogram + best)) best = lag;
    CHECK(best == 30);
  }
  SUBCASE("tempogram equals a brute-force windowed autocorrelation") {
    Rng rng(8);
    std::vector<double> onset(300);
    for (auto& v : onset) v = rng.uniform() < 0.2 ? rng.uniform(0, 5) : 0.0;
    const std::size_t window = 64, lags = 40;
    const auto tg = tempogram(onset, lags, window);
    for (std::size_t t : {0u, 17u, 150u, 299u}) {
      std::vector<double> x(window, 0.0);
      for (std::size_t i = 0; i < window; ++i) {
        const long s = static_cast<long>(t) - 32 + static_cast<long>(i);
        if (s >= 0 && s < 300) x[i] = (0.5 - 0.5 * std::cos(2 * kPi * i / window)) * onset[s];
      }
      double zero = 0.0;
      for (double v : x) zero += v * v;
      for (std::size_t l = 0; l < lags; ++l) {
        double acc = 0.0;
        for (std::size_t i = 0; i + l < window; ++i) acc += x[i] * x[i + l];
        CHECK(tg.at(t, l) == doctest::Approx(zero > 0 ? acc / zero : 0.0).scale(1e-9));
      }
    }
  }
  SUBCASE("gain behaviour") {
    const auto clip = clicks(kRate / 3, 3.0, 5);
    AudioClip quiet = clip;
    for (auto& v : quiet.samples) v *= 0.25f;
    const auto a = extract_music_features(clip), b = extract_music_features(quiet);
    double onset_a = 0, onset_b = 0;
    for (std::size_t t = 0; t < a.rows(); ++t) {
      for (std::size_t c = 0; c < mc::kChromaCount; ++c)
        CHECK(a.at(t, mc::kChroma + c) == doctest::Approx(b.at(t, mc::kChroma + c)).epsilon(1e-4));
      onset_a += a.at(t, mc::kOnset);
      onset_b += b.at(t, mc::kOnset);
    }
    CHECK(onset_a >= onset_b);
  }
  SUBCASE("finite on arbitrary input") {
    Rng rng(1);
    AudioClip c = silence(1.5);
    for (auto& v : c.samples) v = static_cast<float>(rng.uniform(-1, 1) * (rng.uniform() < 0.5));
    const auto f = extract_features(c);
    CHECK(all_finite(f.mel));
    CHECK(all_finite(f.music));
    CHECK(all_finite(f.energy));
    CHECK(f.mel.rows() == 90);
    CHECK(f.music.rows() == 90);
    CHECK(f.energy.rows() == 90);
    CHECK(f.frame_rate == 60.0);
  }
}

TEST_CASE("music beats") {
  std::vector<double> zeros(200, 0.0);
  CHECK(detect_music_beats(zeros, 60.0).empty());
  std::vector<double> pulses(240, 0.0);
  for (std::size_t t = 15; t < 240; t += 30) pulses[t] = 1.0;
  CHECK(detect_music_beats(pulses, 60.0) == std::vector<int>{15, 45, 75, 105, 135, 165, 195, 225});
  std::vector<double> one(100, 0.0);
  one[40] = 3.0;
  CHECK(detect_music_beats(one, 60.0) == std::vector<int>{40});

  const auto f = extract_features(clicks(kRate / 2, 4.0, 9));
  for (std::size_t i = 1; i < f.beat_frames.size(); ++i)
    CHECK(f.beat_frames[i] > f.beat_frames[i - 1]);
  for (int b : f.beat_frames) {
    CHECK(b >= 0);
    CHECK(static_cast<std::size_t>(b) < f.frames());
    CHECK(f.music.at(static_cast<std::size_t>(b), mc::kBeat) == 1.0f);
  }
  CHECK(f.beat_frames.size() >= 6);
}

TEST_CASE("feature cache round trip") {
  const auto f = extract_features(clicks(kRate / 2, 2.0, 4));
  const auto path = (fs::temp_directory_path() / "gtnb_test_features.gtnf").string();
  save_features(f, path);
  const auto g = load_features(path);
  CHECK(g.mel == f.mel);
  CHECK(g.music == f.music);
  CHECK(g.energy == f.energy);
  CHECK(g.beat_frames == f.beat_frames);
  CHECK(g.frame_rate == f.frame_rate);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  CHECK(bytes.substr(0, 4) == "GTNF");
  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_features(path), CorruptionError);
  fs::remove(path);
}
