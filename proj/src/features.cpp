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

#include "gtnb/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

#include "gtnb/error.hpp"

namespace gtnb {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Real-to-complex transform of a fixed size, with owned buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void run() { fftw_execute(plan_); }
  double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

std::size_t frame_count(std::size_t samples, std::size_t hop) { return (samples + hop - 1) / hop; }

void require_usable(const AudioClip& clip, const FeatureConfig& config) {
  if (clip.samples.size() < config.window) {
    throw EmptyInputError("audio clip of " + std::to_string(clip.samples.size()) +
                          " samples is shorter than one analysis window (" +
                          std::to_string(config.window) + ")");
  }
  if (clip.sample_rate != config.sample_rate) {
    throw Error("audio clip at " + std::to_string(clip.sample_rate) +
                " Hz, features configured for " + std::to_string(config.sample_rate) + " Hz");
  }
}

Tensor<double> log_mel_from_magnitude(const Tensor<double>& mag, const FeatureConfig& config) {
  const auto fb = mel_filterbank(config);
  const std::size_t frames = mag.rows(), bins = mag.cols();
  Tensor<double> out({frames, config.mel_bands});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t b = 0; b < config.mel_bands; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        const double w = fb.at(b, k);
        if (w != 0.0) acc += w * mag.at(t, k) * mag.at(t, k);
      }
      out.at(t, b) = std::log(std::max(acc, config.log_floor));
    }
  }
  return out;
}

Tensor<float> to_float(const Tensor<double>& t) { return t.cast<float>(); }

std::vector<double> energy_from_magnitude(const Tensor<double>& mag) {
  std::vector<double> e(mag.rows());
  for (std::size_t t = 0; t < mag.rows(); ++t) {
    double acc = 0.0;
    for (double v : mag.row_span(t)) acc += v * v;
    e[t] = std::sqrt(acc);
  }
  return e;
}

Tensor<double> mfcc_from_log_mel(const Tensor<double>& log_mel, std::size_t count) {
  const std::size_t frames = log_mel.rows(), n = log_mel.cols();
  Tensor<double> out({frames, count});
  for (std::size_t k = 0; k < count; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += log_mel.at(t, i) *
               std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
      }
      out.at(t, k) = s * acc;
    }
  }
  return out;
}

// Least-squares slope over a 5-frame window, edges replicated.
Tensor<double> delta(const Tensor<double>& x) {
  const std::size_t frames = x.rows(), cols = x.cols();
  Tensor<double> out({frames, cols});
  const auto at = [&](std::ptrdiff_t t, std::size_t c) {
    const auto clamped = std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(frames) - 1);
    return x.at(static_cast<std::size_t>(clamped), c);
  };
  for (std::size_t t = 0; t < frames; ++t) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    for (std::size_t c = 0; c < cols; ++c) {
      out.at(t, c) = (1.0 * (at(ti + 1, c) - at(ti - 1, c)) + 2.0 * (at(ti + 2, c) - at(ti - 2, c))) /
                     10.0;
    }
  }
  return out;
}

Tensor<double> music_from_parts(const Tensor<double>& mag, const Tensor<double>& log_mel,
                                const FeatureConfig& config, std::vector<int>* beats_out) {
  namespace mc = music_columns;
  const std::size_t frames = mag.rows();
  const auto mfcc = mfcc_from_log_mel(log_mel, mc::kMfccCount);
  const auto dmfcc = delta(mfcc);
  const auto chr = chroma(mag, config);
  const auto onset = onset_strength(log_mel);
  const auto tempo = tempogram(onset, mc::kTempogramCount, config.tempogram_window);
  const auto beats = detect_music_beats(onset, config.frame_rate(), config.beat_min_gap_seconds);

  Tensor<double> out({frames, mc::kWidth});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < mc::kMfccCount; ++c) {
      out.at(t, mc::kMfcc + c) = mfcc.at(t, c);
      out.at(t, mc::kMfccDelta + c) = dmfcc.at(t, c);
    }
    for (std::size_t c = 0; c < mc::kChromaCount; ++c) out.at(t, mc::kChroma + c) = chr.at(t, c);
    for (std::size_t c = 0; c < mc::kTempogramCount; ++c) {
      out.at(t, mc::kTempogram + c) = tempo.at(t, c);
    }
    out.at(t, mc::kOnset) = onset[t];
  }
  for (int b : beats) out.at(static_cast<std::size_t>(b), mc::kBeat) = 1.0;
  if (beats_out) *beats_out = beats;
  return out;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const FeatureConfig& config) {
  const double top = hz_to_mel(config.sample_rate / 2.0);
  std::vector<double> centers(config.mel_bands);
  for (std::size_t b = 0; b < config.mel_bands; ++b) {
    centers[b] = mel_to_hz(top * static_cast<double>(b + 1) /
                           static_cast<double>(config.mel_bands + 1));
  }
  return centers;
}

Tensor<double> mel_filterbank(const FeatureConfig& config) {
  const std::size_t bins = config.window / 2 + 1;
  const double top = hz_to_mel(config.sample_rate / 2.0);
  std::vector<double> edges(config.mel_bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(config.mel_bands + 1));
  }
  Tensor<double> fb({config.mel_bands, bins});
  const double bin_hz = static_cast<double>(config.sample_rate) / static_cast<double>(config.window);
  for (std::size_t b = 0; b < config.mel_bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb.at(b, k) = w;
    }
  }
  return fb;
}

Tensor<double> stft_magnitude(const AudioClip& clip, const FeatureConfig& config) {
  require_usable(clip, config);
  const std::size_t n = config.window, hop = config.hop;
  const std::size_t frames = frame_count(clip.samples.size(), hop);
  const std::size_t bins = n / 2 + 1;
  const auto window = hann_periodic(n);
  RealFft fft(n);
  Tensor<double> mag({frames, bins});
  const auto len = static_cast<std::ptrdiff_t>(clip.samples.size());
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * hop) - static_cast<std::ptrdiff_t>(n / 2);
    double* in = fft.input();
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = start + static_cast<std::ptrdiff_t>(i);
      in[i] = (s >= 0 && s < len) ? window[i] * clip.samples[static_cast<std::size_t>(s)] : 0.0;
    }
    fft.run();
    for (std::size_t k = 0; k < bins; ++k) mag.at(t, k) = std::sqrt(fft.power(k));
  }
  return mag;
}

std::vector<double> onset_strength(const Tensor<double>& log_mel) {
  const std::size_t frames = log_mel.rows(), bands = log_mel.cols();
  std::vector<double> onset(frames, 0.0);
  for (std::size_t t = 1; t < frames; ++t) {
    double acc = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      acc += std::max(0.0, log_mel.at(t, b) - log_mel.at(t - 1, b));
    }
    onset[t] = acc;
  }
  return onset;
}

Tensor<double> tempogram(std::span<const double> onset, std::size_t lags, std::size_t window) {
  if (lags > window) throw Error("tempogram: more lags than window samples");
  const std::size_t frames = onset.size();
  std::size_t n = 1;
  while (n < 2 * window) n <<= 1;
  const auto w = hann_periodic(window);
  RealFft forward(n);
  std::vector<double> power(n / 2 + 1);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  std::vector<double> ac(n);
  fftw_plan inverse;
  {
    std::lock_guard lock(planner_mutex());
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, ac.data(), FFTW_ESTIMATE);
  }
  Tensor<double> out({frames, lags});
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    double* in = forward.input();
    std::fill(in, in + n, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < window; ++i) {
      const auto s = static_cast<std::ptrdiff_t>(t) - half + static_cast<std::ptrdiff_t>(i);
      if (s >= 0 && s < static_cast<std::ptrdiff_t>(frames)) {
        in[i] = w[i] * onset[static_cast<std::size_t>(s)];
        any = any || in[i] != 0.0;
      }
    }
    if (!any) continue;
    forward.run();
    for (std::size_t k = 0; k <= n / 2; ++k) {
      spec[k][0] = forward.power(k);
      spec[k][1] = 0.0;
    }
    fftw_execute(inverse);
    const double zero_lag = ac[0];
    if (!(zero_lag > 0.0)) continue;
    for (std::size_t l = 0; l < lags; ++l) out.at(t, l) = ac[l] / zero_lag;
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(inverse);
  }
  fftw_free(spec);
  return out;
}

Tensor<double> chroma(const Tensor<double>& magnitude, const FeatureConfig& config) {
  const std::size_t frames = magnitude.rows(), bins = magnitude.cols();
  const double bin_hz = static_cast<double>(config.sample_rate) / static_cast<double>(config.window);
  // Bins below A0 are too coarse to carry pitch class.
  constexpr double kMinHz = 27.5;
  std::vector<int> pitch_class(bins, -1);
  for (std::size_t k = 1; k < bins; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < kMinHz) continue;
    const long midi = std::lround(69.0 + 12.0 * std::log2(f / 440.0));
    pitch_class[k] = static_cast<int>(((midi % 12) + 12) % 12);
  }
  Tensor<double> out({frames, 12});
  for (std::size_t t = 0; t < frames; ++t) {
    double acc[12] = {};
    for (std::size_t k = 0; k < bins; ++k) {
      if (pitch_class[k] >= 0) acc[pitch_class[k]] += magnitude.at(t, k) * magnitude.at(t, k);
    }
    const double mx = *std::max_element(acc, acc + 12);
    if (mx > 0.0) {
      for (int c = 0; c < 12; ++c) out.at(t, static_cast<std::size_t>(c)) = acc[c] / mx;
    }
  }
  return out;
}

std::vector<int> detect_music_beats(std::span<const double> env, double frame_rate,
                                    double min_gap_seconds) {
  const std::size_t n = env.size();
  if (n == 0) return {};
  const double mu = std::accumulate(env.begin(), env.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : env) var += (v - mu) * (v - mu);
  const double threshold = mu + std::sqrt(var / static_cast<double>(n));

  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < n; ++t) {
    const bool rises = t == 0 || env[t] > env[t - 1];
    const bool holds = t + 1 == n || env[t] >= env[t + 1];
    if (rises && holds && env[t] > threshold) candidates.push_back(t);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });
  const auto gap = static_cast<std::ptrdiff_t>(std::lround(min_gap_seconds * frame_rate));
  std::vector<int> kept;
  for (auto c : candidates) {
    const auto ci = static_cast<std::ptrdiff_t>(c);
    const bool clear = std::all_of(kept.begin(), kept.end(),
                                   [&](int k) { return std::abs(ci - k) >= gap; });
    if (clear) kept.push_back(static_cast<int>(c));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

Tensor<float> extract_mel(const AudioClip& clip, const FeatureConfig& config) {
  return to_float(log_mel_from_magnitude(stft_magnitude(clip, config), config));
}

Tensor<float> extract_energy(const AudioClip& clip, const FeatureConfig& config) {
  const auto e = energy_from_magnitude(stft_magnitude(clip, config));
  Tensor<float> out({e.size(), 1});
  for (std::size_t t = 0; t < e.size(); ++t) out[t] = static_cast<float>(e[t]);
  return out;
}

Tensor<float> extract_music_features(const AudioClip& clip, const FeatureConfig& config) {
  const auto mag = stft_magnitude(clip, config);
  return to_float(music_from_parts(mag, log_mel_from_magnitude(mag, config), config, nullptr));
}

MusicFeatureClip extract_features(const AudioClip& clip, const FeatureConfig& config) {
  const auto mag = stft_magnitude(clip, config);
  const auto log_mel = log_mel_from_magnitude(mag, config);
  MusicFeatureClip out;
  out.frame_rate = config.frame_rate();
  out.mel = to_float(log_mel);
  out.music = to_float(music_from_parts(mag, log_mel, config, &out.beat_frames));
  const auto e = energy_from_magnitude(mag);
  out.energy = Tensor<float>({e.size(), 1});
  for (std::size_t t = 0; t < e.size(); ++t) out.energy[t] = static_cast<float>(e[t]);
  return out;
}

namespace {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U take(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(U)) throw CorruptionError("feature file truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

}  // namespace

void save_features(const MusicFeatureClip& f, const std::string& path) {
  std::string out = "GTNF";
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, f.frames());
  put<double>(out, f.frame_rate);
  put<std::uint32_t>(out, 3);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.mel.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.music.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.energy.cols()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.beat_frames.size()));
  for (int b : f.beat_frames) put<std::uint32_t>(out, static_cast<std::uint32_t>(b));
  for (const auto* t : {&f.mel, &f.music, &f.energy}) {
    out.append(reinterpret_cast<const char*>(t->ptr()), t->numel() * sizeof(float));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open for writing: " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

MusicFeatureClip load_features(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open feature file: " + path);
  std::ostringstream ss;
  ss << file.rdbuf();
  const std::string in = ss.str();
  if (in.size() < 4 || in.compare(0, 4, "GTNF") != 0) throw FormatError("bad feature file magic");
  std::size_t pos = 4;
  if (take<std::uint32_t>(in, pos) != 1) throw UnsupportedVersionError("feature file version");
  MusicFeatureClip f;
  const auto frames = static_cast<std::size_t>(take<std::uint64_t>(in, pos));
  f.frame_rate = take<double>(in, pos);
  if (take<std::uint32_t>(in, pos) != 3) throw FormatError("feature file column count");
  std::size_t widths[3];
  for (auto& w : widths) w = take<std::uint32_t>(in, pos);
  const auto beats = take<std::uint32_t>(in, pos);
  for (std::uint32_t i = 0; i < beats; ++i) {
    f.beat_frames.push_back(static_cast<int>(take<std::uint32_t>(in, pos)));
  }
  Tensor<float>* targets[3] = {&f.mel, &f.music, &f.energy};
  for (int i = 0; i < 3; ++i) {
    *targets[i] = Tensor<float>({frames, widths[i]});
    const std::size_t bytes = targets[i]->numel() * sizeof(float);
    if (in.size() - pos < bytes) throw CorruptionError("feature file truncated");
    std::memcpy(targets[i]->ptr(), in.data() + pos, bytes);
    pos += bytes;
  }
  return f;
}

}  // namespace gtnb
