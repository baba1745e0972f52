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

#include "gtnb/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "gtnb/error.hpp"
#include "gtnb/genre.hpp"
#include "json.hpp"

namespace gtnb {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

void warn(std::ostream* log, const std::string& clip, const std::string& message) {
  if (!log) return;
  *log << nlohmann::json{{"event", "skip_clip"}, {"clip_id", clip}, {"reason", message}}.dump()
       << '\n';
}

}  // namespace

std::vector<ClipRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::map<std::string, std::size_t> column;
  const auto header = split_tabs(line);
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* required : {"clip_id", "wav_path"}) {
    if (!column.count(required)) {
      throw FormatError(path + ": manifest header lacks column " + std::string(required));
    }
  }
  const fs::path base = fs::path(path).parent_path();
  auto cell = [&](const std::vector<std::string>& row, const char* name) -> std::string {
    const auto it = column.find(name);
    if (it == column.end() || it->second >= row.size()) return {};
    return row[it->second];
  };

  std::vector<ClipRecord> clips;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto row = split_tabs(line);
    ClipRecord rec;
    rec.clip_id = cell(row, "clip_id");
    if (rec.clip_id.empty()) {
      throw FormatError(path + ": line " + std::to_string(line_no) + " has no clip_id");
    }
    rec.wav_path = resolve(base, cell(row, "wav_path"));
    rec.pose_path = resolve(base, cell(row, "pose_path"));
    rec.split = cell(row, "split");
    const std::string code = cell(row, "genre_code");
    if (!code.empty()) rec.genre = GenreLabel::from_code(code).id;
    clips.push_back(std::move(rec));
  }
  return clips;
}

void write_manifest(const std::string& path, const std::vector<ClipRecord>& clips) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path);
  out << "clip_id\tpose_path\twav_path\tgenre_code\tsplit\n";
  for (const auto& c : clips) {
    out << c.clip_id << '\t' << c.pose_path << '\t' << c.wav_path << '\t'
        << (c.genre >= 0 ? std::string(GenreLabel::from_id(c.genre).code()) : std::string())
        << '\t' << c.split << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path);
}

MusicFeatureClip crop_features(const MusicFeatureClip& f, std::size_t frames) {
  if (f.frames() < frames) {
    throw ShapeError("features have " + std::to_string(f.frames()) + " frames, need " +
                     std::to_string(frames));
  }
  auto crop = [frames](const Tensor<float>& t) {
    std::vector<float> data(t.storage().begin(),
                            t.storage().begin() + static_cast<long>(frames * t.cols()));
    return Tensor<float>({frames, t.cols()}, std::move(data));
  };
  MusicFeatureClip out;
  out.mel = crop(f.mel);
  out.music = crop(f.music);
  out.energy = crop(f.energy);
  out.frame_rate = f.frame_rate;
  for (int b : f.beat_frames) {
    if (b >= 0 && static_cast<std::size_t>(b) < frames) out.beat_frames.push_back(b);
  }
  return out;
}

Dataset load_dataset(const std::string& manifest_path, const LoadOptions& options,
                     std::ostream* log) {
  const auto records = read_manifest(manifest_path);
  Dataset data;
  for (const auto& rec : records) {
    if (!options.split.empty() && rec.split != options.split) continue;
    if (options.need_label && rec.genre < 0) {
      throw Error("clip " + rec.clip_id + " has no genre label");
    }
    try {
      Clip clip;
      clip.record = rec;
      const auto audio = load_audio(rec.wav_path, options.features.sample_rate);
      clip.features = crop_features(extract_features(audio, options.features), options.clip_frames);
      if (options.need_pose) {
        if (rec.pose_path.empty()) throw Error("no pose_path");
        clip.pose = crop_pose(read_pose_csv(rec.pose_path), options.clip_frames);
      }
      data.clips.push_back(std::move(clip));
    } catch (const Error& e) {
      warn(log, rec.clip_id, e.what());
      ++data.skipped;
    }
  }
  return data;
}

GenreSignature genre_signature(int genre) {
  const GenreLabel label = GenreLabel::from_id(genre);
  return {110.0 * std::pow(2.0, 0.3 * label.id), 1 + label.id % 4, 80.0 + 8.0 * label.id};
}

AudioClip synth_audio(int genre, double seconds, int sample_rate, double beat_offset, Rng& rng) {
  const auto sig = genre_signature(genre);
  const double pitch = sig.pitch_hz * (1.0 + 0.01 * rng.normal());
  const double beat = 60.0 / sig.bpm;
  const double tone_gain = 0.25 * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double tone = 0.0;
    for (int h = 1; h <= sig.harmonics; ++h) {
      tone += std::sin(2.0 * std::numbers::pi * pitch * h * t) / h;
    }
    double click = 0.0;
    if (t >= beat_offset) {
      const double since = std::fmod(t - beat_offset, beat);
      if (since < 0.03) click = 0.6 * std::exp(-since / 0.008) * rng.uniform(-1.0, 1.0);
    }
    clip.samples[i] = static_cast<float>(tone_gain * tone + click);
  }
  return clip;
}

Tensor<float> rest_pose() {
  using namespace joints;
  Tensor<float> p({1, kPoseWidth});
  auto set = [&](std::size_t j, float x, float y, float z) {
    p[j * 3] = x;
    p[j * 3 + 1] = y;
    p[j * 3 + 2] = z;
  };
  // +x is the body's left, +y up, +z forward; meters, pelvis at the origin.
  set(kPelvis, 0.0f, 0.0f, 0.0f);
  set(kLeftHip, 0.09f, -0.08f, 0.0f);
  set(kRightHip, -0.09f, -0.08f, 0.0f);
  set(kSpine1, 0.0f, 0.11f, 0.0f);
  set(kLeftKnee, 0.10f, -0.47f, 0.0f);
  set(kRightKnee, -0.10f, -0.47f, 0.0f);
  set(kSpine2, 0.0f, 0.24f, 0.0f);
  set(kLeftAnkle, 0.10f, -0.87f, -0.03f);
  set(kRightAnkle, -0.10f, -0.87f, -0.03f);
  set(kSpine3, 0.0f, 0.30f, 0.0f);
  set(kLeftFoot, 0.11f, -0.92f, 0.10f);
  set(kRightFoot, -0.11f, -0.92f, 0.10f);
  set(kNeck, 0.0f, 0.52f, 0.0f);
  set(kLeftCollar, 0.08f, 0.44f, 0.0f);
  set(kRightCollar, -0.08f, 0.44f, 0.0f);
  set(kHead, 0.0f, 0.64f, 0.04f);
  set(kLeftShoulder, 0.18f, 0.46f, 0.0f);
  set(kRightShoulder, -0.18f, 0.46f, 0.0f);
  set(kLeftElbow, 0.45f, 0.46f, 0.0f);
  set(kRightElbow, -0.45f, 0.46f, 0.0f);
  set(kLeftWrist, 0.70f, 0.46f, 0.0f);
  set(kRightWrist, -0.70f, 0.46f, 0.0f);
  set(kLeftHand, 0.78f, 0.46f, 0.0f);
  set(kRightHand, -0.78f, 0.46f, 0.0f);
  return p;
}

namespace {

struct MotionTerm {
  std::vector<std::size_t> joints;
  std::size_t axis;
  double amplitude;  // meters
  double rate;       // direction reversals per beat
};

std::vector<MotionTerm> genre_motion(int genre) {
  using namespace joints;
  const std::vector<std::size_t> left_arm{kLeftElbow, kLeftWrist, kLeftHand};
  const std::vector<std::size_t> right_arm{kRightElbow, kRightWrist, kRightHand};
  const std::vector<std::size_t> left_leg{kLeftKnee, kLeftAnkle, kLeftFoot};
  const std::vector<std::size_t> right_leg{kRightKnee, kRightAnkle, kRightFoot};
  switch (genre) {
    case 0:
      return {{left_arm, 1, 0.25, 1}, {right_arm, 1, 0.25, 1}};
    case 1:
      return {{left_arm, 2, 0.20, 1}};
    case 2:
      return {{right_arm, 2, 0.20, 1}};
    case 3:
      return {{left_leg, 1, 0.08, 1}, {right_leg, 1, 0.08, 1}};
    case 4:
      return {{{kNeck, kHead}, 0, 0.10, 1}};
    case 5:
      return {{left_leg, 0, 0.15, 1}, {right_leg, 0, -0.15, 1}};
    case 6:
      return {{{kLeftWrist, kLeftHand}, 0, 0.20, 2}, {{kRightWrist, kRightHand}, 0, -0.20, 2}};
    case 7:
      return {{left_leg, 2, 0.25, 1}};
    case 8:
      return {{right_leg, 2, 0.25, 1}};
    default:
      return {{{kSpine3, kNeck, kHead, kLeftCollar, kRightCollar, kLeftShoulder, kRightShoulder,
                kLeftElbow, kRightElbow, kLeftWrist, kRightWrist, kLeftHand, kRightHand},
               2, 0.10, 1}};
  }
}

}  // namespace

PoseSequence synth_pose(int genre, std::size_t frames, double beat_offset, Rng& rng) {
  const auto sig = genre_signature(GenreLabel::from_id(genre).id);
  const auto terms = genre_motion(genre);
  const auto rest = rest_pose();
  const double amp_jitter = 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
  const double beats_per_second = sig.bpm / 60.0;
  PoseSequence pose;
  pose.data = Tensor<float>({frames, kPoseWidth});
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / kPoseFps;
    for (std::size_t c = 0; c < kPoseWidth; ++c) pose.data.at(f, c) = rest[c];
    for (const auto& term : terms) {
      // cos(pi * rate * beats) turns around exactly on the beat grid.
      const double phase = std::numbers::pi * term.rate * beats_per_second * (t - beat_offset);
      const double offset = amp_jitter * term.amplitude * std::cos(phase);
      for (std::size_t j : term.joints) {
        pose.data.at(f, j * 3 + term.axis) += static_cast<float>(offset);
      }
    }
  }
  return pose;
}

std::string make_synthetic_corpus(const std::string& out_dir, std::uint64_t seed,
                                  const SyntheticCorpusConfig& config) {
  if (config.test_per_genre > config.clips_per_genre) {
    throw Error("test_per_genre exceeds clips_per_genre");
  }
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "audio", ec);
  fs::create_directories(root / "pose", ec);
  if (ec) throw IoError("cannot create corpus directories under " + out_dir);

  Rng rng(seed);
  const auto frames = static_cast<std::size_t>(std::llround(config.seconds * kPoseFps));
  std::vector<ClipRecord> records;
  for (std::size_t g = 0; g < kGenreCount; ++g) {
    const int genre = static_cast<int>(g);
    const double beat = 60.0 / genre_signature(genre).bpm;
    for (std::size_t i = 0; i < config.clips_per_genre; ++i) {
      ClipRecord rec;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%02zu", std::string(GenreLabel::from_id(genre).code()).c_str(), i);
      rec.clip_id = id;
      rec.genre = genre;
      rec.split = i + config.test_per_genre >= config.clips_per_genre ? "test" : "train";
      rec.wav_path = "audio/" + rec.clip_id + ".wav";
      rec.pose_path = "pose/" + rec.clip_id + ".csv";
      const double offset = rng.uniform(0.0, beat);
      write_wav((root / rec.wav_path).string(),
                synth_audio(genre, config.seconds, config.sample_rate, offset, rng));
      write_pose_csv((root / rec.pose_path).string(), synth_pose(genre, frames, offset, rng));
      records.push_back(std::move(rec));
    }
  }
  const auto manifest = (root / "manifest.tsv").string();
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace gtnb
