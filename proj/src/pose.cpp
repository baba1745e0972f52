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

#include "gtnb/pose.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gtnb/error.hpp"

namespace gtnb {

const char* half_name(Half half) { return half == Half::Upper ? "upper" : "lower"; }

std::size_t half_width(Half half) { return half == Half::Upper ? kUpperWidth : kLowerWidth; }

namespace {

template <typename T, std::size_t N>
Tensor<T> gather_joints(const Tensor<T>& pose, const std::array<std::size_t, N>& ids) {
  const std::size_t frames = pose.rows();
  Tensor<T> out({frames, N * 3});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t j = 0; j < N; ++j) {
      for (std::size_t a = 0; a < 3; ++a) out.at(f, j * 3 + a) = pose.at(f, ids[j] * 3 + a);
    }
  }
  return out;
}

template <typename T, std::size_t N>
void scatter_joints(const Tensor<T>& half, const std::array<std::size_t, N>& ids, Tensor<T>& pose) {
  for (std::size_t f = 0; f < half.rows(); ++f) {
    for (std::size_t j = 0; j < N; ++j) {
      for (std::size_t a = 0; a < 3; ++a) pose.at(f, ids[j] * 3 + a) = half.at(f, j * 3 + a);
    }
  }
}

}  // namespace

template <typename T>
HalfBody<T> split_body(const Tensor<T>& pose) {
  if (pose.rank() != 2 || pose.cols() != kPoseWidth) {
    throw ShapeError("pose must be [frames, 72], got " + shape_str(pose.shape()));
  }
  return {gather_joints(pose, kUpperJoints), gather_joints(pose, kLowerJoints)};
}

template <typename T>
Tensor<T> merge_body(const Tensor<T>& upper, const Tensor<T>& lower) {
  if (upper.rank() != 2 || lower.rank() != 2 || upper.cols() != kUpperWidth ||
      lower.cols() != kLowerWidth || upper.rows() != lower.rows()) {
    throw ShapeError("cannot merge halves " + shape_str(upper.shape()) + " and " +
                     shape_str(lower.shape()));
  }
  Tensor<T> pose({upper.rows(), kPoseWidth});
  scatter_joints(upper, kUpperJoints, pose);
  scatter_joints(lower, kLowerJoints, pose);
  return pose;
}

template HalfBody<float> split_body(const Tensor<float>&);
template HalfBody<double> split_body(const Tensor<double>&);
template Tensor<float> merge_body(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> merge_body(const Tensor<double>&, const Tensor<double>&);

PoseSequence crop_pose(const PoseSequence& pose, std::size_t frames) {
  if (pose.frames() < frames) {
    throw ShapeError("pose has " + std::to_string(pose.frames()) + " frames, need " +
                     std::to_string(frames));
  }
  std::vector<float> data(pose.data.storage().begin(),
                          pose.data.storage().begin() + static_cast<long>(frames * kPoseWidth));
  return {Tensor<float>({frames, kPoseWidth}, std::move(data)), pose.fps};
}

std::string pose_csv_header() {
  std::string header;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (const char* axis : {"_x", "_y", "_z"}) {
      if (!header.empty()) header += ',';
      header += kJointNames[j];
      header += axis;
    }
  }
  return header;
}

PoseSequence read_pose_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": missing header row");
  std::vector<float> data;
  std::size_t frames = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t cols = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc() || ptr != comma || !std::isfinite(v)) {
        throw FormatError(path + ": bad value on data row " + std::to_string(frames + 1));
      }
      data.push_back(v);
      ++cols;
      p = comma + 1;
    }
    if (cols != kPoseWidth) {
      throw FormatError(path + ": row " + std::to_string(frames + 1) + " has " +
                        std::to_string(cols) + " columns, expected 72");
    }
    ++frames;
  }
  if (frames == 0) throw EmptyInputError(path + ": no pose frames");
  return {Tensor<float>({frames, kPoseWidth}, std::move(data)), kPoseFps};
}

void write_pose_csv(const std::string& path, const PoseSequence& pose) {
  if (pose.data.rank() != 2 || pose.data.cols() != kPoseWidth) {
    throw ShapeError("pose must be [frames, 72], got " + shape_str(pose.data.shape()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write pose file " + path);
  out << pose_csv_header() << '\n';
  char buf[32];
  for (std::size_t f = 0; f < pose.frames(); ++f) {
    for (std::size_t c = 0; c < kPoseWidth; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(pose.data.at(f, c)));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing pose file " + path);
}

}  // namespace gtnb
