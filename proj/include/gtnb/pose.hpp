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

#include <array>
#include <string>

#include "gtnb/tensor.hpp"

namespace gtnb {

inline constexpr std::size_t kJointCount = 24;
inline constexpr std::size_t kPoseWidth = kJointCount * 3;
inline constexpr double kPoseFps = 60.0;

// SMPL joint order.
inline constexpr std::array<const char*, kJointCount> kJointNames{
    "pelvis",     "left_hip",       "right_hip",      "spine1",      "left_knee",
    "right_knee", "spine2",         "left_ankle",     "right_ankle", "spine3",
    "left_foot",  "right_foot",     "neck",           "left_collar", "right_collar",
    "head",       "left_shoulder",  "right_shoulder", "left_elbow",  "right_elbow",
    "left_wrist", "right_wrist",    "left_hand",      "right_hand"};

namespace joints {
inline constexpr std::size_t kPelvis = 0, kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4,
                             kRightKnee = 5, kSpine2 = 6, kLeftAnkle = 7, kRightAnkle = 8,
                             kSpine3 = 9, kLeftFoot = 10, kRightFoot = 11, kNeck = 12,
                             kLeftCollar = 13, kRightCollar = 14, kHead = 15, kLeftShoulder = 16,
                             kRightShoulder = 17, kLeftElbow = 18, kRightElbow = 19,
                             kLeftWrist = 20, kRightWrist = 21, kLeftHand = 22, kRightHand = 23;
}  // namespace joints

// Half-body partition. The lower half keeps the root and the two lowest
// spine joints so that the split is 13 / 11 joints.
inline constexpr std::array<std::size_t, 13> kUpperJoints{9,  12, 13, 14, 15, 16, 17,
                                                          18, 19, 20, 21, 22, 23};
inline constexpr std::array<std::size_t, 11> kLowerJoints{0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11};
inline constexpr std::size_t kUpperWidth = kUpperJoints.size() * 3;
inline constexpr std::size_t kLowerWidth = kLowerJoints.size() * 3;

enum class Half { Upper, Lower };
const char* half_name(Half half);
std::size_t half_width(Half half);

// Root-relative joint positions in meters, one row per frame, columns
// (joint0 x, y, z, joint1 x, ...).
struct PoseSequence {
  Tensor<float> data;  // [frames, 72]
  double fps = kPoseFps;

  std::size_t frames() const { return data.rank() == 2 ? data.rows() : 0; }
};

template <typename T>
struct HalfBody {
  Tensor<T> upper;  // [frames, 39]
  Tensor<T> lower;  // [frames, 33]
};

template <typename T>
HalfBody<T> split_body(const Tensor<T>& pose);
template <typename T>
Tensor<T> merge_body(const Tensor<T>& upper, const Tensor<T>& lower);

// First `frames` rows; error if the sequence is shorter.
PoseSequence crop_pose(const PoseSequence& pose, std::size_t frames);

// CSV with a header row (pelvis_x, pelvis_y, ...), then one row per frame.
// Values are written with 9 significant digits so float data round-trips.
PoseSequence read_pose_csv(const std::string& path);
void write_pose_csv(const std::string& path, const PoseSequence& pose);
std::string pose_csv_header();

}  // namespace gtnb
