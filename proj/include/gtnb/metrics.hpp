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
#include <span>
#include <string>
#include <vector>

#include "gtnb/config.hpp"
#include "gtnb/pose.hpp"

namespace gtnb {

inline constexpr std::size_t kKineticDim = kPoseWidth;
inline constexpr std::size_t kGeometricDim = 32;

using FeatureVector = std::vector<double>;

// Per joint-axis mean squared velocity, (m/s)^2.
FeatureVector kinetic_features(const PoseSequence& pose);

enum class PredicateKind { Above, InFront, Behind, Lateral, Near, Far, Fast };

struct GeometricPredicate {
  std::string name;
  PredicateKind kind;
  std::size_t joint_a;
  std::size_t joint_b;
  double threshold;
};

// The table in data/geometric_predicates.tsv, compiled into the library.
const std::vector<GeometricPredicate>& geometric_predicates();
std::vector<GeometricPredicate> parse_predicate_table(const std::string& text);
bool is_velocity_predicate(PredicateKind kind);

// Fraction of frames on which each predicate holds.
FeatureVector geometric_features(const PoseSequence& pose);

double fid(std::span<const FeatureVector> a, std::span<const FeatureVector> b);
double diversity(std::span<const FeatureVector> set);

// Local minima of the summed joint speed, at least `min_gap_seconds` apart.
std::vector<int> detect_motion_beats(const PoseSequence& pose, double min_gap_seconds = 0.25);

double beat_align_score(std::span<const int> music_beats, std::span<const int> motion_beats,
                        double sigma = 3.0);

struct EvalConfig {
  double crop_seconds = 20.0;
  double bas_sigma = 3.0;      // frames
  double beat_gap_seconds = 0.25;
};

void put_config(ConfigMap& map, const EvalConfig& config);
// Missing eval.* keys keep their defaults.
EvalConfig eval_config_from(const ConfigMap& map);

struct EvalReport {
  double fid_k = 0.0;
  double fid_g = 0.0;
  double div_k = 0.0;
  double div_g = 0.0;
  double bas = 0.0;
  std::size_t clips = 0;            // generated clips evaluated
  std::size_t reference_clips = 0;
  std::size_t bas_clips = 0;        // generated clips with music beats
  std::size_t skipped = 0;
  std::uint64_t config_hash = 0;
};

// Every *.csv pose file in each directory is evaluated, cropped to
// `crop_seconds`. Music beats for BAS come from <stem>.wav next to the
// generated pose or from the "music" path in its <stem>.json sidecar.
// Writes the report to `report_json` and appends a row to `report_csv`
// when the paths are non-empty.
EvalReport evaluate_suite(const std::string& generated_dir, const std::string& reference_dir,
                          const EvalConfig& config, const std::string& report_json = {},
                          const std::string& report_csv = {});

std::string report_to_json(const EvalReport& report);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);

}  // namespace gtnb
