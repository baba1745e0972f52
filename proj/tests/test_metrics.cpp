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
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gtnb/audio.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/error.hpp"
#include "gtnb/metrics.hpp"
#include "gtnb/rng.hpp"

using namespace gtnb;
namespace fs = std::filesystem;

namespace {

PoseSequence repeat(const std::vector<float>& frame, std::size_t frames) {
  PoseSequence p;
  p.data = Tensor<float>({frames, kPoseWidth});
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t c = 0; c < kPoseWidth; ++c) p.data.at(f, c) = frame[c];
  return p;
}

// Hand-written T-pose, independent of the corpus generator.
std::vector<float> t_pose() {
  std::vector<float> p(kPoseWidth, 0.0f);
  auto set = [&](std::size_t j, float x, float y, float z) {
    p[j * 3] = x, p[j * 3 + 1] = y, p[j * 3 + 2] = z;
  };
  using namespace joints;
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

std::vector<double> indicator(std::initializer_list<std::size_t> on) {
  std::vector<double> v(kGeometricDim, 0.0);
  for (auto i : on) v[i] = 1.0;
  return v;
}

// 2x2 PSD: Tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)).
double fid_2d_oracle(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b) {
  struct M { double m0, m1, c00, c01, c11; };
  auto stats = [](const std::vector<FeatureVector>& s) {
    M r{0, 0, 0, 0, 0};
    for (const auto& v : s) r.m0 += v[0], r.m1 += v[1];
    r.m0 /= s.size(), r.m1 /= s.size();
    for (const auto& v : s) {
      r.c00 += (v[0] - r.m0) * (v[0] - r.m0);
      r.c01 += (v[0] - r.m0) * (v[1] - r.m1);
      r.c11 += (v[1] - r.m1) * (v[1] - r.m1);
    }
    const double n1 = s.size() - 1.0;
    r.c00 = r.c00 / n1 + 1e-6, r.c01 /= n1, r.c11 = r.c11 / n1 + 1e-6;
    return r;
  };
  const M x = stats(a), y = stats(b);
  const double p00 = x.c00 * y.c00 + x.c01 * y.c01, p11 = x.c01 * y.c01 + x.c11 * y.c11;
  const double det = (x.c00 * x.c11 - x.c01 * x.c01) * (y.c00 * y.c11 - y.c01 * y.c01);
  const double cross = std::sqrt(p00 + p11 + 2.0 * std::sqrt(det));
  return (x.m0 - y.m0) * (x.m0 - y.m0) + (x.m1 - y.m1) * (x.m1 - y.m1) + x.c00 + x.c11 + y.c00 +
         y.c11 - 2.0 * cross;
}

PoseSequence oscillation(std::size_t frames, double hz, std::size_t joint, double amp) {
  PoseSequence p = repeat(t_pose(), frames);
  for (std::size_t f = 0; f < frames; ++f)
    p.data.at(f, joint * 3) += static_cast<float>(amp * std::cos(2.0 * M_PI * hz * f / 60.0));
  return p;
}

}  // namespace

TEST_CASE("kinetic features") {
  const auto rest = t_pose();
  SUBCASE("static pose is zero") {
    for (double v : kinetic_features(repeat(rest, 10))) CHECK(v == 0.0);
  }
  SUBCASE("one unit per frame along x") {
    PoseSequence p = repeat(std::vector<float>(kPoseWidth, 0.0f), 5);
    for (std::size_t f = 0; f < 5; ++f) p.data.at(f, 3 * 4) = static_cast<float>(f);
    const auto k = kinetic_features(p);
    for (std::size_t c = 0; c < kPoseWidth; ++c) CHECK(k[c] == (c == 12 ? 3600.0 : 0.0));
  }
  SUBCASE("quadratic in amplitude, translation invariant") {
    Rng rng(3);
    PoseSequence a = repeat(std::vector<float>(kPoseWidth, 0.0f), 30);
    PoseSequence b = a, shifted = a;
    for (std::size_t i = 0; i < a.data.numel(); ++i) {
      // Multiples of 2^-10 keep doubling and the offset exact in float.
      const float v = static_cast<float>(std::floor(rng.uniform(-256, 256))) / 1024.0f;
      a.data[i] = v;
      b.data[i] = 2.0f * v;
      shifted.data[i] = v + 0.5f;
    }
    const auto ka = kinetic_features(a), kb = kinetic_features(b),
               ks = kinetic_features(shifted);
    for (std::size_t c = 0; c < kPoseWidth; ++c) {
      CHECK(kb[c] == doctest::Approx(4.0 * ka[c]).epsilon(1e-12));
      CHECK(ks[c] == ka[c]);
      CHECK(ka[c] >= 0.0);
    }
  }
  SUBCASE("single frame is an error") {
    CHECK_THROWS_AS(kinetic_features(repeat(rest, 1)), EmptyInputError);
  }
}

TEST_CASE("geometric predicate table") {
  const auto& table = geometric_predicates();
  REQUIRE(table.size() == kGeometricDim);
  CHECK(table[0].name == "left_wrist_above_head");
  CHECK(table[0].joint_a == joints::kLeftWrist);
  CHECK(table[0].joint_b == joints::kHead);
  CHECK(table[31].kind == PredicateKind::Fast);
  CHECK_THROWS_AS(parse_predicate_table("h\nx\tsideways\tpelvis\thead\t0\n"), FormatError);
  CHECK_THROWS_AS(parse_predicate_table("h\nx\tabove\ttail\thead\t0\n"), FormatError);
}

TEST_CASE("geometric features by hand") {
  SUBCASE("static T-pose") {
    // arms out (16, 17) and wrists 1.4 m apart (24)
    CHECK(geometric_features(repeat(t_pose(), 7)) == indicator({16, 17, 24}));
  }
  SUBCASE("static arms-up pose") {
    auto p = t_pose();
    using namespace joints;
    for (auto [j, x, y] : {std::tuple{kLeftWrist, 0.18f, 1.0f}, {kRightWrist, -0.18f, 1.0f},
                           {kLeftHand, 0.18f, 1.08f}, {kRightHand, -0.18f, 1.08f}}) {
      p[j * 3] = x, p[j * 3 + 1] = y, p[j * 3 + 2] = 0.0f;
    }
    // wrists above head and shoulders (0-3), hands 2 m from the feet (26, 27)
    CHECK(geometric_features(repeat(p, 4)) == indicator({0, 1, 2, 3, 26, 27}));
  }
  SUBCASE("range and time reversal") {
    Rng rng(11);
    auto synth = synth_pose(6, 150, 0.1, rng);
    PoseSequence reversed = synth;
    const std::size_t n = synth.frames();
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t c = 0; c < kPoseWidth; ++c)
        reversed.data.at(f, c) = synth.data.at(n - 1 - f, c);
    const auto g = geometric_features(synth), r = geometric_features(reversed);
    const auto& table = geometric_predicates();
    for (std::size_t i = 0; i < kGeometricDim; ++i) {
      CHECK(g[i] >= 0.0);
      CHECK(g[i] <= 1.0);
      if (!is_velocity_predicate(table[i].kind)) CHECK(g[i] == r[i]);
    }
    CHECK(g[28] > 0.0);  // wrists swing fast
  }
}

TEST_CASE("fid") {
  SUBCASE("1-D closed form") {
    std::vector<FeatureVector> a{{-1}, {0}, {1}}, b{{2}, {3}, {4}};
    CHECK(std::abs(fid(a, b) - 9.0) < 1e-6);
    std::vector<FeatureVector> c{{0}, {2}, {4}};  // variance 4
    const double s1 = std::sqrt(1.0 + 1e-6), s2 = std::sqrt(4.0 + 1e-6);
    CHECK(std::abs(fid(a, c) - (4.0 + s1 * s1 + s2 * s2 - 2 * s1 * s2)) < 1e-6);
  }
  SUBCASE("identity, symmetry and 2-D oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<FeatureVector> a, b;
      for (int i = 0; i < 6; ++i) a.push_back({rng.normal() * 3, rng.normal() + rng.uniform()});
      for (int i = 0; i < 9; ++i) b.push_back({rng.normal() + 1, rng.normal() * 0.5});
      CHECK(fid(a, a) <= 1e-8);
      CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-10);
      CHECK(fid(a, b) == doctest::Approx(fid_2d_oracle(a, b)).epsilon(1e-9));
    }
  }
  SUBCASE("identity on kinetic-sized sets") {
    Rng rng(9);
    std::vector<FeatureVector> a;
    for (int i = 0; i < 20; ++i) {
      FeatureVector v(kKineticDim);
      for (auto& x : v) x = 100.0 * rng.uniform();
      a.push_back(v);
    }
    CHECK(fid(a, a) <= 1e-8);
  }
  SUBCASE("errors") {
    std::vector<FeatureVector> one{{1.0}}, two{{1.0}, {2.0}}, wide{{1.0, 2.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(fid(one, two), EmptyInputError);
    CHECK_THROWS_AS(fid(two, wide), ShapeError);
  }
}

TEST_CASE("diversity") {
  std::vector<FeatureVector> same{{1, 2}, {1, 2}, {1, 2}};
  CHECK(diversity(same) == 0.0);
  CHECK(diversity(std::vector<FeatureVector>{{0}, {2.5}}) == 2.5);
  CHECK(diversity(std::vector<FeatureVector>{{0}, {1}, {2}}) == doctest::Approx(4.0 / 3.0));
  CHECK_THROWS_AS(diversity(std::vector<FeatureVector>{{0}}), EmptyInputError);

  Rng rng(21);
  for (std::size_t n : {2u, 7u, 50u}) {
    std::vector<FeatureVector> set;
    for (std::size_t i = 0; i < n; ++i) {
      FeatureVector v(kGeometricDim);
      for (auto& x : v) x = rng.uniform();
      set.push_back(v);
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t k = 0; k < kGeometricDim; ++k)
          sq += (set[i][k] - set[j][k]) * (set[i][k] - set[j][k]);
        sum += std::sqrt(sq);
        ++pairs;
      }
    CHECK(diversity(set) == sum / pairs);
  }
}

TEST_CASE("motion beats") {
  SUBCASE("static and constant velocity give none") {
    CHECK(detect_motion_beats(repeat(t_pose(), 100)).empty());
    PoseSequence p = repeat(t_pose(), 100);
    for (std::size_t f = 0; f < 100; ++f) p.data.at(f, 3 * joints::kLeftWrist) += 0.01f * f;
    CHECK(detect_motion_beats(p).empty());
    CHECK(detect_motion_beats(repeat(t_pose(), 2)).empty());
  }
  SUBCASE("oscillation reverses at the analytic turning points") {
    for (double hz : {1.0, 0.8, 1.5}) {
      const std::size_t frames = 300;
      const auto beats = detect_motion_beats(oscillation(frames, hz, joints::kRightWrist, 0.3));
      std::vector<double> turns;
      for (int k = 1;; ++k) {
        const double frame = k * 60.0 / (2.0 * hz);
        if (frame >= frames - 1) break;
        turns.push_back(frame);
      }
      REQUIRE(beats.size() == turns.size());
      for (std::size_t i = 0; i < turns.size(); ++i) CHECK(std::abs(beats[i] - turns[i]) <= 1.0);
    }
  }
  SUBCASE("minimum separation") {
    // 4 Hz reversals are 7.5 frames apart, closer than 0.25 s
    const auto beats = detect_motion_beats(oscillation(240, 4.0, joints::kLeftAnkle, 0.05));
    REQUIRE(!beats.empty());
    for (std::size_t i = 1; i < beats.size(); ++i) CHECK(beats[i] - beats[i - 1] >= 15);
  }
}

TEST_CASE("beat align score") {
  std::vector<int> music{10, 40, 70};
  CHECK(beat_align_score(music, music) == 1.0);
  std::vector<int> one{20}, off{23};
  CHECK(std::abs(beat_align_score(one, off, 3.0) - 0.606530659712633) < 1e-9);
  CHECK(beat_align_score(music, std::vector<int>{}) == 0.0);
  CHECK_THROWS_AS(beat_align_score(std::vector<int>{}, music), EmptyInputError);

  double previous = 2.0;
  for (int shift = 0; shift < 15; ++shift) {
    std::vector<int> motion;
    for (int b : music) motion.push_back(b + shift);
    const double s = beat_align_score(music, motion);
    CHECK(s <= previous);
    CHECK(s >= 0.0);
    previous = s;
  }
}

TEST_CASE("evaluate_suite") {
  const fs::path root = fs::temp_directory_path() / "gtnb_test_eval";
  fs::remove_all(root);
  fs::create_directories(root / "gen");
  fs::create_directories(root / "ref");
  Rng rng(2);
  for (int g = 0; g < 4; ++g) {
    const double offset = 0.1 * g;
    const auto pose = synth_pose(g, 240, offset, rng);
    const std::string stem = "clip" + std::to_string(g);
    write_pose_csv((root / "ref" / (stem + ".csv")).string(), pose);
    write_pose_csv((root / "gen" / (stem + ".csv")).string(), pose);
    write_wav((root / "gen" / (stem + ".wav")).string(), synth_audio(g, 4.0, 15360, offset, rng));
  }
  std::ofstream(root / "gen" / "broken.csv") << "not,a,pose\n1,2\n";

  const auto json_path = (root / "report.json").string();
  const auto csv_path = (root / "report.csv").string();
  EvalConfig config;
  const auto self = evaluate_suite((root / "ref").string(), (root / "ref").string(), config);
  CHECK(self.fid_k <= 1e-8);
  CHECK(self.fid_g <= 1e-8);
  CHECK(self.bas_clips == 0);

  const auto r = evaluate_suite((root / "gen").string(), (root / "ref").string(), config,
                                json_path, csv_path);
  CHECK(r.clips == 4);
  CHECK(r.skipped == 1);
  CHECK(r.bas_clips == 4);
  CHECK(r.bas > 0.3);  // motion reverses on the audio beat grid
  CHECK(r.bas <= 1.0);
  CHECK(r.fid_k <= 1e-8);
  CHECK(r.div_k > 0.0);

  std::ifstream in(json_path);
  const auto j = nlohmann::json::parse(in);
  for (const char* key : {"fid_k", "fid_g", "div_k", "div_g", "bas"}) CHECK(j.contains(key));
  CHECK(j["clips"] == 4);
  CHECK(j["config_hash"].get<std::string>().size() == 16);

  evaluate_suite((root / "gen").string(), (root / "ref").string(), config, {}, csv_path);
  std::ifstream csv(csv_path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == report_csv_header());
  CHECK(lines[1] == lines[2]);
  fs::remove_all(root);
}
