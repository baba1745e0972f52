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

#include "gtnb/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "gtnb/audio.hpp"
#include "gtnb/config.hpp"
#include "gtnb/error.hpp"
#include "gtnb/features.hpp"

namespace gtnb {

extern const char* const kGeometricPredicateTable;

namespace {

namespace fs = std::filesystem;
using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

void check_pose(const PoseSequence& pose) {
  if (pose.data.rank() != 2 || pose.data.cols() != kPoseWidth)
    throw ShapeError("pose must be [frames, 72]");
  if (!(pose.fps > 0.0)) throw NumericError("pose fps must be positive");
}

double coord(const PoseSequence& pose, std::size_t frame, std::size_t joint, std::size_t axis) {
  return static_cast<double>(pose.data.at(frame, joint * 3 + axis));
}

std::size_t joint_index(const std::string& name) {
  for (std::size_t j = 0; j < kJointCount; ++j)
    if (name == kJointNames[j]) return j;
  throw FormatError("unknown joint '" + name + "' in predicate table");
}

PredicateKind predicate_kind(const std::string& name) {
  if (name == "above") return PredicateKind::Above;
  if (name == "in_front") return PredicateKind::InFront;
  if (name == "behind") return PredicateKind::Behind;
  if (name == "lateral") return PredicateKind::Lateral;
  if (name == "near") return PredicateKind::Near;
  if (name == "far") return PredicateKind::Far;
  if (name == "fast") return PredicateKind::Fast;
  throw FormatError("unknown predicate kind '" + name + "'");
}

bool holds(const GeometricPredicate& p, const PoseSequence& pose, std::size_t f) {
  const std::size_t a = p.joint_a, b = p.joint_b;
  auto d = [&](std::size_t frame, std::size_t axis) {
    return coord(pose, frame, a, axis) - coord(pose, frame, b, axis);
  };
  auto dist = [&](std::size_t frame) {
    return std::sqrt(d(frame, 0) * d(frame, 0) + d(frame, 1) * d(frame, 1) +
                     d(frame, 2) * d(frame, 2));
  };
  switch (p.kind) {
    case PredicateKind::Above: return d(f, 1) > p.threshold;
    case PredicateKind::InFront: return d(f, 2) > p.threshold;
    case PredicateKind::Behind: return -d(f, 2) > p.threshold;
    case PredicateKind::Lateral: return std::abs(d(f, 0)) > p.threshold;
    case PredicateKind::Near: return dist(f) < p.threshold;
    case PredicateKind::Far: return dist(f) > p.threshold;
    case PredicateKind::Fast: {
      const std::size_t n = pose.frames();
      if (n < 2) return false;
      const std::size_t f0 = f + 1 < n ? f : f - 1;
      double sq = 0.0;
      for (std::size_t axis = 0; axis < 3; ++axis) {
        const double v = (d(f0 + 1, axis) - d(f0, axis)) * pose.fps;
        sq += v * v;
      }
      return std::sqrt(sq) > p.threshold;
    }
  }
  return false;
}

void check_set(std::span<const FeatureVector> set, const char* what) {
  if (set.size() < 2) throw EmptyInputError(std::string(what) + " needs at least 2 vectors");
  const std::size_t dim = set.front().size();
  if (dim == 0) throw ShapeError(std::string(what) + ": empty feature vectors");
  for (const auto& v : set)
    if (v.size() != dim) throw ShapeError(std::string(what) + ": feature dimension mismatch");
}

void moments(std::span<const FeatureVector> set, LVector& mean, LMatrix& cov) {
  const std::size_t n = set.size(), dim = set.front().size();
  mean = LVector::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& v : set)
    for (std::size_t i = 0; i < dim; ++i) mean(i) += static_cast<long double>(v[i]);
  mean /= static_cast<long double>(n);
  cov = LMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  LVector c(static_cast<Eigen::Index>(dim));
  for (const auto& v : set) {
    for (std::size_t i = 0; i < dim; ++i) c(i) = static_cast<long double>(v[i]) - mean(i);
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<long double>(n - 1);
  cov.diagonal().array() += 1e-6L;
}

LMatrix psd_sqrt(const LMatrix& m) {
  Eigen::SelfAdjointEigenSolver<LMatrix> eig(m);
  LVector root = eig.eigenvalues().unaryExpr([](long double x) { return x > 0 ? std::sqrt(x) : 0.0L; });
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<fs::path> pose_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

void warn_skip(const fs::path& path, const std::string& reason) {
  std::clog << nlohmann::json{{"event", "skip_clip"}, {"path", path.string()}, {"reason", reason}}
                   .dump()
            << '\n';
}

std::optional<fs::path> music_for(const fs::path& pose_path) {
  fs::path wav = pose_path;
  wav.replace_extension(".wav");
  if (fs::exists(wav)) return wav;
  fs::path sidecar = pose_path;
  sidecar.replace_extension(".json");
  if (!fs::exists(sidecar)) return std::nullopt;
  std::ifstream in(sidecar);
  const auto meta = nlohmann::json::parse(in, nullptr, false);
  if (meta.is_discarded() || !meta.contains("music") || !meta["music"].is_string())
    return std::nullopt;
  fs::path music = meta["music"].get<std::string>();
  if (music.is_relative()) music = sidecar.parent_path() / music;
  if (!fs::exists(music)) return std::nullopt;
  return music;
}

struct ClipFeatures {
  FeatureVector kinetic, geometric;
  PoseSequence pose;
};

std::vector<ClipFeatures> load_clips(const std::string& dir, const EvalConfig& config,
                                     std::vector<fs::path>& paths, std::size_t& skipped) {
  std::vector<ClipFeatures> out;
  std::vector<fs::path> kept;
  for (const auto& path : pose_files(dir)) {
    try {
      PoseSequence pose = read_pose_csv(path.string());
      const auto limit = static_cast<std::size_t>(std::llround(config.crop_seconds * pose.fps));
      if (pose.frames() > limit) pose = crop_pose(pose, limit);
      ClipFeatures clip{kinetic_features(pose), geometric_features(pose), std::move(pose)};
      out.push_back(std::move(clip));
      kept.push_back(path);
    } catch (const std::exception& e) {
      warn_skip(path, e.what());
      ++skipped;
    }
  }
  paths = std::move(kept);
  return out;
}

}  // namespace

void put_config(ConfigMap& map, const EvalConfig& config) {
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  map["eval.crop_seconds"] = num(config.crop_seconds);
  map["eval.bas_sigma"] = num(config.bas_sigma);
  map["eval.beat_gap_seconds"] = num(config.beat_gap_seconds);
}

EvalConfig eval_config_from(const ConfigMap& map) {
  EvalConfig c;
  auto get = [&](const char* key, double& out) {
    const auto it = map.find(key);
    if (it == map.end()) return;
    std::istringstream in(it->second);
    double v = 0;
    if (!(in >> v) || !(in >> std::ws).eof() || !std::isfinite(v)) {
      throw FormatError(std::string("configuration key ") + key + " is not a number: " + it->second);
    }
    out = v;
  };
  get("eval.crop_seconds", c.crop_seconds);
  get("eval.bas_sigma", c.bas_sigma);
  get("eval.beat_gap_seconds", c.beat_gap_seconds);
  if (c.crop_seconds <= 0 || c.bas_sigma <= 0 || c.beat_gap_seconds < 0) {
    throw Error("eval settings must be positive");
  }
  return c;
}

FeatureVector kinetic_features(const PoseSequence& pose) {
  check_pose(pose);
  const std::size_t n = pose.frames();
  if (n < 2) throw EmptyInputError("kinetic features need at least 2 frames");
  FeatureVector out(kKineticDim, 0.0);
  for (std::size_t f = 0; f + 1 < n; ++f)
    for (std::size_t c = 0; c < kPoseWidth; ++c) {
      const double v =
          (static_cast<double>(pose.data.at(f + 1, c)) - static_cast<double>(pose.data.at(f, c))) *
          pose.fps;
      out[c] += v * v;
    }
  for (double& x : out) x /= static_cast<double>(n - 1);
  return out;
}

std::vector<GeometricPredicate> parse_predicate_table(const std::string& text) {
  std::vector<GeometricPredicate> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream row(line);
    std::string name, kind, a, b;
    double threshold = 0.0;
    if (!(row >> name >> kind >> a >> b >> threshold))
      throw FormatError("bad predicate row: " + line);
    out.push_back({name, predicate_kind(kind), joint_index(a), joint_index(b), threshold});
  }
  return out;
}

const std::vector<GeometricPredicate>& geometric_predicates() {
  static const std::vector<GeometricPredicate> table = [] {
    auto t = parse_predicate_table(kGeometricPredicateTable);
    if (t.size() != kGeometricDim) throw FormatError("predicate table must have 32 rows");
    return t;
  }();
  return table;
}

bool is_velocity_predicate(PredicateKind kind) { return kind == PredicateKind::Fast; }

FeatureVector geometric_features(const PoseSequence& pose) {
  check_pose(pose);
  const auto& table = geometric_predicates();
  FeatureVector out(table.size(), 0.0);
  const std::size_t n = pose.frames();
  if (n == 0) return out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::size_t count = 0;
    for (std::size_t f = 0; f < n; ++f) count += holds(table[i], pose, f) ? 1 : 0;
    out[i] = static_cast<double>(count) / static_cast<double>(n);
  }
  return out;
}

double fid(std::span<const FeatureVector> a, std::span<const FeatureVector> b) {
  check_set(a, "fid");
  check_set(b, "fid");
  if (a.front().size() != b.front().size()) throw ShapeError("fid: feature dimension mismatch");
  LVector mean_a, mean_b;
  LMatrix cov_a, cov_b;
  moments(a, mean_a, cov_a);
  moments(b, mean_b, cov_b);
  // Tr sqrt(Sa^1/2 Sb Sa^1/2) = nuclear norm of Sa^1/2 Sb^1/2.
  const LMatrix product = psd_sqrt(cov_a) * psd_sqrt(cov_b);
  const long double cross = Eigen::JacobiSVD<LMatrix>(product).singularValues().sum();
  const long double value =
      (mean_a - mean_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0L * cross;
  return static_cast<double>(std::max(value, 0.0L));
}

double diversity(std::span<const FeatureVector> set) {
  check_set(set, "diversity");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < set[i].size(); ++k) {
        const double d = set[i][k] - set[j][k];
        sq += d * d;
      }
      sum += std::sqrt(sq);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

std::vector<int> detect_motion_beats(const PoseSequence& pose, double min_gap_seconds) {
  check_pose(pose);
  const std::size_t n = pose.frames();
  if (n < 3) return {};
  std::vector<double> speed(n, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t lo = f == 0 ? 0 : f - 1, hi = f + 1 < n ? f + 1 : f;
    const double scale = pose.fps / static_cast<double>(hi - lo);
    for (std::size_t j = 0; j < kJointCount; ++j) {
      double sq = 0.0;
      for (std::size_t axis = 0; axis < 3; ++axis) {
        const double v = (coord(pose, hi, j, axis) - coord(pose, lo, j, axis)) * scale;
        sq += v * v;
      }
      speed[f] += std::sqrt(sq);
    }
  }
  const double tol = 1e-3 * *std::max_element(speed.begin(), speed.end()) + 1e-9;
  // Runs of equal speed (within tol) count as one point; a run is a minimum
  // when both neighbours are strictly higher.
  std::vector<std::pair<double, int>> minima;
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end + 1 < n && std::abs(speed[end + 1] - speed[end]) <= tol) ++end;
    if (start > 0 && end + 1 < n && speed[start - 1] > speed[start] + tol &&
        speed[end + 1] > speed[end] + tol) {
      minima.emplace_back(speed[(start + end) / 2], static_cast<int>((start + end) / 2));
    }
    start = end + 1;
  }
  std::sort(minima.begin(), minima.end());
  const double gap = min_gap_seconds * pose.fps;
  std::vector<int> kept;
  for (const auto& [value, frame] : minima) {
    bool clear = true;
    for (int k : kept)
      if (std::abs(k - frame) < gap) clear = false;
    if (clear) kept.push_back(frame);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

double beat_align_score(std::span<const int> music_beats, std::span<const int> motion_beats,
                        double sigma) {
  if (music_beats.empty()) throw EmptyInputError("beat_align_score needs music beats");
  if (!(sigma > 0.0)) throw NumericError("sigma must be positive");
  if (motion_beats.empty()) return 0.0;
  double sum = 0.0;
  for (int b : music_beats) {
    double best = std::numeric_limits<double>::infinity();
    for (int d : motion_beats) best = std::min(best, std::abs(static_cast<double>(d - b)));
    sum += std::exp(-(best * best) / (2.0 * sigma * sigma));
  }
  return sum / static_cast<double>(music_beats.size());
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["fid_k"] = r.fid_k;
  j["fid_g"] = r.fid_g;
  j["div_k"] = r.div_k;
  j["div_g"] = r.div_g;
  j["bas"] = r.bas;
  j["clips"] = r.clips;
  j["reference_clips"] = r.reference_clips;
  j["bas_clips"] = r.bas_clips;
  j["skipped"] = r.skipped;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
  j["config_hash"] = hash;
  return j.dump(2);
}

std::string report_csv_header() {
  return "fid_k,fid_g,div_k,div_g,bas,clips,reference_clips,bas_clips,skipped,config_hash";
}

std::string report_csv_row(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%zu,%zu,%zu,%016llx", r.fid_k,
                r.fid_g, r.div_k, r.div_g, r.bas, r.clips, r.reference_clips, r.bas_clips,
                r.skipped, static_cast<unsigned long long>(r.config_hash));
  return buf;
}

EvalReport evaluate_suite(const std::string& generated_dir, const std::string& reference_dir,
                          const EvalConfig& config, const std::string& report_json,
                          const std::string& report_csv) {
  if (!(config.crop_seconds > 0.0)) throw NumericError("crop_seconds must be positive");
  EvalReport report;
  ConfigMap map;
  put_config(map, config);
  report.config_hash = config_hash(map);
  std::vector<fs::path> gen_paths, ref_paths;
  auto gen = load_clips(generated_dir, config, gen_paths, report.skipped);
  auto ref = load_clips(reference_dir, config, ref_paths, report.skipped);
  report.clips = gen.size();
  report.reference_clips = ref.size();
  if (gen.size() < 2 || ref.size() < 2)
    throw EmptyInputError("evaluation needs at least 2 readable clips in each directory");

  std::vector<FeatureVector> gk, gg, rk, rg;
  for (const auto& c : gen) gk.push_back(c.kinetic), gg.push_back(c.geometric);
  for (const auto& c : ref) rk.push_back(c.kinetic), rg.push_back(c.geometric);
  report.fid_k = fid(gk, rk);
  report.fid_g = fid(gg, rg);
  report.div_k = diversity(gk);
  report.div_g = diversity(gg);

  FeatureConfig features;
  double bas_sum = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const auto music = music_for(gen_paths[i]);
    if (!music) continue;
    try {
      const auto clip = extract_features(load_audio(music->string(), features.sample_rate),
                                         features);
      std::vector<int> beats;
      for (int b : clip.beat_frames)
        if (static_cast<std::size_t>(b) < gen[i].pose.frames()) beats.push_back(b);
      if (beats.empty()) continue;
      const auto motion = detect_motion_beats(gen[i].pose, config.beat_gap_seconds);
      bas_sum += beat_align_score(beats, motion, config.bas_sigma);
      ++report.bas_clips;
    } catch (const std::exception& e) {
      warn_skip(*music, e.what());
    }
  }
  report.bas = report.bas_clips ? bas_sum / static_cast<double>(report.bas_clips) : 0.0;

  if (!report_json.empty()) {
    std::ofstream out(report_json);
    if (!out) throw IoError("cannot write " + report_json);
    out << report_to_json(report) << '\n';
  }
  if (!report_csv.empty()) {
    const bool fresh = !fs::exists(report_csv) || fs::file_size(report_csv) == 0;
    std::ofstream out(report_csv, std::ios::app);
    if (!out) throw IoError("cannot write " + report_csv);
    if (fresh) out << report_csv_header() << '\n';
    out << report_csv_row(report) << '\n';
  }
  return report;
}

}  // namespace gtnb
