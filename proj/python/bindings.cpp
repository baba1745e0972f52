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
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "gtnb/audio.hpp"
#include "gtnb/checkpoint.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/error.hpp"
#include "gtnb/features.hpp"
#include "gtnb/genre.hpp"
#include "gtnb/metrics.hpp"
#include "gtnb/pose.hpp"

namespace py = pybind11;
using namespace gtnb;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

PoseSequence pose_from(const FloatArray& array) {
  if (array.ndim() != 2 || array.shape(1) != static_cast<py::ssize_t>(kPoseWidth)) {
    throw ShapeError("pose must be a [frames, 72] array");
  }
  PoseSequence pose;
  pose.data = Tensor<float>({static_cast<std::size_t>(array.shape(0)), kPoseWidth},
                            std::vector<float>(array.data(), array.data() + array.size()));
  return pose;
}

std::vector<FeatureVector> vectors_from(const DoubleArray& array) {
  if (array.ndim() != 2) throw ShapeError("expected a [count, dim] array");
  std::vector<FeatureVector> out;
  const auto dim = static_cast<std::size_t>(array.shape(1));
  for (py::ssize_t i = 0; i < array.shape(0); ++i) {
    out.emplace_back(array.data() + i * dim, array.data() + (i + 1) * dim);
  }
  return out;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["fid_k"] = r.fid_k;
  d["fid_g"] = r.fid_g;
  d["div_k"] = r.div_k;
  d["div_g"] = r.div_g;
  d["bas"] = r.bas;
  d["clips"] = r.clips;
  d["reference_clips"] = r.reference_clips;
  d["bas_clips"] = r.bas_clips;
  d["skipped"] = r.skipped;
  d["config_hash"] = r.config_hash;
  return d;
}

std::vector<const char*> argv_of(const std::vector<std::string>& args, std::vector<std::string>& keep) {
  keep = args;
  keep.insert(keep.begin(), "gtnb");
  std::vector<const char*> argv;
  for (const auto& a : keep) argv.push_back(a.c_str());
  return argv;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Genre-conditioned music-to-dance generation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
  py::register_exception<UnsupportedVersionError>(m, "UnsupportedVersionError", format.ptr());
  py::register_exception<CorruptionError>(m, "CorruptionError", format.ptr());
  py::register_exception<StageMismatchError>(m, "StageMismatchError", base.ptr());

  std::vector<std::string> codes(kGenreCodes.begin(), kGenreCodes.end());
  m.attr("GENRES") = codes;
  m.attr("POSE_WIDTH") = kPoseWidth;
  m.attr("MUSIC_WIDTH") = music_columns::kWidth;

  m.def("load_audio", [](const std::string& path, int sample_rate) {
    const auto clip = load_audio(path, sample_rate);
    return py::array_t<float>(static_cast<py::ssize_t>(clip.samples.size()), clip.samples.data());
  }, py::arg("path"), py::arg("sample_rate") = 15360,
     "Mono float samples of a WAV file, resampled to `sample_rate`.");

  m.def("extract_features", [](const FloatArray& samples, int sample_rate) {
    AudioClip clip;
    clip.samples.assign(samples.data(), samples.data() + samples.size());
    clip.sample_rate = sample_rate;
    FeatureConfig config;
    config.sample_rate = sample_rate;
    const auto f = extract_features(clip, config);
    py::dict d;
    d["mel"] = to_numpy(f.mel);
    d["music"] = to_numpy(f.music);
    d["energy"] = to_numpy(f.energy);
    d["beat_frames"] = f.beat_frames;
    d["frame_rate"] = f.frame_rate;
    return d;
  }, py::arg("samples"), py::arg("sample_rate") = 15360,
     "Log-mel, 438-wide music features, energy and beat frames.");

  m.def("read_pose_csv", [](const std::string& path) { return to_numpy(read_pose_csv(path).data); });
  m.def("write_pose_csv", [](const std::string& path, const FloatArray& pose) {
    write_pose_csv(path, pose_from(pose));
  });

  m.def("kinetic_features", [](const FloatArray& pose) { return kinetic_features(pose_from(pose)); });
  m.def("geometric_features", [](const FloatArray& pose) { return geometric_features(pose_from(pose)); });
  m.def("detect_motion_beats", [](const FloatArray& pose, double min_gap) {
    return detect_motion_beats(pose_from(pose), min_gap);
  }, py::arg("pose"), py::arg("min_gap_seconds") = 0.25);
  m.def("fid", [](const DoubleArray& a, const DoubleArray& b) {
    return fid(vectors_from(a), vectors_from(b));
  }, "Frechet distance between the Gaussians fitted to two [count, dim] sets.");
  m.def("diversity", [](const DoubleArray& a) { return diversity(vectors_from(a)); },
        "Mean pairwise Euclidean distance.");
  m.def("beat_align_score", [](const std::vector<int>& music, const std::vector<int>& motion,
                               double sigma) { return beat_align_score(music, motion, sigma); },
        py::arg("music_beats"), py::arg("motion_beats"), py::arg("sigma") = 3.0);

  m.def("evaluate_suite", [](const std::string& generated, const std::string& reference,
                             const std::string& report_json, const std::string& report_csv) {
    EvalReport r;
    {
      py::gil_scoped_release release;
      r = evaluate_suite(generated, reference, EvalConfig{}, report_json, report_csv);
    }
    return report_dict(r);
  }, py::arg("generated_dir"), py::arg("reference_dir"), py::arg("report_json") = "",
     py::arg("report_csv") = "");

  m.def("make_synthetic_corpus", [](const std::string& out_dir, std::uint64_t seed,
                                    std::size_t clips_per_genre, std::size_t test_per_genre) {
    SyntheticCorpusConfig config;
    config.clips_per_genre = clips_per_genre;
    config.test_per_genre = test_per_genre;
    py::gil_scoped_release release;
    return make_synthetic_corpus(out_dir, seed, config);
  }, py::arg("out_dir"), py::arg("seed"), py::arg("clips_per_genre") = 8,
     py::arg("test_per_genre") = 2, "Writes the synthetic corpus; returns the manifest path.");

  m.def("load_checkpoint", [](const std::string& path) {
    const auto ckpt = load_checkpoint(path);
    py::dict d;
    d["stage"] = ckpt.stage;
    d["epoch"] = ckpt.epoch;
    d["config_hash"] = ckpt.config_hash;
    d["frozen"] = ckpt.frozen;
    d["metadata"] = ckpt.metadata;
    py::dict tensors;
    for (const auto& [name, t] : ckpt.tensors) tensors[py::str(name)] = to_numpy(t);
    d["tensors"] = tensors;
    return d;
  });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> keep;
    const auto argv = argv_of(args, keep);
    py::gil_scoped_release release;
    return cli::run(static_cast<int>(argv.size()), argv.data(), std::cout, std::cerr);
  }, py::arg("args"), "Runs the gtnb command line; returns the exit code.");

  m.def("cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> keep;
    const auto argv = argv_of(args, keep);
    std::ostringstream out, log;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cli::run(static_cast<int>(argv.size()), argv.data(), out, log);
    }
    return py::make_tuple(code, out.str(), log.str());
  }, py::arg("args"), "Runs the gtnb command line; returns (exit code, stdout, JSON log).");
}
