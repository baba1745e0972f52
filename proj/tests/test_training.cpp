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

#include "gtnb/checkpoint.hpp"
#include "gtnb/config.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/error.hpp"
#include "gtnb/training.hpp"

using namespace gtnb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "gtnb_test_training_corpus";
    fs::remove_all(d);
    make_synthetic_corpus(d.string(), 7);
    return d;
  }();
  return dir;
}

const Dataset& corpus() {
  static const Dataset data = [] {
    LoadOptions opt;
    opt.need_pose = true;
    opt.need_label = true;
    return load_dataset((corpus_dir() / "manifest.tsv").string(), opt);
  }();
  return data;
}

// One clip of each of the first `genres` genres.
std::vector<Clip> few_clips(std::size_t genres) {
  std::vector<Clip> out;
  for (const auto& c : corpus().clips)
    if (static_cast<std::size_t>(c.record.genre) < genres &&
        (out.empty() || out.back().record.genre != c.record.genre))
      out.push_back(c);
  return out;
}

GtnConfig toy_gtn() {
  GtnConfig c;
  c.channels = {4, 4};
  c.width = 8;
  return c;
}

VqConfig toy_vq() {
  VqConfig c;
  c.codebook_size = 16;
  c.code_dim = 8;
  c.hidden = 8;
  c.warmup_epochs = 1;
  return c;
}

GptConfig toy_gpt() {
  GptConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.blocks = 1;
  c.codebook_size = 16;
  return c;
}

StageConfig stage(const char* name, std::uint32_t epochs, std::uint64_t seed = 3) {
  auto s = default_stage_config(name);
  s.epochs = epochs;
  s.seed = seed;
  return s;
}

struct Prereqs {
  ModelCheckpoint gtn, vq;
};

const Prereqs& prereqs() {
  static const Prereqs p = [] {
    const auto clips = few_clips(4);
    Prereqs r;
    r.gtn = pretrain_gtn(clips, toy_gtn(), FeatureConfig{}, stage(kStageGtnPretrain, 2));
    r.vq = train_vqvae(clips, toy_vq(), stage(kStageVqvae, 2));
    return r;
  }();
  return p;
}

StageConfig framework_stage(std::uint32_t epochs, std::uint32_t freeze) {
  auto s = stage(kStageFramework, epochs);
  s.freeze_epoch = freeze;
  s.batch_size = 2;
  return s;
}

std::map<std::string, Tensor<float>> with_prefix(const ModelCheckpoint& c, const std::string& p) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& [k, v] : c.tensors)
    if (k.starts_with(p)) out.emplace(k, v);
  return out;
}

double mean_gtn_loss(const GenreTokenNetwork<float>& gtn, const std::vector<Clip>& clips) {
  std::vector<GenreInference<float>> inf;
  std::vector<int> labels;
  for (const auto& c : clips) {
    inf.push_back(gtn.forward(c.features.mel));
    labels.push_back(c.record.genre);
  }
  return gtn_loss<float>(inf, labels).item();
}

ModelCheckpoint random_checkpoint(std::uint64_t seed) {
  Rng rng(seed);
  ModelCheckpoint c;
  c.stage = kStageVqvae;
  c.config_hash = 0x0123456789abcdefULL;
  c.epoch = 17;
  c.rng_state = rng.state();
  c.frozen = {"gtn", "vq.norm"};
  c.metadata = {{"a.b", "1"}, {"gpt.d_model", "64"}, {"empty", ""}};
  for (const char* name : {"x.weight", "x.bias", "y"}) {
    Tensor<float> t({1 + static_cast<std::size_t>(rng.uniform() * 5), 3});
    for (auto& v : t.values()) v = static_cast<float>(rng.normal());
    c.tensors[name] = t;
  }
  c.tensors["scalar"] = Tensor<float>({1}, std::vector<float>{-0.0f});
  c.optimizer_step = 9;
  c.first_moment["y"] = c.tensors["y"];
  c.second_moment["y"] = c.tensors["y"];
  return c;
}

}  // namespace

TEST_CASE("synthetic corpus") {
  const auto& dir = corpus_dir();
  const auto records = read_manifest((dir / "manifest.tsv").string());
  REQUIRE(records.size() == 80);
  std::size_t poses = 0, test = 0;
  for (const auto& entry : fs::directory_iterator(dir / "pose")) poses += entry.path().extension() == ".csv";
  for (const auto& r : records) test += r.split == "test";
  CHECK(poses == 80);
  CHECK(test == 20);
  CHECK(records.front().clip_id == "gBR_00");
  CHECK(records.front().genre == 0);
  CHECK(corpus().clips.size() == 80);
  CHECK(corpus().skipped == 0);

  SUBCASE("deterministic per seed") {
    SyntheticCorpusConfig small;
    small.clips_per_genre = 2;
    small.test_per_genre = 1;
    const fs::path tmp = fs::temp_directory_path();
    for (const char* d : {"gtnb_corpus_a", "gtnb_corpus_b", "gtnb_corpus_c"}) fs::remove_all(tmp / d);
    make_synthetic_corpus((tmp / "gtnb_corpus_a").string(), 7, small);
    make_synthetic_corpus((tmp / "gtnb_corpus_b").string(), 7, small);
    make_synthetic_corpus((tmp / "gtnb_corpus_c").string(), 8, small);
    for (const char* f : {"manifest.tsv", "audio/gKR_01.wav", "pose/gKR_01.csv"}) {
      const bool same = slurp(tmp / "gtnb_corpus_a" / f) == slurp(tmp / "gtnb_corpus_b" / f);
      CHECK(same);
    }
    const bool differs = slurp(tmp / "gtnb_corpus_a/audio/gKR_01.wav") !=
                         slurp(tmp / "gtnb_corpus_c/audio/gKR_01.wav");
    CHECK(differs);
    for (const char* d : {"gtnb_corpus_a", "gtnb_corpus_b", "gtnb_corpus_c"}) fs::remove_all(tmp / d);
  }
  SUBCASE("genres separate in mel space") {
    // Leave-one-out nearest centroid on the time-averaged log mel.
    const auto& clips = corpus().clips;
    std::vector<std::vector<double>> means;
    for (const auto& c : clips) {
      std::vector<double> m(80, 0.0);
      for (std::size_t t = 0; t < c.features.mel.rows(); ++t)
        for (std::size_t b = 0; b < 80; ++b) m[b] += c.features.mel.at(t, b) / c.features.mel.rows();
      means.push_back(m);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      int best = -1;
      double best_d = 1e300;
      for (int g = 0; g < 10; ++g) {
        std::vector<double> centroid(80, 0.0);
        double n = 0;
        for (std::size_t j = 0; j < clips.size(); ++j) {
          if (j == i || clips[j].record.genre != g) continue;
          for (std::size_t b = 0; b < 80; ++b) centroid[b] += means[j][b];
          n += 1;
        }
        double d = 0;
        for (std::size_t b = 0; b < 80; ++b) d += std::pow(centroid[b] / n - means[i][b], 2);
        if (d < best_d) best_d = d, best = g;
      }
      correct += best == clips[i].record.genre;
    }
    CHECK(static_cast<double>(correct) / clips.size() >= 0.99);
  }
}

TEST_CASE("manifest and dataset loading") {
  const fs::path dir = fs::temp_directory_path() / "gtnb_test_manifest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto src = corpus_dir();
  {
    std::ofstream m(dir / "manifest.tsv");
    m << "split\tgenre_code\twav_path\tclip_id\tpose_path\n";
    m << "train\tBR\t" << (src / "audio/gBR_00.wav").string() << "\ta\t" << (src / "pose/gBR_00.csv").string() << "\n";
    m << "train\tgJB\t" << (src / "audio/gJB_03.wav").string() << "\tb\t" << (src / "pose/gJB_03.csv").string() << "\n";
    m << "test\tgLO\tmissing.wav\tc\tmissing.csv\n";
  }
  const auto records = read_manifest((dir / "manifest.tsv").string());
  REQUIRE(records.size() == 3);
  CHECK(records[0].genre == 0);
  CHECK(records[1].genre == 9);
  CHECK(records[2].wav_path == (dir / "missing.wav").string());

  std::ostringstream log;
  LoadOptions opt;
  opt.need_pose = true;
  const auto all = load_dataset((dir / "manifest.tsv").string(), opt, &log);
  CHECK(all.clips.size() == 2);
  CHECK(all.skipped == 1);
  CHECK(log.str().find("\"skip_clip\"") != std::string::npos);
  CHECK(all.clips[0].features.frames() == 240);
  CHECK(all.clips[0].pose.frames() == 240);
  opt.split = "test";
  CHECK(load_dataset((dir / "manifest.tsv").string(), opt).clips.empty());

  write_manifest((dir / "copy.tsv").string(), records);
  const auto copy = read_manifest((dir / "copy.tsv").string());
  CHECK(copy[1].clip_id == "b");
  CHECK(copy[1].genre == 9);
  CHECK(copy[1].split == "train");

  std::ofstream(dir / "bad.tsv") << "clip_id\tgenre_code\nx\tgXX\n";
  CHECK_THROWS_AS(read_manifest((dir / "bad.tsv").string()), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint format") {
  const auto ckpt = random_checkpoint(4);
  const auto bytes = encode_checkpoint(ckpt);
  CHECK(bytes.substr(0, 4) == "GTNB");
  CHECK(decode_checkpoint(bytes) == ckpt);
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);

  const auto path = (fs::temp_directory_path() / "gtnb_test.ckpt").string();
  save_checkpoint(ckpt, path);
  CHECK(load_checkpoint(path) == ckpt);
  CHECK(load_checkpoint(path, kStageVqvae) == ckpt);
  CHECK_THROWS_AS(load_checkpoint(path, kStageGtnPretrain), StageMismatchError);

  std::string v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_AS(decode_checkpoint(v2), UnsupportedVersionError);
  for (std::size_t cut : {std::size_t{4}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), CorruptionError);
  std::string junk = bytes;
  junk[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(junk), FormatError);
  CHECK_THROWS_AS(load_checkpoint(path + ".missing"), IoError);
  fs::remove(path);
}

TEST_CASE("config maps") {
  StageConfig s = default_stage_config(kStageFramework);
  CHECK(s.epochs == 400);
  CHECK(s.freeze_epoch == 90);
  CHECK(s.alpha == 1.0);
  CHECK(s.beta == 0.001);
  CHECK(default_stage_config(kStageGtnPretrain).epochs == 250);
  CHECK(default_stage_config(kStageVqvae).epochs == 500);
  s.seed = 99;
  s.learning_rate = 1e-3;
  ConfigMap m;
  put_config(m, s);
  const auto back = stage_config_from(m);
  CHECK(back.seed == 99);
  CHECK(back.learning_rate == 1e-3);
  CHECK(back.freeze_epoch == 90);

  ConfigMap g;
  put_config(g, toy_gtn());
  CHECK(gtn_config_from(g).channels == toy_gtn().channels);
  CHECK(gtn_config_from(g).width == 8);
  ConfigMap g2 = g;
  CHECK(config_hash(g) == config_hash(g2));
  g2["gtn.width"] = "9";
  CHECK(config_hash(g) != config_hash(g2));

  for (int which = 0; which < 4; ++which) {
    auto c = default_stage_config(kStageFramework);
    if (which == 0) c.epochs = 0;
    if (which == 1) c.freeze_epoch = 500;
    if (which == 2) c.alpha = -1;
    if (which == 3) c.clip_frames = 100;
    CHECK_THROWS_AS(c.validate(), Error);
  }
}

TEST_CASE("gtn pretraining") {
  const auto clips = few_clips(4);
  auto st = stage(kStageGtnPretrain, 1);
  TrainLog log;
  std::ostringstream stream;
  log.stream = &stream;
  const auto ckpt = pretrain_gtn(clips, toy_gtn(), FeatureConfig{}, st, {&log});
  CHECK(ckpt.stage == kStageGtnPretrain);
  CHECK(ckpt.epoch == 1);
  REQUIRE(log.epochs.size() == 1);
  CHECK(stream.str().find("\"epoch\":1") != std::string::npos);

  nn::ParameterStore<float> fresh_store, trained_store;
  Rng init(st.seed);
  GenreTokenNetwork<float> fresh(fresh_store, toy_gtn(), init);
  const auto trained = gtn_from_checkpoint(ckpt, trained_store);
  CHECK(mean_gtn_loss(trained, clips) < mean_gtn_loss(fresh, clips));

  auto unlabeled = clips;
  unlabeled[1].record.genre = -1;
  CHECK_THROWS_AS(pretrain_gtn(unlabeled, toy_gtn(), FeatureConfig{}, st), Error);
  CHECK_THROWS_AS(pretrain_gtn({}, toy_gtn(), FeatureConfig{}, st), EmptyInputError);
}

TEST_CASE("embedding export") {
  const auto clips = few_clips(4);
  const auto path = (fs::temp_directory_path() / "gtnb_test_embeddings.csv").string();
  export_embeddings(prereqs().gtn, clips, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.starts_with("clip_id,genre_code,w0,"));
  CHECK(line.ends_with(",e7"));
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    REQUIRE(cells.size() == 2 + 10 + 8);
    CHECK(cells[1] == GenreLabel::from_id(clips[rows].record.genre).code());
    double sum = 0;
    for (int k = 0; k < 10; ++k) sum += std::stod(cells[2 + k]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    ++rows;
  }
  CHECK(rows == clips.size());
  fs::remove(path);
}

TEST_CASE("vq-vae stage") {
  const auto clips = few_clips(4);
  TrainLog log;
  const auto& ckpt = prereqs().vq;
  CHECK(ckpt.stage == kStageVqvae);
  CHECK(ckpt.frozen.count("vq.norm"));
  const auto again = train_vqvae(clips, toy_vq(), stage(kStageVqvae, 2), {&log});
  CHECK(again == ckpt);
  REQUIRE(log.epochs.size() == 2);
  CHECK(log.epochs[0].losses.at("warmup") == 1.0);
  CHECK(log.epochs[1].losses.at("warmup") == 0.0);
  CHECK(log.epochs[1].losses.at("reconstruction_mse") >= 0.0);

  auto short_clips = clips;
  short_clips[0].pose = crop_pose(short_clips[0].pose, 100);
  TrainLog log2;
  train_vqvae(short_clips, toy_vq(), stage(kStageVqvae, 1), {&log2});
  CHECK(log2.epochs[0].losses.at("skipped_clips") == 1.0);
}

TEST_CASE("framework: freeze schedule and loss accounting") {
  const auto clips = few_clips(4);
  const auto& pre = prereqs();
  TrainLog log;
  auto st = framework_stage(4, 2);
  st.stop_after_epoch = 2;
  const auto at2 = train_framework(clips, pre.gtn, pre.vq, toy_gpt(), st, {&log});
  st.stop_after_epoch = 0;
  const auto at4 = train_framework(clips, pre.gtn, pre.vq, toy_gpt(), st, {&log, &at2});

  CHECK(with_prefix(at2, "gtn.") == with_prefix(at4, "gtn."));
  CHECK(with_prefix(pre.gtn, "gtn.") != with_prefix(at2, "gtn."));
  CHECK(with_prefix(at2, "gpt.") != with_prefix(at4, "gpt."));
  CHECK(at4.frozen.count("gtn"));
  CHECK(at4.stage == kStageFramework);

  REQUIRE(log.steps.size() == 8);
  for (const auto& s : log.steps) {
    CHECK(std::abs(s.total - (st.alpha * s.gtn + st.beta * s.gpt)) <= 1e-7);
    CHECK(std::abs(s.total_graph - s.total) <= 1e-6 * std::max(1.0, std::abs(s.total)));
  }
  for (const auto& e : log.epochs) CHECK(e.losses.at("gtn_frozen") == (e.epoch > 2 ? 1.0 : 0.0));
}

TEST_CASE("framework: resume reproduces an uninterrupted run") {
  const auto clips = few_clips(4);
  const auto& pre = prereqs();
  TrainLog full_log, split_log;
  const auto full = train_framework(clips, pre.gtn, pre.vq, toy_gpt(), framework_stage(4, 3), {&full_log});
  auto st = framework_stage(4, 3);
  st.stop_after_epoch = 1;
  const auto part = train_framework(clips, pre.gtn, pre.vq, toy_gpt(), st, {&split_log});
  CHECK(part.epoch == 1);
  const auto path = (fs::temp_directory_path() / "gtnb_test_resume.ckpt").string();
  save_checkpoint(part, path);
  const auto loaded = load_checkpoint(path);
  st.stop_after_epoch = 0;
  const auto resumed = train_framework(clips, pre.gtn, pre.vq, toy_gpt(), st, {&split_log, &loaded});
  CHECK(resumed == full);
  REQUIRE(full_log.steps.size() == split_log.steps.size());
  for (std::size_t i = 0; i < full_log.steps.size(); ++i)
    CHECK(full_log.steps[i].total == split_log.steps[i].total);

  auto other = framework_stage(4, 3);
  other.learning_rate = 1e-3;
  CHECK_THROWS_AS(train_framework(clips, pre.gtn, pre.vq, toy_gpt(), other, {nullptr, &loaded}), Error);
  fs::remove(path);
}

TEST_CASE("framework: teacher forcing ignores the reference encoder") {
  const auto clips = few_clips(4);
  auto perturbed = clips;
  for (auto& c : perturbed)
    for (auto& v : c.features.mel.values()) v += 3.0f;
  const auto& pre = prereqs();

  auto run = [&](const std::vector<Clip>& data, bool teacher) {
    auto st = framework_stage(2, 0);  // GTN frozen from the first epoch
    st.teacher_forcing = teacher;
    TrainLog log;
    train_framework(data, pre.gtn, pre.vq, toy_gpt(), st, {&log});
    return log.steps;
  };
  const auto a = run(clips, true), b = run(perturbed, true);
  REQUIRE(a.size() == b.size());
  bool gtn_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].gpt == b[i].gpt);
    gtn_differs = gtn_differs || a[i].gtn != b[i].gtn;
  }
  CHECK(gtn_differs);

  const auto c = run(clips, false), d = run(perturbed, false);
  bool gpt_differs = false;
  for (std::size_t i = 0; i < c.size(); ++i) gpt_differs = gpt_differs || c[i].gpt != d[i].gpt;
  CHECK(gpt_differs);
}

TEST_CASE("framework: errors") {
  const auto clips = few_clips(4);
  const auto& pre = prereqs();
  auto unlabeled = clips;
  unlabeled[0].record.genre = -1;
  CHECK_THROWS_AS(train_framework(unlabeled, pre.gtn, pre.vq, toy_gpt(), framework_stage(1, 0)), Error);
  CHECK_THROWS_AS(train_framework(clips, pre.vq, pre.vq, toy_gpt(), framework_stage(1, 0)),
                  StageMismatchError);
  CHECK_THROWS_AS(train_framework(clips, pre.gtn, pre.gtn, toy_gpt(), framework_stage(1, 0)),
                  StageMismatchError);
  auto wrong = toy_gpt();
  wrong.codebook_size = 32;
  CHECK_THROWS_AS(train_framework(clips, pre.gtn, pre.vq, wrong, framework_stage(1, 0)), ShapeError);
  auto cropped = clips;
  cropped[0].features = crop_features(cropped[0].features, 120);
  CHECK_THROWS_AS(train_framework(cropped, pre.gtn, pre.vq, toy_gpt(), framework_stage(1, 0)),
                  ShapeError);
}
