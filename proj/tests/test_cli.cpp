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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "gtnb/checkpoint.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/pose.hpp"

using namespace gtnb;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string log;
};

Result gtnb_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gtnb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, log;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, log);
  return {code, out.str(), log.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "gtnb_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "toy.ini") << "seed = 3\n\n"
                                    "[gtn]\nchannels = 4,4\nwidth = 8\n\n"
                                    "[vq]\ncodebook_size = 16\ncode_dim = 8\nhidden = 8\n"
                                    "warmup_epochs = 1\n\n"
                                    "[gpt]\nd_model = 8\nheads = 2\nblocks = 1\ncodebook_size = 16\n\n"
                                    "[gtn-pretrain]\nepochs = 2\n\n"
                                    "[vqvae]\nepochs = 2\n\n"
                                    "[framework]\nepochs = 2\nfreeze_epoch = 1\n";
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

// A small corpus plus one checkpoint per stage, built once.
void pipeline() {
  static const bool done = [] {
    const auto ini = at("toy.ini");
    REQUIRE(gtnb_cli({"synth-corpus", "--out", at("corpus"), "--seed", "5", "--clips-per-genre",
                      "2", "--test-per-genre", "1"})
                .code == 0);
    const auto manifest = at("corpus/manifest.tsv");
    REQUIRE(gtnb_cli({"pretrain-gtn", "--config", ini, "--manifest", manifest, "--out", at("gtn.ckpt")})
                .code == 0);
    REQUIRE(gtnb_cli({"train-vqvae", "--config", ini, "--manifest", manifest, "--out", at("vq.ckpt")})
                .code == 0);
    REQUIRE(gtnb_cli({"train-framework", "--config", ini, "--manifest", manifest, "--gtn",
                      at("gtn.ckpt"), "--vqvae", at("vq.ckpt"), "--out", at("fw.ckpt")})
                .code == 0);
    return true;
  }();
  (void)done;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const auto top = gtnb_cli({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"synth-corpus", "features", "pretrain-gtn", "train-vqvae",
                          "train-framework", "generate", "evaluate", "export-embeddings"}) {
    CAPTURE(sub);
    CHECK(top.out.find(sub) != std::string::npos);
    const auto help = gtnb_cli({sub, "--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("--seed") != std::string::npos);
    CHECK(help.out.find("--config") != std::string::npos);
  }
  const auto pre = gtnb_cli({"pretrain-gtn", "--help"}).out;
  for (const char* flag : {"--epochs", "--batch-size", "--learning-rate", "--gtn.width",
                           "--features.hop", "--manifest", "--out", "--resume"}) {
    CAPTURE(flag);
    CHECK(pre.find(flag) != std::string::npos);
  }
  const auto fw = gtnb_cli({"train-framework", "--help"}).out;
  for (const char* flag : {"--freeze-epoch", "--alpha", "--beta", "--teacher-forcing", "--gpt.d_model"}) {
    CAPTURE(flag);
    CHECK(fw.find(flag) != std::string::npos);
  }

  const auto none = gtnb_cli({});
  CHECK(none.code == 1);
  const auto unknown = gtnb_cli({"dance-party"});
  CHECK(unknown.code == 1);
  CHECK(unknown.log.find("Usage:") != std::string::npos);
  CHECK(unknown.out.empty());
  CHECK(gtnb_cli({"synth-corpus", "--out", at("x"), "--bogus"}).code == 1);
  CHECK(gtnb_cli({"synth-corpus"}).code == 1);
  CHECK(gtnb_cli({"synth-corpus", "--out", at("x"), "--seed", "seven"}).code == 1);
}

TEST_CASE("synth-corpus writes 80 clips") {
  const auto r = gtnb_cli({"synth-corpus", "--out", at("full"), "--seed", "7"});
  REQUIRE(r.code == 0);
  const auto rows = read_manifest(at("full/manifest.tsv"));
  CHECK(rows.size() == 80);
  std::size_t wavs = 0, poses = 0;
  for (const auto& e : fs::directory_iterator(workdir() / "full/audio")) wavs += e.path().extension() == ".wav";
  for (const auto& e : fs::directory_iterator(workdir() / "full/pose")) poses += e.path().extension() == ".csv";
  CHECK(wavs == 80);
  CHECK(poses == 80);
  // every log line is a JSON object
  std::istringstream lines(r.log);
  for (std::string line; std::getline(lines, line);) {
    CAPTURE(line);
    CHECK(nlohmann::json::parse(line).is_object());
  }
}

TEST_CASE("training stages write tagged checkpoints") {
  pipeline();
  CHECK(load_checkpoint(at("gtn.ckpt")).stage == kStageGtnPretrain);
  CHECK(load_checkpoint(at("vq.ckpt")).stage == kStageVqvae);
  const auto fw = load_checkpoint(at("fw.ckpt"));
  CHECK(fw.stage == kStageFramework);
  CHECK(fw.epoch == 2);
  CHECK(fw.metadata.at("stage.freeze_epoch") == "1");
  CHECK(fw.metadata.at("gpt.d_model") == "8");

  SUBCASE("--epochs flag overrides the config file") {
    const auto r = gtnb_cli({"pretrain-gtn", "--config", at("toy.ini"), "--manifest",
                             at("corpus/manifest.tsv"), "--out", at("gtn3.ckpt"), "--epochs", "3"});
    REQUIRE(r.code == 0);
    const auto ckpt = load_checkpoint(at("gtn3.ckpt"));
    CHECK(ckpt.stage == kStageGtnPretrain);
    CHECK(ckpt.epoch == 3);
  }
  SUBCASE("same flags give byte-identical checkpoints") {
    REQUIRE(gtnb_cli({"pretrain-gtn", "--config", at("toy.ini"), "--manifest",
                      at("corpus/manifest.tsv"), "--out", at("gtn_again.ckpt")})
                .code == 0);
    CHECK(slurp(at("gtn_again.ckpt")) == slurp(at("gtn.ckpt")));
  }
  SUBCASE("seed precedence: flag over GTNB_SEED over config") {
    ::setenv("GTNB_SEED", "11", 1);
    REQUIRE(gtnb_cli({"pretrain-gtn", "--config", at("toy.ini"), "--manifest",
                      at("corpus/manifest.tsv"), "--out", at("gtn_env.ckpt")})
                .code == 0);
    REQUIRE(gtnb_cli({"pretrain-gtn", "--config", at("toy.ini"), "--manifest",
                      at("corpus/manifest.tsv"), "--out", at("gtn_flag.ckpt"), "--seed", "3"})
                .code == 0);
    ::unsetenv("GTNB_SEED");
    CHECK(load_checkpoint(at("gtn_env.ckpt")).metadata.at("stage.seed") == "11");
    CHECK(slurp(at("gtn_env.ckpt")) != slurp(at("gtn.ckpt")));
    CHECK(slurp(at("gtn_flag.ckpt")) == slurp(at("gtn.ckpt")));
  }
  SUBCASE("stop and resume match an uninterrupted run") {
    const auto manifest = at("corpus/manifest.tsv");
    REQUIRE(gtnb_cli({"train-framework", "--config", at("toy.ini"), "--manifest", manifest, "--gtn",
                      at("gtn.ckpt"), "--vqvae", at("vq.ckpt"), "--out", at("fw_half.ckpt"),
                      "--stop-after-epoch", "1"})
                .code == 0);
    REQUIRE(gtnb_cli({"train-framework", "--config", at("toy.ini"), "--manifest", manifest, "--gtn",
                      at("gtn.ckpt"), "--vqvae", at("vq.ckpt"), "--out", at("fw_resumed.ckpt"),
                      "--resume", at("fw_half.ckpt")})
                .code == 0);
    CHECK(slurp(at("fw_resumed.ckpt")) == slurp(at("fw.ckpt")));
  }
  SUBCASE("runtime failures exit 2") {
    const auto r = gtnb_cli({"train-framework", "--config", at("toy.ini"), "--manifest",
                             at("corpus/manifest.tsv"), "--gtn", at("vq.ckpt"), "--vqvae",
                             at("vq.ckpt"), "--out", at("never.ckpt")});
    CHECK(r.code == 2);
    CHECK(r.log.find("\"event\":\"error\"") != std::string::npos);
    CHECK_FALSE(fs::exists(at("never.ckpt")));
  }
  SUBCASE("bad config values are usage errors") {
    std::ofstream(at("bad.ini")) << "[gtn]\nnot_a_key = 1\n";
    CHECK(gtnb_cli({"pretrain-gtn", "--config", at("bad.ini"), "--manifest",
                    at("corpus/manifest.tsv"), "--out", at("never.ckpt")})
              .code == 1);
    CHECK(gtnb_cli({"pretrain-gtn", "--manifest", at("corpus/manifest.tsv"), "--out",
                    at("never.ckpt"), "--epochs", "0"})
              .code == 1);
  }
}

TEST_CASE("generate writes a pose CSV and sidecar") {
  pipeline();
  fs::create_directories(workdir() / "gen");
  const std::vector<std::string> args = {"generate", "--framework", at("fw.ckpt"), "--vqvae",
                                         at("vq.ckpt"), "--music", at("corpus/audio/gBR_01.wav"),
                                         "--seed-pose", at("corpus/pose/gBR_01.csv"), "--out",
                                         at("gen/gBR_01.csv")};
  REQUIRE(gtnb_cli(args).code == 0);
  const auto pose = read_pose_csv(at("gen/gBR_01.csv"));
  CHECK(pose.frames() == 240);
  const auto sidecar = nlohmann::json::parse(slurp(at("gen/gBR_01.json")));
  CHECK(sidecar["music"] == "../corpus/audio/gBR_01.wav");
  CHECK(sidecar["genre_source"] == "inferred");
  CHECK(sidecar["genre_weights"].size() == 10);
  CHECK(sidecar["codes"]["upper"].size() == 30);
  CHECK(sidecar["config_hash"].get<std::string>().size() == 16);

  const auto csv = slurp(at("gen/gBR_01.csv"));
  const auto side = slurp(at("gen/gBR_01.json"));
  REQUIRE(gtnb_cli(args).code == 0);
  CHECK(slurp(at("gen/gBR_01.csv")) == csv);
  CHECK(slurp(at("gen/gBR_01.json")) == side);

  auto injected = args;
  injected.back() = at("gen/gBR_01_as_gPO.csv");
  injected.insert(injected.end(), {"--genre", "gPO"});
  REQUIRE(gtnb_cli(injected).code == 0);
  CHECK(nlohmann::json::parse(slurp(at("gen/gBR_01_as_gPO.json")))["genre_source"] == "injected");

  auto capped = args;
  capped.back() = at("capped.csv");
  capped.insert(capped.end(), {"--frames", "100"});
  REQUIRE(gtnb_cli(capped).code == 0);
  CHECK(read_pose_csv(at("capped.csv")).frames() == 96);

  auto bad_genre = args;
  bad_genre.insert(bad_genre.end(), {"--genre", "gXX"});
  CHECK(gtnb_cli(bad_genre).code == 2);
}

TEST_CASE("evaluate, features and export-embeddings") {
  pipeline();
  fs::create_directories(workdir() / "gen2");
  for (const char* id : {"gBR_01", "gPO_01", "gLO_01"}) {
    REQUIRE(gtnb_cli({"generate", "--framework", at("fw.ckpt"), "--vqvae", at("vq.ckpt"), "--music",
                      at(std::string("corpus/audio/") + id + ".wav"), "--seed-pose",
                      at(std::string("corpus/pose/") + id + ".csv"), "--out",
                      at(std::string("gen2/") + id + ".csv")})
                .code == 0);
  }
  const auto r = gtnb_cli({"evaluate", "--generated", at("gen2"), "--reference", at("corpus/pose"),
                           "--out", at("report.json"), "--csv", at("runs.csv")});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(at("report.json")));
  for (const char* key : {"fid_k", "fid_g", "div_k", "div_g", "bas"}) {
    CAPTURE(key);
    CHECK(report[key].is_number());
  }
  CHECK(report["clips"] == 3);
  CHECK(report["bas_clips"] == 3);

  const auto to_stdout = gtnb_cli({"evaluate", "--generated", at("gen2"), "--reference",
                                   at("corpus/pose"), "--eval.bas_sigma", "2"});
  REQUIRE(to_stdout.code == 0);
  CHECK(nlohmann::json::parse(to_stdout.out)["config_hash"] != report["config_hash"]);

  REQUIRE(gtnb_cli({"features", "--audio", at("corpus/audio/gBR_01.wav"), "--out", at("one.gtnf")})
              .code == 0);
  CHECK(load_features(at("one.gtnf")).frames() == 240);
  REQUIRE(gtnb_cli({"features", "--manifest", at("corpus/manifest.tsv"), "--out", at("feats")}).code == 0);
  CHECK(fs::exists(workdir() / "feats/gKR_00.gtnf"));
  CHECK(gtnb_cli({"features", "--out", at("nothing")}).code == 1);

  REQUIRE(gtnb_cli({"export-embeddings", "--checkpoint", at("gtn.ckpt"), "--manifest",
                    at("corpus/manifest.tsv"), "--out", at("emb.csv")})
              .code == 0);
  std::istringstream emb(slurp(at("emb.csv")));
  std::size_t rows = 0;
  for (std::string line; std::getline(emb, line);) ++rows;
  CHECK(rows == 21);
  CHECK(gtnb_cli({"export-embeddings", "--checkpoint", at("vq.ckpt"), "--manifest",
                  at("corpus/manifest.tsv"), "--out", at("emb2.csv")})
            .code == 2);
}
