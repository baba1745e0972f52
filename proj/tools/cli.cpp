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
#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtnb/audio.hpp"
#include "gtnb/checkpoint.hpp"
#include "gtnb/config.hpp"
#include "gtnb/dataset.hpp"
#include "gtnb/error.hpp"
#include "gtnb/features.hpp"
#include "gtnb/genre.hpp"
#include "gtnb/metrics.hpp"
#include "gtnb/pose.hpp"
#include "gtnb/training.hpp"

namespace gtnb::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError(where + " is not an unsigned integer: " + text);
  }
  return v;
}

// Every key the configuration layer knows, with its default.
ConfigMap all_defaults(const std::string& stage) {
  ConfigMap map;
  put_config(map, FeatureConfig{});
  put_config(map, GtnConfig{});
  put_config(map, VqConfig{});
  put_config(map, GptConfig{});
  put_config(map, EvalConfig{});
  put_config(map, default_stage_config(stage.empty() ? kStageGtnPretrain : stage));
  map.erase("stage.name");
  return map;
}

std::string display(const std::string& value) {
  if (value.find_first_of(".e") == std::string::npos) return value;
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size()) return value;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Stage keys that only the framework stage reads.
bool framework_only(const std::string& key) {
  return key == "stage.alpha" || key == "stage.beta" || key == "stage.freeze_epoch" ||
         key == "stage.teacher_forcing";
}

std::string dashed(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

struct Command {
  CLI::App* app = nullptr;
  std::string stage;                  // its [section] in the config file maps onto stage.*
  std::vector<std::string> sections;  // config key groups exposed as flags
  std::string config_path;
  std::string seed_flag;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  std::function<void(const ConfigMap&, std::ostream&, std::ostream&)> action;
};

void add_common(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "INI config file ([features], [gtn], ...)")
      ->check(CLI::ExistingFile);
  cmd.app->add_option("--seed", cmd.seed_flag,
                      "random seed (overrides GTNB_SEED and the config file)")
      ->type_name("UINT");
  const ConfigMap defaults = all_defaults(cmd.stage);
  for (const auto& [key, value] : defaults) {
    const auto dot = key.find('.');
    const std::string group = key.substr(0, dot);
    if (std::find(cmd.sections.begin(), cmd.sections.end(), group) == cmd.sections.end()) continue;
    if (key == "stage.seed") continue;
    if (framework_only(key) && cmd.stage != kStageFramework) continue;
    std::string names = "--" + key;
    if (group == "stage") names = "--" + dashed(key.substr(dot + 1)) + "," + names;
    auto* opt = cmd.app->add_option(names, cmd.flag_values[key], "config key " + key)
                    ->default_str(display(value))
                    ->type_name(value == "true" || value == "false" ? "BOOL" : "VALUE");
    cmd.flags.emplace_back(key, opt);
  }
}

// Defaults, then the config file, then GTNB_SEED, then flags.
ConfigMap resolve(const Command& cmd) {
  ConfigMap map = all_defaults(cmd.stage);
  if (!cmd.config_path.empty()) {
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigINI().from_file(cmd.config_path);
    } catch (const CLI::Error& e) {
      throw UsageError(cmd.config_path + ": " + e.what());
    }
    for (const auto& item : items) {
      if (item.name == "++" || item.name == "--") continue;
      std::string section;
      for (const auto& p : item.parents) section += (section.empty() ? "" : ".") + p;
      std::string value;
      for (const auto& v : item.inputs) value += (value.empty() ? "" : ",") + v;
      std::string key;
      if (section.empty() && item.name == "seed") {
        key = "stage.seed";
      } else if (section == "stage" || section == kStageGtnPretrain || section == kStageVqvae ||
                 section == kStageFramework) {
        if (section != "stage" && section != cmd.stage) continue;
        key = "stage." + item.name;
      } else {
        key = section + "." + item.name;
      }
      if (!map.count(key)) throw UsageError(cmd.config_path + ": unknown key " + key);
      map[key] = value;
    }
  }
  if (const char* env = std::getenv("GTNB_SEED"); env && *env) {
    map["stage.seed"] = std::to_string(parse_seed(env, "GTNB_SEED"));
  }
  for (const auto& [key, opt] : cmd.flags) {
    if (opt->count() > 0) map[key] = cmd.flag_values.at(key);
  }
  if (!cmd.seed_flag.empty()) map["stage.seed"] = std::to_string(parse_seed(cmd.seed_flag, "--seed"));
  map["stage.name"] = cmd.stage;
  // Validate every typed view up front so bad values are usage errors.
  try {
    feature_config_from(map);
    gtn_config_from(map);
    vq_config_from(map);
    gpt_config_from(map);
    eval_config_from(map);
    if (!cmd.stage.empty()) stage_config_from(map).validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return map;
}

void log_event(std::ostream& log, json event) {
  log << event.dump() << '\n';
  log.flush();
}

Dataset load(const std::string& manifest, const ConfigMap& map, const FeatureConfig& features,
             const std::string& split, bool need_pose, bool need_label, std::ostream& log) {
  LoadOptions options;
  options.features = features;
  options.clip_frames = stage_config_from(map).clip_frames;
  options.need_pose = need_pose;
  options.need_label = need_label;
  options.split = split;
  auto data = load_dataset(manifest, options, &log);
  if (data.clips.empty()) throw EmptyInputError(manifest + ": no usable clips");
  log_event(log, {{"event", "dataset"},
                  {"manifest", manifest},
                  {"split", split},
                  {"clips", data.clips.size()},
                  {"skipped", data.skipped}});
  return data;
}

StageConfig stage_of(const ConfigMap& map, std::uint32_t stop_after) {
  StageConfig stage = stage_config_from(map);
  stage.stop_after_epoch = stop_after;
  stage.validate();
  return stage;
}

std::string relative_to(const std::string& target, const fs::path& dir) {
  const fs::path abs_target = fs::absolute(target).lexically_normal();
  const fs::path abs_dir = fs::absolute(dir.empty() ? fs::path(".") : dir).lexically_normal();
  const fs::path rel = abs_target.lexically_relative(abs_dir);
  return rel.empty() ? abs_target.generic_string() : rel.generic_string();
}

struct Cli {
  CLI::App app{"Genre-conditioned music-to-dance generation", "gtnb"};
  std::vector<std::unique_ptr<Command>> commands;

  Command& add(const std::string& name, const std::string& description, std::string stage,
               std::vector<std::string> sections) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, description);
    cmd->stage = std::move(stage);
    cmd->sections = std::move(sections);
    add_common(*cmd);
    commands.push_back(std::move(cmd));
    return *commands.back();
  }

  Cli() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand help for every subcommand");
    synth_corpus();
    features();
    pretrain_gtn();
    train_vqvae();
    train_framework();
    generate();
    evaluate();
    embeddings();
  }

  std::shared_ptr<std::uint32_t> stop_after_flag(Command& cmd) {
    auto stop = std::make_shared<std::uint32_t>(0);
    cmd.app->add_option("--stop-after-epoch", *stop,
                        "stop after this epoch; the checkpoint can be resumed");
    return stop;
  }

  void synth_corpus() {
    auto& cmd = add("synth-corpus", "write the synthetic 10-genre corpus", "", {});
    auto out = std::make_shared<std::string>();
    auto corpus = std::make_shared<SyntheticCorpusConfig>();
    cmd.app->add_option("--out", *out, "output directory")->required();
    cmd.app->add_option("--clips-per-genre", corpus->clips_per_genre, "clips per genre")
        ->capture_default_str();
    cmd.app->add_option("--test-per-genre", corpus->test_per_genre,
                        "clips per genre in the test split")
        ->capture_default_str();
    cmd.app->add_option("--seconds", corpus->seconds, "clip length")->capture_default_str();
    cmd.action = [out, corpus](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto manifest =
          make_synthetic_corpus(*out, std::stoull(map.at("stage.seed")), *corpus);
      log_event(log, {{"event", "corpus"},
                      {"manifest", manifest},
                      {"clips", corpus->clips_per_genre * kGenreCount}});
    };
  }

  void features() {
    auto& cmd = add("features", "extract and cache music features", "", {"features"});
    auto audio = std::make_shared<std::string>();
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto* a = cmd.app->add_option("--audio", *audio, "single WAV file")->check(CLI::ExistingFile);
    auto* m = cmd.app->add_option("--manifest", *manifest, "manifest TSV (one cache file per clip)")
                  ->check(CLI::ExistingFile);
    a->excludes(m);
    cmd.app->add_option("--out", *out, "cache file (--audio) or directory (--manifest)")
        ->required();
    cmd.action = [=](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto config = feature_config_from(map);
      if (audio->empty() == manifest->empty()) {
        throw UsageError("give exactly one of --audio or --manifest");
      }
      if (!audio->empty()) {
        const auto clip = load_audio(*audio, config.sample_rate);
        const auto feats = extract_features(clip, config);
        save_features(feats, *out);
        log_event(log, {{"event", "features"}, {"path", *out}, {"frames", feats.frames()}});
        return;
      }
      fs::create_directories(*out);
      for (const auto& rec : read_manifest(*manifest)) {
        const auto clip = load_audio(rec.wav_path, config.sample_rate);
        const auto feats = extract_features(clip, config);
        const auto path = (fs::path(*out) / (rec.clip_id + ".gtnf")).string();
        save_features(feats, path);
        log_event(log, {{"event", "features"}, {"path", path}, {"frames", feats.frames()}});
      }
    };
  }

  void pretrain_gtn() {
    auto& cmd = add("pretrain-gtn", "pre-train the genre token network", kStageGtnPretrain,
                    {"features", "gtn", "stage"});
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto resume = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("train");
    cmd.app->add_option("--manifest", *manifest, "corpus manifest TSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--out", *out, "output checkpoint")->required();
    cmd.app->add_option("--resume", *resume, "continue a stopped run")->check(CLI::ExistingFile);
    cmd.app->add_option("--split", *split, "manifest split to train on (empty: all)")
        ->capture_default_str();
    auto stop = stop_after_flag(cmd);
    cmd.action = [=](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto features = feature_config_from(map);
      const auto stage = stage_of(map, *stop);
      const auto data = load(*manifest, map, features, *split, false, true, log);
      std::optional<ModelCheckpoint> previous;
      if (!resume->empty()) previous = load_checkpoint(*resume, kStageGtnPretrain);
      TrainLog train_log;
      train_log.stream = &log;
      const auto ckpt = gtnb::pretrain_gtn(data.clips, gtn_config_from(map), features, stage,
                                     {&train_log, previous ? &*previous : nullptr});
      save_checkpoint(ckpt, *out);
      log_event(log, {{"event", "checkpoint"}, {"path", *out}, {"stage", ckpt.stage},
                      {"epoch", ckpt.epoch}, {"config_hash", hex16(ckpt.config_hash)}});
    };
  }

  void train_vqvae() {
    auto& cmd = add("train-vqvae", "train the choreographic memory (VQ-VAE)", kStageVqvae,
                    {"features", "vq", "stage"});
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto resume = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("train");
    cmd.app->add_option("--manifest", *manifest, "corpus manifest TSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--out", *out, "output checkpoint")->required();
    cmd.app->add_option("--resume", *resume, "continue a stopped run")->check(CLI::ExistingFile);
    cmd.app->add_option("--split", *split, "manifest split to train on (empty: all)")
        ->capture_default_str();
    auto stop = stop_after_flag(cmd);
    cmd.action = [=](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto stage = stage_of(map, *stop);
      const auto data = load(*manifest, map, feature_config_from(map), *split, true, false, log);
      std::optional<ModelCheckpoint> previous;
      if (!resume->empty()) previous = load_checkpoint(*resume, kStageVqvae);
      TrainLog train_log;
      train_log.stream = &log;
      const auto ckpt = gtnb::train_vqvae(data.clips, vq_config_from(map), stage,
                                    {&train_log, previous ? &*previous : nullptr});
      save_checkpoint(ckpt, *out);
      log_event(log, {{"event", "checkpoint"}, {"path", *out}, {"stage", ckpt.stage},
                      {"epoch", ckpt.epoch}, {"config_hash", hex16(ckpt.config_hash)}});
    };
  }

  void train_framework() {
    auto& cmd = add("train-framework", "train the cross-conditional GPT with GTN fine-tuning",
                    kStageFramework, {"gpt", "stage"});
    auto manifest = std::make_shared<std::string>();
    auto gtn = std::make_shared<std::string>();
    auto vq = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto resume = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>("train");
    cmd.app->add_option("--manifest", *manifest, "corpus manifest TSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--gtn", *gtn, "pre-trained GTN checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--vqvae", *vq, "VQ-VAE checkpoint")->required()->check(CLI::ExistingFile);
    cmd.app->add_option("--out", *out, "output checkpoint")->required();
    cmd.app->add_option("--resume", *resume, "continue a stopped run")->check(CLI::ExistingFile);
    cmd.app->add_option("--split", *split, "manifest split to train on (empty: all)")
        ->capture_default_str();
    auto stop = stop_after_flag(cmd);
    cmd.action = [=](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto stage = stage_of(map, *stop);
      const auto gtn_ckpt = load_checkpoint(*gtn, kStageGtnPretrain);
      const auto vq_ckpt = load_checkpoint(*vq, kStageVqvae);
      const auto features = feature_config_from(gtn_ckpt.metadata);
      const auto data =
          load(*manifest, map, features, *split, true, stage.teacher_forcing, log);
      std::optional<ModelCheckpoint> previous;
      if (!resume->empty()) previous = load_checkpoint(*resume, kStageFramework);
      TrainLog train_log;
      train_log.stream = &log;
      const auto ckpt = gtnb::train_framework(data.clips, gtn_ckpt, vq_ckpt, gpt_config_from(map), stage,
                                        {&train_log, previous ? &*previous : nullptr});
      save_checkpoint(ckpt, *out);
      log_event(log, {{"event", "checkpoint"}, {"path", *out}, {"stage", ckpt.stage},
                      {"epoch", ckpt.epoch}, {"config_hash", hex16(ckpt.config_hash)}});
    };
  }

  void generate() {
    auto& cmd = add("generate", "generate a dance for a music clip", "", {});
    auto framework = std::make_shared<std::string>();
    auto vq = std::make_shared<std::string>();
    auto music = std::make_shared<std::string>();
    auto seed_pose = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto genre = std::make_shared<std::string>();
    auto max_frames = std::make_shared<std::size_t>(0);
    cmd.app->add_option("--framework", *framework, "framework checkpoint (GTN + GPT)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--vqvae", *vq, "VQ-VAE checkpoint")->required()->check(CLI::ExistingFile);
    cmd.app->add_option("--music", *music, "music WAV")->required()->check(CLI::ExistingFile);
    cmd.app->add_option("--seed-pose", *seed_pose, "pose CSV whose first frames seed the dance")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--out", *out, "output pose CSV; a .json sidecar is written next to it")
        ->required();
    cmd.app->add_option("--genre", *genre,
                        "inject this genre's token instead of the inferred embedding");
    cmd.app->add_option("--frames", *max_frames, "cap on the generated length (0: whole clip)")
        ->capture_default_str();
    cmd.action = [=](const ConfigMap&, std::ostream&, std::ostream& log) {
      const auto fw_ckpt = load_checkpoint(*framework, kStageFramework);
      const auto vq_ckpt = load_checkpoint(*vq, kStageVqvae);
      nn::ParameterStore<float> fw_store, vq_store;
      const auto gtn = gtn_from_checkpoint(fw_ckpt, fw_store);
      const auto gpt = gpt_from_checkpoint(fw_ckpt, fw_store);
      const auto vqvae = vq_from_checkpoint(vq_ckpt, vq_store);
      const auto features = feature_config_from(fw_ckpt.metadata);

      auto feats = extract_features(load_audio(*music, features.sample_rate), features);
      std::size_t frames = std::min(feats.frames(), gpt.config().max_steps * kVqDownsample);
      if (*max_frames) frames = std::min(frames, *max_frames);
      frames -= frames % kVqDownsample;
      if (frames == 0) throw EmptyInputError(*music + ": shorter than one code step");
      feats = crop_features(feats, frames);

      const auto seed = seed_codes_from_pose(vqvae, read_pose_csv(*seed_pose));
      std::optional<Tensor<float>> injected;
      if (!genre->empty()) {
        const int g = GenreLabel::from_code(*genre).id;
        const auto tokens = gtn.value_tokens().value();
        Tensor<float> row({1, tokens.cols()});
        for (std::size_t k = 0; k < tokens.cols(); ++k) row[k] = tokens.at(g, k);
        injected = row;
      }
      const auto dance = generate_dance(feats, seed, gtn, gpt, vqvae, injected);
      write_pose_csv(*out, dance.pose);

      json sidecar;
      const fs::path out_dir = fs::path(*out).parent_path();
      sidecar["music"] = relative_to(*music, out_dir);
      sidecar["frames"] = dance.pose.frames();
      sidecar["fps"] = features.frame_rate();
      if (injected) {
        sidecar["genre"] = *genre;
        sidecar["genre_source"] = "injected";
        sidecar["genre_weights"] = nullptr;
      } else {
        const auto& w = dance.genre_weights;
        const auto best = std::max_element(w.begin(), w.end()) - w.begin();
        sidecar["genre"] = std::string(GenreLabel::from_id(static_cast<int>(best)).code());
        sidecar["genre_source"] = "inferred";
        sidecar["genre_weights"] = w;
      }
      sidecar["seed"] = {{"pose", relative_to(*seed_pose, out_dir)},
                         {"upper", seed.upper.front()},
                         {"lower", seed.lower.front()}};
      sidecar["codes"] = {{"upper", dance.codes.upper}, {"lower", dance.codes.lower}};
      sidecar["checkpoints"] = {{"framework", hex16(fw_ckpt.config_hash)},
                                {"vqvae", hex16(vq_ckpt.config_hash)}};
      sidecar["config_hash"] =
          hex16(fnv1a(hex16(fw_ckpt.config_hash) + ":" + hex16(vq_ckpt.config_hash)));
      const auto sidecar_path = fs::path(*out).replace_extension(".json").string();
      std::ofstream side(sidecar_path, std::ios::binary);
      side << sidecar.dump(2) << '\n';
      if (!side) throw IoError("cannot write " + sidecar_path);
      log_event(log, {{"event", "generated"}, {"path", *out}, {"sidecar", sidecar_path},
                      {"frames", dance.pose.frames()}, {"genre", sidecar["genre"]}});
    };
  }

  void evaluate() {
    auto& cmd = add("evaluate", "score generated dances against reference dances", "", {"eval"});
    auto generated = std::make_shared<std::string>();
    auto reference = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto csv = std::make_shared<std::string>();
    cmd.app->add_option("--generated", *generated, "directory of generated pose CSVs")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd.app->add_option("--reference", *reference, "directory of reference pose CSVs")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd.app->add_option("--out", *out, "report JSON (stdout when omitted)");
    cmd.app->add_option("--csv", *csv, "append one CSV row per run to this file");
    cmd.action = [=](const ConfigMap& map, std::ostream& stdout_stream, std::ostream& log) {
      const auto report = evaluate_suite(*generated, *reference, eval_config_from(map), *out, *csv);
      if (out->empty()) stdout_stream << report_to_json(report) << '\n';
      log_event(log, {{"event", "evaluated"}, {"clips", report.clips}, {"skipped", report.skipped}});
    };
  }

  void embeddings() {
    auto& cmd = add("export-embeddings", "write GTN genre weights and embeddings per clip", "", {});
    auto ckpt_path = std::make_shared<std::string>();
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto split = std::make_shared<std::string>();
    cmd.app->add_option("--checkpoint", *ckpt_path, "GTN or framework checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--manifest", *manifest, "corpus manifest TSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.app->add_option("--out", *out, "output CSV")->required();
    cmd.app->add_option("--split", *split, "manifest split to export (empty: all)");
    cmd.action = [=](const ConfigMap& map, std::ostream&, std::ostream& log) {
      const auto ckpt = load_checkpoint(*ckpt_path);
      if (ckpt.stage != kStageGtnPretrain && ckpt.stage != kStageFramework) {
        throw StageMismatchError("checkpoint stage " + ckpt.stage + " has no GTN");
      }
      const auto data = load(*manifest, map, feature_config_from(ckpt.metadata), *split, false,
                             false, log);
      export_embeddings(ckpt, data.clips, *out);
      log_event(log, {{"event", "embeddings"}, {"path", *out}, {"clips", data.clips.size()}});
    };
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log) {
  Cli cli;
  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e, out, log);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e, out, log);
  } catch (const CLI::ParseError& e) {
    cli.app.exit(e, log, log);
    log << cli.app.help();
    return 1;
  }

  const auto it = std::find_if(cli.commands.begin(), cli.commands.end(),
                               [](const auto& cmd) { return cmd->app->parsed(); });
  const Command& cmd = **it;
  const auto start = std::chrono::steady_clock::now();
  try {
    const ConfigMap map = resolve(cmd);
    log_event(log, {{"event", "start"}, {"command", cmd.app->get_name()},
                    {"seed", std::stoull(map.at("stage.seed"))}});
    cmd.action(map, out, log);
  } catch (const UsageError& e) {
    log_event(log, {{"event", "usage_error"}, {"command", cmd.app->get_name()}, {"message", e.what()}});
    log << cmd.app->help();
    return 1;
  } catch (const std::exception& e) {
    log_event(log, {{"event", "error"}, {"command", cmd.app->get_name()}, {"message", e.what()}});
    return 2;
  }
  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
  log_event(log, {{"event", "done"}, {"command", cmd.app->get_name()}, {"wall_seconds", wall.count()}});
  return 0;
}

}  // namespace gtnb::cli
