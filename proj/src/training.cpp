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

#include "gtnb/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "gtnb/error.hpp"
#include "gtnb/genre.hpp"
#include "json.hpp"

namespace gtnb {

namespace {

using Clock = std::chrono::steady_clock;

// Shuffling uses its own stream so that a resumed run sees the same batches.
constexpr std::uint64_t kOrderStream = 0x5eed0fba7c4e5ULL;
constexpr std::uint64_t kCodebookStream = 0xc0deb00c5ULL;

void emit(TrainLog* log, EpochRecord record) {
  if (!log) return;
  if (log->stream) {
    nlohmann::json j{{"stage", record.stage},
                     {"epoch", record.epoch},
                     {"losses", record.losses},
                     {"accuracy", record.accuracy},
                     {"wall_seconds", record.wall_seconds}};
    *log->stream << j.dump() << '\n';
    log->stream->flush();
  }
  log->epochs.push_back(std::move(record));
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch) {
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(std::min(n, i + batch)));
  }
  return batches;
}

// Shared bookkeeping for the stage drivers: resume handling and checkpoint
// assembly.
struct StageState {
  std::uint32_t first_epoch = 1;
  Rng order;
  nn::OptimizerState<float> optimizer;
};

StageState begin_stage(const StageConfig& stage, const char* tag, std::uint64_t hash,
                       nn::ParameterStore<float>& store, const ModelCheckpoint* resume) {
  stage.validate();
  StageState s{1, Rng(stage.seed ^ kOrderStream), {}};
  s.optimizer.config.learning_rate = stage.learning_rate;
  if (!resume) return s;
  if (resume->stage != tag) {
    throw StageMismatchError("cannot resume stage " + std::string(tag) + " from a " +
                             resume->stage + " checkpoint");
  }
  if (resume->config_hash != hash) {
    throw Error("resume checkpoint was trained with a different configuration");
  }
  restore(*resume, store);
  for (const auto& prefix : resume->frozen) store.freeze(prefix);
  s.optimizer = restore_optimizer(*resume, s.optimizer.config);
  s.order.set_state(resume->rng_state);
  s.first_epoch = resume->epoch + 1;
  return s;
}

ModelCheckpoint finish_stage(const nn::ParameterStore<float>& store, const StageState& s,
                             const char* tag, const ConfigMap& config, std::uint32_t epoch) {
  auto ckpt = snapshot(store);
  ckpt.stage = tag;
  ckpt.config_hash = config_hash(config);
  ckpt.epoch = epoch;
  ckpt.rng_state = s.order.state();
  ckpt.metadata = config;
  attach_optimizer(ckpt, s.optimizer);
  return ckpt;
}

std::uint32_t last_epoch(const StageConfig& stage) {
  return stage.stop_after_epoch ? stage.stop_after_epoch : stage.epochs;
}

std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void check_labels(const std::vector<Clip>& clips, std::size_t genres) {
  for (const auto& c : clips) {
    if (c.record.genre < 0 || static_cast<std::size_t>(c.record.genre) >= genres) {
      throw Error("clip " + c.record.clip_id + " has label " + std::to_string(c.record.genre) +
                  " outside [0, " + std::to_string(genres) + ")");
    }
  }
}

void require_frames(const std::vector<Clip>& clips, const StageConfig& stage, bool pose) {
  for (const auto& c : clips) {
    if (c.features.frames() != stage.clip_frames || (pose && c.pose.frames() != stage.clip_frames)) {
      throw ShapeError("clip " + c.record.clip_id + " is not cropped to " +
                       std::to_string(stage.clip_frames) + " frames");
    }
  }
}

}  // namespace

ModelCheckpoint pretrain_gtn(const std::vector<Clip>& clips, const GtnConfig& model,
                             const FeatureConfig& features, const StageConfig& stage,
                             StageRun run) {
  if (clips.empty()) throw EmptyInputError("pretrain-gtn: empty dataset");
  check_labels(clips, model.genres);
  ConfigMap config;
  put_config(config, model);
  put_config(config, features);
  put_config(config, stage);
  config["stage.name"] = kStageGtnPretrain;

  Rng init(stage.seed);
  nn::ParameterStore<float> store;
  GenreTokenNetwork<float> gtn(store, model, init);
  auto s = begin_stage(stage, kStageGtnPretrain, config_hash(config), store, run.resume);

  std::uint32_t epoch = s.first_epoch - 1;
  for (epoch = s.first_epoch; epoch <= last_epoch(stage); ++epoch) {
    const auto start = Clock::now();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(clips.size(), stage.batch_size, s.order)) {
      store.zero_grad();
      std::vector<GenreInference<float>> inferences;
      std::vector<int> labels;
      for (std::size_t i : batch) {
        inferences.push_back(gtn.forward(clips[i].features.mel));
        labels.push_back(clips[i].record.genre);
        correct += argmax(inferences.back().weights.value().values()) ==
                   static_cast<std::size_t>(labels.back());
      }
      const auto loss = gtn_loss<float>(inferences, labels);
      loss.backward();
      nn::adam_step(store, s.optimizer);
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    EpochRecord rec;
    rec.stage = kStageGtnPretrain;
    rec.epoch = epoch;
    rec.losses["gtn"] = loss_sum / static_cast<double>(clips.size());
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(clips.size());
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    emit(run.log, std::move(rec));
  }
  return finish_stage(store, s, kStageGtnPretrain, config, epoch - 1);
}

ModelCheckpoint train_vqvae(const std::vector<Clip>& clips, const VqConfig& model,
                            const StageConfig& stage, StageRun run) {
  std::vector<const Clip*> usable;
  std::size_t skipped = 0;
  for (const auto& c : clips) {
    if (c.pose.frames() == stage.clip_frames) {
      usable.push_back(&c);
    } else {
      ++skipped;
      if (run.log && run.log->stream) {
        *run.log->stream << nlohmann::json{{"event", "skip_clip"},
                                           {"clip_id", c.record.clip_id},
                                           {"reason", "pose has " + std::to_string(c.pose.frames()) +
                                                          " frames"}}
                                .dump()
                         << '\n';
      }
    }
  }
  if (usable.empty()) throw EmptyInputError("train-vqvae: no pose clips of the required length");
  ConfigMap config;
  put_config(config, model);
  put_config(config, stage);
  config["stage.name"] = kStageVqvae;

  Rng init(stage.seed);
  nn::ParameterStore<float> store;
  VqVae<float> vq(store, model, init);
  {
    // Standardize every pose column over the training frames; near-static
    // columns keep a 1 cm floor so jitter is not blown up.
    std::vector<double> sum(kPoseWidth, 0.0), sq(kPoseWidth, 0.0);
    std::size_t frames = 0;
    for (const Clip* c : usable) {
      for (std::size_t f = 0; f < c->pose.frames(); ++f, ++frames) {
        for (std::size_t k = 0; k < kPoseWidth; ++k) {
          const double v = c->pose.data.at(f, k);
          sum[k] += v;
          sq[k] += v * v;
        }
      }
    }
    Tensor<float> shift({1, kPoseWidth}), scale({1, kPoseWidth});
    for (std::size_t k = 0; k < kPoseWidth; ++k) {
      const double mean = sum[k] / static_cast<double>(frames);
      const double var = std::max(0.0, sq[k] / static_cast<double>(frames) - mean * mean);
      shift[k] = static_cast<float>(mean);
      scale[k] = static_cast<float>(1.0 / std::max(std::sqrt(var), 0.01));
    }
    vq.set_normalization(shift, scale);
  }
  auto init_codebooks = [&] {
    Rng pick(stage.seed ^ kCodebookStream);
    for (Half h : {Half::Upper, Half::Lower}) {
      std::vector<float> rows;
      for (const Clip* c : usable) {
        const auto halves = split_body(vq.normalize(c->pose.data));
        const auto z = vq.half(h).encode(
            ad::Var<float>::constant(h == Half::Upper ? halves.upper : halves.lower));
        rows.insert(rows.end(), z.value().values().begin(), z.value().values().end());
      }
      const std::size_t dim = model.code_dim, n = rows.size() / dim;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      pick.shuffle(order.begin(), order.end());
      Tensor<float> book({model.codebook_size, dim});
      for (std::size_t k = 0; k < model.codebook_size; ++k) {
        // Distinct rows first; small perturbations once they run out.
        const std::size_t row = order[k % n];
        const double jitter = k < n ? 0.0 : model.codebook_init_stddev;
        for (std::size_t c = 0; c < dim; ++c) {
          book.at(k, c) = rows[row * dim + c] + static_cast<float>(jitter * pick.normal());
        }
      }
      store.assign(vq.codebook_name(h), book);
    }
  };
  auto s = begin_stage(stage, kStageVqvae, config_hash(config), store, run.resume);
  if (model.codebook_data_init && model.warmup_epochs == 0 && !run.resume) init_codebooks();

  std::uint32_t epoch = s.first_epoch - 1;
  for (epoch = s.first_epoch; epoch <= last_epoch(stage); ++epoch) {
    const auto start = Clock::now();
    double loss_sum = 0.0, mse_sum = 0.0;
    std::set<int> used_upper, used_lower;
    const bool warmup = epoch <= model.warmup_epochs;
    for (const auto& batch : make_batches(usable.size(), stage.batch_size, s.order)) {
      store.zero_grad();
      std::vector<ad::Var<float>> losses;
      for (std::size_t i : batch) {
        const auto& pose = usable[i]->pose.data;
        auto out = vq.forward(pose, warmup);
        losses.push_back(out.loss);
        double se = 0.0;
        const auto& r = out.reconstruction.value();
        for (std::size_t k = 0; k < pose.numel(); ++k) {
          const double d = static_cast<double>(r[k]) - static_cast<double>(pose[k]);
          se += d * d;
        }
        mse_sum += se / static_cast<double>(pose.numel());
        used_upper.insert(out.upper_codes.begin(), out.upper_codes.end());
        used_lower.insert(out.lower_codes.begin(), out.lower_codes.end());
      }
      const auto loss =
          ad::scale(ad::sum(ad::concat_rows(losses)), 1.0f / static_cast<float>(batch.size()));
      loss.backward();
      nn::adam_step(store, s.optimizer);
      loss_sum += loss.item() * static_cast<double>(batch.size());
    }
    const double n = static_cast<double>(usable.size());
    EpochRecord rec;
    rec.stage = kStageVqvae;
    rec.epoch = epoch;
    rec.losses["vqvae"] = loss_sum / n;
    rec.losses["reconstruction_mse"] = mse_sum / n;
    rec.losses["codebook_usage_upper"] =
        static_cast<double>(used_upper.size()) / static_cast<double>(model.codebook_size);
    rec.losses["codebook_usage_lower"] =
        static_cast<double>(used_lower.size()) / static_cast<double>(model.codebook_size);
    rec.losses["skipped_clips"] = static_cast<double>(skipped);
    rec.losses["warmup"] = warmup ? 1.0 : 0.0;
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    emit(run.log, std::move(rec));
    if (model.codebook_data_init && epoch == model.warmup_epochs) init_codebooks();
  }
  return finish_stage(store, s, kStageVqvae, config, epoch - 1);
}

std::pair<Tensor<float>, Tensor<float>> condition_statistics(const std::vector<Clip>& clips) {
  const std::size_t cols = music_columns::kWidth + 1;
  std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
  std::size_t frames = 0;
  for (const auto& c : clips) {
    for (std::size_t f = 0; f < c.features.frames(); ++f) {
      for (std::size_t k = 0; k < cols; ++k) {
        const double v = k < music_columns::kWidth ? c.features.music.at(f, k)
                                                   : c.features.energy[f];
        sum[k] += v;
        sq[k] += v * v;
      }
      ++frames;
    }
  }
  Tensor<float> shift({1, cols}), scale({1, cols});
  if (frames == 0) {
    scale = Tensor<float>::full({1, cols}, 1.0f);
    return {shift, scale};
  }
  for (std::size_t k = 0; k < cols; ++k) {
    const double mean = sum[k] / static_cast<double>(frames);
    const double var = std::max(0.0, sq[k] / static_cast<double>(frames) - mean * mean);
    shift[k] = static_cast<float>(mean);
    scale[k] = static_cast<float>(1.0 / std::max(std::sqrt(var), 1e-3));
  }
  return {shift, scale};
}

GenreTokenNetwork<float> gtn_from_checkpoint(const ModelCheckpoint& ckpt,
                                             nn::ParameterStore<float>& store) {
  Rng rng(0);
  GenreTokenNetwork<float> gtn(store, gtn_config_from(ckpt.metadata), rng);
  restore(ckpt, store, "gtn");
  return gtn;
}

VqVae<float> vq_from_checkpoint(const ModelCheckpoint& ckpt, nn::ParameterStore<float>& store) {
  if (ckpt.stage != kStageVqvae) {
    throw StageMismatchError("expected a vqvae checkpoint, got " + ckpt.stage);
  }
  Rng rng(0);
  VqVae<float> vq(store, vq_config_from(ckpt.metadata), rng);
  restore(ckpt, store, "vq");
  return vq;
}

CrossConditionalGpt<float> gpt_from_checkpoint(const ModelCheckpoint& ckpt,
                                               nn::ParameterStore<float>& store) {
  if (ckpt.stage != kStageFramework) {
    throw StageMismatchError("expected a framework checkpoint, got " + ckpt.stage);
  }
  Rng rng(0);
  CrossConditionalGpt<float> gpt(store, gpt_config_from(ckpt.metadata), rng);
  restore(ckpt, store, "gpt");
  return gpt;
}

ModelCheckpoint train_framework(const std::vector<Clip>& clips, const ModelCheckpoint& gtn_ckpt,
                                const ModelCheckpoint& vq_ckpt, const GptConfig& model,
                                const StageConfig& stage, StageRun run) {
  if (clips.empty()) throw EmptyInputError("train-framework: empty dataset");
  if (gtn_ckpt.stage != kStageGtnPretrain) {
    throw StageMismatchError("expected a gtn-pretrain checkpoint, got " + gtn_ckpt.stage);
  }
  require_frames(clips, stage, true);
  const GtnConfig gtn_config = gtn_config_from(gtn_ckpt.metadata);
  if (stage.teacher_forcing) {
    for (const auto& c : clips) {
      if (c.record.genre < 0) {
        throw Error("teacher forcing needs a genre label for clip " + c.record.clip_id);
      }
    }
  }
  check_labels(clips, gtn_config.genres);
  if (gtn_config.width != model.d_model) {
    throw ShapeError("genre embedding width " + std::to_string(gtn_config.width) +
                     " differs from d_model " + std::to_string(model.d_model));
  }

  nn::ParameterStore<float> vq_store;
  const auto vq = vq_from_checkpoint(vq_ckpt, vq_store);
  if (vq.config().codebook_size != model.codebook_size) {
    throw ShapeError("GPT vocabulary differs from the VQ-VAE codebook size");
  }
  std::vector<PoseCodes> codes;
  for (const auto& c : clips) codes.push_back(pose_to_codes(vq, c.pose));

  ConfigMap config;
  for (const auto& [k, v] : gtn_ckpt.metadata) {
    if (k.starts_with("gtn.") || k.starts_with("features.")) config[k] = v;
  }
  put_config(config, model);
  put_config(config, stage);
  config["stage.name"] = kStageFramework;
  config["framework.gtn_config_hash"] = std::to_string(gtn_ckpt.config_hash);
  config["framework.vq_config_hash"] = std::to_string(vq_ckpt.config_hash);
  config["framework.vq_checkpoint_epoch"] = std::to_string(vq_ckpt.epoch);

  nn::ParameterStore<float> store;
  Rng init(stage.seed);
  GenreTokenNetwork<float> gtn(store, gtn_config, init);
  restore(gtn_ckpt, store, "gtn");
  CrossConditionalGpt<float> gpt(store, model, init);
  const auto [shift, scale] = condition_statistics(clips);
  gpt.set_feature_normalization(shift, scale);
  auto s = begin_stage(stage, kStageFramework, config_hash(config), store, run.resume);

  auto set_gtn_trainable = [&](bool on) {
    for (const auto& [name, var] : store.entries()) {
      if (nn::prefix_matches(gtn.prefix(), name)) {
        auto v = var;
        v.set_requires_grad(on);
      }
    }
  };
  const float alpha = static_cast<float>(stage.alpha);
  const float beta = static_cast<float>(stage.beta);

  std::uint32_t epoch = s.first_epoch - 1;
  std::size_t step = 0;
  for (epoch = s.first_epoch; epoch <= last_epoch(stage); ++epoch) {
    // The GTN trains through epoch freeze_epoch and is frozen afterwards.
    const bool frozen = epoch > stage.freeze_epoch;
    if (frozen) store.freeze(gtn.prefix());
    set_gtn_trainable(!frozen);

    const auto start = Clock::now();
    double total_sum = 0.0, gtn_sum = 0.0, gpt_sum = 0.0, acc_sum = 0.0;
    std::size_t genre_hits = 0;
    for (const auto& batch : make_batches(clips.size(), stage.batch_size, s.order)) {
      store.zero_grad();
      std::vector<GenreInference<float>> inferences;
      std::vector<int> labels;
      std::vector<ad::Var<float>> gpt_losses;
      double batch_acc = 0.0;
      for (std::size_t i : batch) {
        const auto& clip = clips[i];
        auto inference = gtn.forward(clip.features.mel);
        ad::Var<float> genre = inference.embedding;
        if (stage.teacher_forcing) {
          const auto target = ad::Var<float>::constant(
              one_hot<float>(clip.record.genre, gtn_config.genres));
          genre = ad::Var<float>::constant(gtn.embedding_from_weights(target).value());
        }
        if (clip.record.genre >= 0) {
          genre_hits += argmax(inference.weights.value().values()) ==
                        static_cast<std::size_t>(clip.record.genre);
        }
        const auto condition =
            gpt.assemble_condition(clip.features.music, clip.features.energy, genre);
        const auto actions = gpt.forward(condition, codes[i].upper, codes[i].lower);
        gpt_losses.push_back(gpt_loss(actions, codes[i]));
        batch_acc += next_code_accuracy(actions, codes[i]);
        inferences.push_back(std::move(inference));
        labels.push_back(clip.record.genre);
      }
      const auto l_gtn = gtn_loss<float>(inferences, labels);
      const auto l_gpt = ad::scale(ad::sum(ad::concat_rows(gpt_losses)),
                                   1.0f / static_cast<float>(batch.size()));
      const auto total = combined_loss(l_gtn, l_gpt, alpha, beta);
      total.backward();
      nn::adam_step(store, s.optimizer);

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step++;
      rec.gtn = l_gtn.item();
      rec.gpt = l_gpt.item();
      rec.total = stage.alpha * rec.gtn + stage.beta * rec.gpt;
      rec.total_graph = total.item();
      if (run.log) run.log->steps.push_back(rec);
      const double b = static_cast<double>(batch.size());
      total_sum += rec.total * b;
      gtn_sum += rec.gtn * b;
      gpt_sum += rec.gpt * b;
      acc_sum += batch_acc;
    }
    const double n = static_cast<double>(clips.size());
    EpochRecord rec;
    rec.stage = kStageFramework;
    rec.epoch = epoch;
    rec.losses["total"] = total_sum / n;
    rec.losses["gtn"] = gtn_sum / n;
    rec.losses["gpt"] = gpt_sum / n;
    rec.losses["genre_accuracy"] = static_cast<double>(genre_hits) / n;
    rec.losses["gtn_frozen"] = frozen ? 1.0 : 0.0;
    rec.accuracy = acc_sum / n;
    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    emit(run.log, std::move(rec));
  }
  set_gtn_trainable(true);
  return finish_stage(store, s, kStageFramework, config, epoch - 1);
}

void export_embeddings(const ModelCheckpoint& ckpt, const std::vector<Clip>& clips,
                       const std::string& out_path) {
  nn::ParameterStore<float> store;
  const auto gtn = gtn_from_checkpoint(ckpt, store);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write embeddings to " + out_path);
  const auto& cfg = gtn.config();
  out << "clip_id,genre_code";
  for (std::size_t k = 0; k < cfg.genres; ++k) out << ",w" << k;
  for (std::size_t k = 0; k < cfg.width; ++k) out << ",e" << k;
  out << '\n';
  char buf[32];
  for (const auto& clip : clips) {
    const auto inf = gtn.forward(clip.features.mel);
    out << clip.record.clip_id << ','
        << (clip.record.genre >= 0 ? std::string(GenreLabel::from_id(clip.record.genre).code())
                                   : std::string());
    for (const auto* t : {&inf.weights.value(), &inf.embedding.value()}) {
      for (float v : t->values()) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
        out << ',' << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing embeddings to " + out_path);
}

}  // namespace gtnb
