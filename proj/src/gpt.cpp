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

#include "gtnb/gpt.hpp"

#include <algorithm>

namespace gtnb {

std::vector<std::uint8_t> cross_conditional_mask(std::size_t steps) {
  const std::size_t n = kSegmentCount * steps;
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mask[i * n + j] = (j % steps) <= (i % steps);
  }
  return mask;
}

template <typename T>
CrossConditionalGpt<T>::CrossConditionalGpt(nn::ParameterStore<T>& store, GptConfig config,
                                            Rng& rng, std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)), store_(&store) {
  const std::size_t d = config_.d_model;
  if (d % config_.heads != 0) throw Error("d_model must be divisible by the head count");
  const std::size_t cond_cols = config_.music_dim + 1;
  store.add(prefix_ + ".norm.shift", Tensor<T>({1, cond_cols}));
  store.add(prefix_ + ".norm.scale", Tensor<T>::full({1, cond_cols}, T{1}));
  store.freeze(prefix_ + ".norm");

  music_embed_ = nn::Linear<T>(store, prefix_ + ".music", config_.music_dim, d, rng);
  energy_embed_ = nn::Linear<T>(store, prefix_ + ".energy", 1, d, rng);
  upper_embed_ = nn::Embedding<T>(store, prefix_ + ".upper_codes", config_.codebook_size, d, rng);
  lower_embed_ = nn::Embedding<T>(store, prefix_ + ".lower_codes", config_.codebook_size, d, rng);
  position_ =
      nn::Embedding<T>(store, prefix_ + ".position", kSegmentCount * config_.max_steps, d, rng);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::string name = prefix_ + ".block" + std::to_string(b);
    Block block;
    block.ln1 = nn::LayerNorm<T>(store, name + ".ln1", d);
    block.attn = nn::MultiHeadAttention<T>(store, name + ".attn", d, config_.heads, rng);
    block.ln2 = nn::LayerNorm<T>(store, name + ".ln2", d);
    block.fc = nn::Linear<T>(store, name + ".fc", d, config_.mlp_ratio * d, rng);
    block.proj = nn::Linear<T>(store, name + ".proj", config_.mlp_ratio * d, d, rng);
    blocks_.push_back(std::move(block));
  }
  final_ln_ = nn::LayerNorm<T>(store, prefix_ + ".final_ln", d);
  upper_head_ = nn::Linear<T>(store, prefix_ + ".upper_head", d, config_.codebook_size, rng);
  lower_head_ = nn::Linear<T>(store, prefix_ + ".lower_head", d, config_.codebook_size, rng);
  for (const char* head : {".upper_head.w", ".lower_head.w"}) {
    store.assign(prefix_ + head, Tensor<T>({d, config_.codebook_size}));
  }
}

template <typename T>
void CrossConditionalGpt<T>::set_feature_normalization(const Tensor<T>& shift,
                                                       const Tensor<T>& scale) {
  store_->assign(prefix_ + ".norm.shift", shift);
  store_->assign(prefix_ + ".norm.scale", scale);
}

template <typename T>
ad::Var<T> CrossConditionalGpt<T>::assemble_condition(const Tensor<T>& music,
                                                      const Tensor<T>& energy,
                                                      const ad::Var<T>& genre) const {
  const std::size_t frames = music.rows();
  if (music.rank() != 2 || music.cols() != config_.music_dim || energy.rank() != 2 ||
      energy.cols() != 1 || energy.rows() != frames) {
    throw ShapeError("condition expects music [frames, " + std::to_string(config_.music_dim) +
                     "] and energy [frames, 1], got " + shape_str(music.shape()) + " and " +
                     shape_str(energy.shape()));
  }
  if (frames == 0 || frames % kVqDownsample != 0) {
    throw ShapeError("condition needs a positive multiple of 8 frames, got " +
                     std::to_string(frames));
  }
  if (genre.shape() != Shape{1, config_.d_model}) {
    throw ShapeError("genre embedding must be [1, " + std::to_string(config_.d_model) + "]");
  }
  const auto& shift = store_->get(prefix_ + ".norm.shift").value();
  const auto& scale = store_->get(prefix_ + ".norm.scale").value();
  Tensor<T> m({frames, config_.music_dim}), e({frames, 1});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < config_.music_dim; ++c) {
      m.at(f, c) = (music.at(f, c) - shift[c]) * scale[c];
    }
    e[f] = (energy[f] - shift[config_.music_dim]) * scale[config_.music_dim];
  }
  const auto zm = ad::avg_pool_rows(music_embed_(ad::Var<T>::constant(m)), kVqDownsample);
  const auto ze = ad::avg_pool_rows(energy_embed_(ad::Var<T>::constant(e)), kVqDownsample);
  return ad::add_row(ad::concat_rows<T>({ze, zm}), genre);
}

template <typename T>
ActionDistribution<T> CrossConditionalGpt<T>::forward(const ad::Var<T>& condition,
                                                      std::span<const int> upper,
                                                      std::span<const int> lower) const {
  const std::size_t steps = upper.size();
  if (steps == 0 || lower.size() != steps || condition.shape() != Shape{2 * steps, config_.d_model}) {
    throw ShapeError("gpt input: condition " + shape_str(condition.shape()) + " with " +
                     std::to_string(upper.size()) + " upper and " + std::to_string(lower.size()) +
                     " lower codes");
  }
  if (steps > config_.max_steps) {
    throw ShapeError("sequence of " + std::to_string(steps) + " steps exceeds max_steps " +
                     std::to_string(config_.max_steps));
  }
  std::vector<int> positions(kSegmentCount * steps);
  for (std::size_t s = 0; s < kSegmentCount; ++s) {
    for (std::size_t t = 0; t < steps; ++t) {
      positions[s * steps + t] = static_cast<int>(s * config_.max_steps + t);
    }
  }
  auto x = ad::concat_rows<T>({condition, upper_embed_(upper), lower_embed_(lower)});
  x = ad::add(x, position_(positions));
  const auto mask = cross_conditional_mask(steps);
  for (const auto& block : blocks_) {
    x = ad::add(x, block.attn(block.ln1(x), mask));
    x = ad::add(x, block.proj(ad::gelu(block.fc(block.ln2(x)))));
  }
  x = final_ln_(x);
  const std::size_t u0 = static_cast<std::size_t>(Segment::Upper) * steps;
  const std::size_t l0 = static_cast<std::size_t>(Segment::Lower) * steps;
  ActionDistribution<T> out;
  out.upper = ad::softmax_rows(upper_head_(ad::slice_rows(x, u0, u0 + steps)));
  out.lower = ad::softmax_rows(lower_head_(ad::slice_rows(x, l0, l0 + steps)));
  return out;
}

namespace {

template <typename T>
Tensor<T> next_code_targets(const std::vector<int>& codes, std::size_t vocab) {
  Tensor<T> target({codes.size(), vocab});
  for (std::size_t t = 0; t + 1 < codes.size(); ++t) {
    const int c = codes[t + 1];
    if (c < 0 || static_cast<std::size_t>(c) >= vocab) {
      throw Error("target code " + std::to_string(c) + " out of range");
    }
    target.at(t, static_cast<std::size_t>(c)) = T{1};
  }
  return target;
}

template <typename T>
std::size_t argmax_row(const Tensor<T>& probs, std::size_t row) {
  const auto r = probs.row_span(row);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

}  // namespace

template <typename T>
ad::Var<T> gpt_loss(const ActionDistribution<T>& actions, const PoseCodes& codes) {
  const std::size_t steps = actions.upper.rows();
  if (codes.upper.size() != steps || codes.lower.size() != steps || actions.lower.rows() != steps) {
    throw ShapeError("gpt_loss: " + std::to_string(steps) + " action rows vs " +
                     std::to_string(codes.upper.size()) + "/" + std::to_string(codes.lower.size()) +
                     " codes");
  }
  if (steps < 2) throw ShapeError("gpt_loss needs at least two steps");
  const auto cu = ad::cross_entropy(actions.upper, next_code_targets<T>(codes.upper, actions.upper.cols()));
  const auto cl = ad::cross_entropy(actions.lower, next_code_targets<T>(codes.lower, actions.lower.cols()));
  return ad::scale(ad::add(cu, cl), T{1} / static_cast<T>(steps - 1));
}

template <typename T>
ad::Var<T> combined_loss(const ad::Var<T>& gtn_loss, const ad::Var<T>& gpt_loss, double alpha,
                         double beta) {
  return ad::add(ad::scale(gtn_loss, static_cast<T>(alpha)),
                 ad::scale(gpt_loss, static_cast<T>(beta)));
}

template <typename T>
double next_code_accuracy(const ActionDistribution<T>& actions, const PoseCodes& codes) {
  const std::size_t steps = actions.upper.rows();
  if (steps < 2) return 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    hits += argmax_row(actions.upper.value(), t) == static_cast<std::size_t>(codes.upper[t + 1]);
    hits += argmax_row(actions.lower.value(), t) == static_cast<std::size_t>(codes.lower[t + 1]);
  }
  return static_cast<double>(hits) / static_cast<double>(2 * (steps - 1));
}

template <typename T>
PoseCodes seed_codes_from_pose(const VqVae<T>& vq, const PoseSequence& pose) {
  if (pose.frames() == 0) throw EmptyInputError("seed pose has no frames");
  Tensor<T> window({kVqDownsample, kPoseWidth});
  for (std::size_t f = 0; f < kVqDownsample; ++f) {
    const std::size_t src = std::min(f, pose.frames() - 1);
    for (std::size_t c = 0; c < kPoseWidth; ++c) {
      window.at(f, c) = static_cast<T>(pose.data.at(src, c));
    }
  }
  return vq.encode_codes(window);
}

template <typename T>
GeneratedDance<T> generate_dance(const MusicFeatureClip& features, const PoseCodes& seed,
                                 const GenreTokenNetwork<T>& gtn,
                                 const CrossConditionalGpt<T>& gpt, const VqVae<T>& vq,
                                 const std::optional<Tensor<T>>& genre_override) {
  const std::size_t frames = features.frames();
  if (frames == 0 || frames % kVqDownsample != 0) {
    throw ShapeError("music must be a positive multiple of 8 frames, got " +
                     std::to_string(frames));
  }
  if (seed.upper.empty() || seed.lower.empty()) throw EmptyInputError("missing seed codes");
  const int vocab = static_cast<int>(gpt.config().codebook_size);
  for (int c : {seed.upper[0], seed.lower[0]}) {
    if (c < 0 || c >= vocab) throw Error("seed code " + std::to_string(c) + " out of range");
  }

  GeneratedDance<T> out;
  ad::Var<T> genre;
  if (genre_override) {
    genre = ad::Var<T>::constant(*genre_override);
  } else {
    const auto inference = gtn.forward(features.mel.template cast<T>());
    genre = ad::Var<T>::constant(inference.embedding.value());
    for (T w : inference.weights.value().values()) out.genre_weights.push_back(static_cast<double>(w));
  }
  const auto condition =
      gpt.assemble_condition(features.music.template cast<T>(), features.energy.template cast<T>(),
                             genre).value();
  const std::size_t steps = frames / kVqDownsample;
  const std::size_t d = gpt.config().d_model;

  PoseCodes codes;
  codes.upper.push_back(seed.upper[0]);
  codes.lower.push_back(seed.lower[0]);
  for (std::size_t k = 1; k < steps; ++k) {
    // The mask makes position k-1 blind to later steps, so running on the
    // first k steps of every segment gives the same distribution.
    Tensor<T> cond({2 * k, d});
    for (std::size_t t = 0; t < k; ++t) {
      std::copy_n(condition.ptr() + t * d, d, cond.ptr() + t * d);
      std::copy_n(condition.ptr() + (steps + t) * d, d, cond.ptr() + (k + t) * d);
    }
    const auto actions = gpt.forward(ad::Var<T>::constant(cond), codes.upper, codes.lower);
    codes.upper.push_back(static_cast<int>(argmax_row(actions.upper.value(), k - 1)));
    codes.lower.push_back(static_cast<int>(argmax_row(actions.lower.value(), k - 1)));
  }
  out.pose.data = vq.decode_codes(codes).template cast<float>();
  out.pose.fps = features.frame_rate;
  out.codes = std::move(codes);
  return out;
}

#define GTNB_INSTANTIATE(T)                                                                    \
  template class CrossConditionalGpt<T>;                                                       \
  template ad::Var<T> gpt_loss(const ActionDistribution<T>&, const PoseCodes&);                \
  template ad::Var<T> combined_loss(const ad::Var<T>&, const ad::Var<T>&, double, double);     \
  template double next_code_accuracy(const ActionDistribution<T>&, const PoseCodes&);          \
  template PoseCodes seed_codes_from_pose(const VqVae<T>&, const PoseSequence&);               \
  template GeneratedDance<T> generate_dance(const MusicFeatureClip&, const PoseCodes&,         \
                                            const GenreTokenNetwork<T>&,                       \
                                            const CrossConditionalGpt<T>&, const VqVae<T>&,    \
                                            const std::optional<Tensor<T>>&);

GTNB_INSTANTIATE(float)
GTNB_INSTANTIATE(double)

#undef GTNB_INSTANTIATE

}  // namespace gtnb
