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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtnb/features.hpp"
#include "gtnb/gtn.hpp"
#include "gtnb/layers.hpp"
#include "gtnb/vqvae.hpp"

namespace gtnb {

struct GptConfig {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t blocks = 3;
  std::size_t codebook_size = 512;
  std::size_t music_dim = music_columns::kWidth;
  std::size_t max_steps = 150;  // positional table covers 4 * max_steps positions
  std::size_t mlp_ratio = 4;
};

// Segment order of the transformer input.
enum class Segment : std::size_t { Energy = 0, Music = 1, Upper = 2, Lower = 3 };
inline constexpr std::size_t kSegmentCount = 4;

// Cross-conditional causal mask over 4 * steps positions laid out segment by
// segment: position t of any segment may attend to positions <= t of every
// segment. Row-major, 1 = allowed.
std::vector<std::uint8_t> cross_conditional_mask(std::size_t steps);

template <typename T>
struct ActionDistribution {
  ad::Var<T> upper;  // [steps, codebook_size], rows are probability vectors
  ad::Var<T> lower;
};

template <typename T>
class CrossConditionalGpt {
 public:
  CrossConditionalGpt(nn::ParameterStore<T>& store, GptConfig config, Rng& rng,
                      std::string prefix = "gpt");

  // Per-column shift and scale applied to [music | energy] before embedding
  // (439 columns). Stored as parameters the optimizer never touches.
  void set_feature_normalization(const Tensor<T>& shift, const Tensor<T>& scale);

  // music [frames, 438], energy [frames, 1], genre [1, d_model] ->
  // [2 * frames / 8, d_model]: energy steps then music steps, genre added to
  // every row.
  ad::Var<T> assemble_condition(const Tensor<T>& music, const Tensor<T>& energy,
                                const ad::Var<T>& genre) const;
  // Condition plus equal-length code streams -> per-step action
  // distributions read from the upper and lower segments.
  ActionDistribution<T> forward(const ad::Var<T>& condition, std::span<const int> upper,
                                std::span<const int> lower) const;

  const GptConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

 private:
  struct Block {
    nn::LayerNorm<T> ln1, ln2;
    nn::MultiHeadAttention<T> attn;
    nn::Linear<T> fc, proj;
  };

  GptConfig config_;
  std::string prefix_;
  nn::ParameterStore<T>* store_;
  nn::Linear<T> music_embed_, energy_embed_;
  nn::Embedding<T> upper_embed_, lower_embed_, position_;
  std::vector<Block> blocks_;
  nn::LayerNorm<T> final_ln_;
  nn::Linear<T> upper_head_, lower_head_;
};

// Mean over the steps - 1 transitions of the summed upper and lower cross
// entropy of predicting code t + 1 from row t.
template <typename T>
ad::Var<T> gpt_loss(const ActionDistribution<T>& actions, const PoseCodes& codes);

template <typename T>
ad::Var<T> combined_loss(const ad::Var<T>& gtn_loss, const ad::Var<T>& gpt_loss, double alpha,
                         double beta);

// Fraction of transitions whose argmax equals the next code, over both heads.
template <typename T>
double next_code_accuracy(const ActionDistribution<T>& actions, const PoseCodes& codes);

// One code per half from the first 8 frames of `pose` (shorter poses are
// padded by repeating the last frame).
template <typename T>
PoseCodes seed_codes_from_pose(const VqVae<T>& vq, const PoseSequence& pose);

template <typename T>
struct GeneratedDance {
  PoseSequence pose;
  PoseCodes codes;
  std::vector<double> genre_weights;  // empty when an embedding was injected
};

// Greedy autoregressive decoding. The genre embedding comes from the GTN on
// the clip's mel unless `genre_override` ([1, d_model]) is given.
template <typename T>
GeneratedDance<T> generate_dance(const MusicFeatureClip& features, const PoseCodes& seed,
                                 const GenreTokenNetwork<T>& gtn,
                                 const CrossConditionalGpt<T>& gpt, const VqVae<T>& vq,
                                 const std::optional<Tensor<T>>& genre_override = std::nullopt);

}  // namespace gtnb
