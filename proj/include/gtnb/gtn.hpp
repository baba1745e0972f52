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

#include <span>
#include <string>
#include <vector>

#include "gtnb/genre.hpp"
#include "gtnb/layers.hpp"

namespace gtnb {

struct GtnConfig {
  std::size_t mel_bands = 80;
  std::vector<std::size_t> channels{32, 32, 64, 64, 128, 128};
  std::size_t width = 128;  // reference embedding, tokens and genre embedding
  std::size_t genres = kGenreCount;
  // Key/value projections of the tokens; when off, raw tokens serve as both.
  bool project_tokens = true;
  // Log-mel values are multiplied by this before the conv stack.
  double input_scale = 0.1;
  double token_init_stddev = 0.3;
};

// Attention weights over the genre tokens and the soft genre embedding.
template <typename T>
struct GenreInference {
  ad::Var<T> weights;    // [1, genres], a probability vector
  ad::Var<T> embedding;  // [1, width]
};

// Reference encoder (strided 2-D conv stack + GRU over the mel image),
// genre token bank and single-head token attention. Parameters live in the
// caller's store under `prefix`.
template <typename T>
class GenreTokenNetwork {
 public:
  GenreTokenNetwork(nn::ParameterStore<T>& store, GtnConfig config, Rng& rng,
                    std::string prefix = "gtn");

  // mel: [frames, mel_bands]; returns [1, width].
  ad::Var<T> reference_encode(const Tensor<T>& mel) const;
  ad::Var<T> reference_encode(const ad::Var<T>& mel) const;
  GenreInference<T> attend(const ad::Var<T>& reference) const;
  GenreInference<T> forward(const Tensor<T>& mel) const { return attend(reference_encode(mel)); }

  // Value-projected tokens, [genres, width].
  ad::Var<T> value_tokens() const;
  // weights [1, genres] -> embedding [1, width], bypassing the attention.
  ad::Var<T> embedding_from_weights(const ad::Var<T>& weights) const;

  const GtnConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  const ad::Var<T>& tokens() const { return tokens_; }

 private:
  GtnConfig config_;
  std::string prefix_;
  std::vector<nn::Conv2d<T>> convs_;
  nn::Gru<T> gru_;
  ad::Var<T> tokens_;  // [genres, width]
  nn::Linear<T> query_, key_, value_;
};

// Mean over clips of CE(one-hot label, token weights).
template <typename T>
ad::Var<T> gtn_loss(std::span<const GenreInference<T>> inferences, std::span<const int> labels);

template <typename T>
Tensor<T> one_hot(int label, std::size_t count);

}  // namespace gtnb
