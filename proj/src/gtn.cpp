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

#include "gtnb/gtn.hpp"

#include <cmath>

namespace gtnb {

template <typename T>
GenreTokenNetwork<T>::GenreTokenNetwork(nn::ParameterStore<T>& store, GtnConfig config, Rng& rng,
                                        std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)) {
  if (config_.channels.empty()) throw Error("reference encoder needs at least one conv layer");
  std::size_t cin = 1;
  std::size_t freq = config_.mel_bands;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    convs_.emplace_back(store, prefix_ + ".ref.conv" + std::to_string(i), cin,
                        config_.channels[i], 3, 2, 1, rng);
    cin = config_.channels[i];
    freq = (freq + 1) / 2;
  }
  gru_ = nn::Gru<T>(store, prefix_ + ".ref.gru", cin * freq, config_.width, rng);

  Tensor<T> tokens({config_.genres, config_.width});
  for (auto& v : tokens.values()) v = static_cast<T>(config_.token_init_stddev * rng.normal());
  tokens_ = store.add(prefix_ + ".tokens", std::move(tokens));
  query_ = nn::Linear<T>(store, prefix_ + ".attn.query", config_.width, config_.width, rng);
  if (config_.project_tokens) {
    key_ = nn::Linear<T>(store, prefix_ + ".attn.key", config_.width, config_.width, rng, false);
    value_ =
        nn::Linear<T>(store, prefix_ + ".attn.value", config_.width, config_.width, rng, false);
  }
}

template <typename T>
ad::Var<T> GenreTokenNetwork<T>::reference_encode(const Tensor<T>& mel) const {
  return reference_encode(ad::Var<T>::constant(mel));
}

template <typename T>
ad::Var<T> GenreTokenNetwork<T>::reference_encode(const ad::Var<T>& mel) const {
  if (mel.shape().size() != 2 || mel.cols() != config_.mel_bands) {
    throw ShapeError("reference encoder expects [frames, " + std::to_string(config_.mel_bands) +
                     "] mel, got " + shape_str(mel.shape()));
  }
  if (mel.rows() == 0) throw EmptyInputError("reference encoder needs at least one frame");
  auto x = ad::reshape(ad::scale(mel, static_cast<T>(config_.input_scale)),
                       {1, mel.rows(), mel.cols()});
  for (const auto& conv : convs_) x = ad::relu(conv(x));
  // [C, H, W] -> one row per time step H holding all (W, C) values.
  const std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  auto rows = ad::reshape(ad::transpose(ad::reshape(x, {c, h * w})), {h, w * c});
  return gru_(rows);
}

template <typename T>
ad::Var<T> GenreTokenNetwork<T>::value_tokens() const {
  return config_.project_tokens ? value_(tokens_) : tokens_;
}

template <typename T>
GenreInference<T> GenreTokenNetwork<T>::attend(const ad::Var<T>& reference) const {
  if (reference.shape() != Shape{1, config_.width}) {
    throw ShapeError("genre token attention expects a [1, " + std::to_string(config_.width) +
                     "] reference embedding, got " + shape_str(reference.shape()));
  }
  const auto q = query_(reference);
  const auto keys = config_.project_tokens ? key_(tokens_) : tokens_;
  const T temperature = T{1} / std::sqrt(static_cast<T>(config_.width));
  GenreInference<T> out;
  out.weights = ad::softmax_rows(ad::scale(ad::matmul_nt(q, keys), temperature));
  out.embedding = ad::matmul(out.weights, value_tokens());
  return out;
}

template <typename T>
ad::Var<T> GenreTokenNetwork<T>::embedding_from_weights(const ad::Var<T>& weights) const {
  if (weights.shape() != Shape{1, config_.genres}) {
    throw ShapeError("genre weights must be [1, " + std::to_string(config_.genres) + "]");
  }
  return ad::matmul(weights, value_tokens());
}

template <typename T>
Tensor<T> one_hot(int label, std::size_t count) {
  if (label < 0 || static_cast<std::size_t>(label) >= count) {
    throw Error("label " + std::to_string(label) + " out of range for " + std::to_string(count) +
                " classes");
  }
  Tensor<T> t({1, count});
  t[static_cast<std::size_t>(label)] = T{1};
  return t;
}

template <typename T>
ad::Var<T> gtn_loss(std::span<const GenreInference<T>> inferences, std::span<const int> labels) {
  if (inferences.size() != labels.size()) {
    throw ShapeError("gtn_loss: " + std::to_string(inferences.size()) + " inferences for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (inferences.empty()) throw EmptyInputError("gtn_loss: empty batch");
  std::vector<ad::Var<T>> terms;
  terms.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& w = inferences[i].weights;
    terms.push_back(ad::cross_entropy(w, one_hot<T>(labels[i], w.numel())));
  }
  return ad::mean(ad::concat_rows(terms));
}

template class GenreTokenNetwork<float>;
template class GenreTokenNetwork<double>;
template Tensor<float> one_hot<float>(int, std::size_t);
template Tensor<double> one_hot<double>(int, std::size_t);
template ad::Var<float> gtn_loss(std::span<const GenreInference<float>>, std::span<const int>);
template ad::Var<double> gtn_loss(std::span<const GenreInference<double>>, std::span<const int>);

}  // namespace gtnb
