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

#include "gtnb/layers.hpp"
#include "gtnb/pose.hpp"

namespace gtnb {

struct VqConfig {
  std::size_t codebook_size = 512;
  std::size_t code_dim = 128;
  std::size_t hidden = 64;  // conv channels inside encoder and decoder
  double commitment = 0.25;
  double codebook_init_stddev = 0.02;
  // Training first runs the autoencoders without quantization for
  // warmup_epochs, then (with codebook_data_init) sets every codebook row to
  // a randomly drawn encoder output of the training clips. This happens once;
  // unused codes are never reset later.
  std::size_t warmup_epochs = 10;
  bool codebook_data_init = true;
};

// Three stride-2 stages.
inline constexpr std::size_t kVqDownsample = 8;

template <typename T>
struct Quantized {
  std::vector<int> codes;
  ad::Var<T> values;    // codebook rows, gradient reaches the codebook
  ad::Var<T> decoder;   // same values, gradient copied straight to the latent
};

// Nearest codebook row (Euclidean) for each latent row; ties go to the
// lowest index.
template <typename T>
std::vector<int> nearest_codes(const Tensor<T>& latent, const Tensor<T>& codebook);

template <typename T>
Quantized<T> quantize(const ad::Var<T>& latent, const ad::Var<T>& codebook);

// mse(x, x_hat) + mean((sg(latent) - q)^2) + commitment * mean((latent - sg(q))^2)
template <typename T>
ad::Var<T> vqvae_loss(const ad::Var<T>& x, const ad::Var<T>& x_hat, const ad::Var<T>& latent,
                      const ad::Var<T>& quantized, double commitment);

// Conv autoencoder for one half of the body.
template <typename T>
class HalfAutoencoder {
 public:
  HalfAutoencoder() = default;
  HalfAutoencoder(nn::ParameterStore<T>& store, const std::string& prefix, std::size_t width,
                  const VqConfig& config, Rng& rng);

  // [frames, width] -> [frames / 8, code_dim]
  ad::Var<T> encode(const ad::Var<T>& x) const;
  // [steps, code_dim] -> [steps * 8, width]
  ad::Var<T> decode(const ad::Var<T>& quantized) const;
  ad::Var<T> decode_codes(std::span<const int> codes) const;
  const ad::Var<T>& codebook() const { return codebook_; }
  std::size_t width() const { return width_; }

 private:
  std::size_t width_ = 0;
  nn::Conv1d<T> enc_in_, enc_out_, dec_in_, dec_out_;
  std::vector<nn::Conv1d<T>> enc_down_;
  std::vector<nn::ConvTranspose1d<T>> dec_up_;
  ad::Var<T> codebook_;  // [codebook_size, code_dim]
};

template <typename T>
struct VqForward {
  ad::Var<T> loss;           // summed over both halves
  ad::Var<T> reconstruction; // [frames, 72]
  std::vector<int> upper_codes, lower_codes;
};

struct PoseCodes {
  std::vector<int> upper;
  std::vector<int> lower;
  std::size_t size() const { return upper.size(); }
};

template <typename T>
class VqVae {
 public:
  VqVae(nn::ParameterStore<T>& store, VqConfig config, Rng& rng, std::string prefix = "vq");

  // Per-column standardization applied before encoding and undone after
  // decoding ([1, 72] each; defaults shift 0, scale 1). Stored as frozen
  // parameters so checkpoints carry them.
  void set_normalization(const Tensor<T>& shift, const Tensor<T>& scale);
  Tensor<T> normalize(const Tensor<T>& pose) const;
  Tensor<T> denormalize(const Tensor<T>& pose) const;

  const HalfAutoencoder<T>& half(Half h) const { return h == Half::Upper ? upper_ : lower_; }
  const VqConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  std::string codebook_name(Half h) const;

  // pose: [frames, 72] with frames divisible by 8. The loss is measured on
  // standardized poses; `reconstruction` is in the original units. With
  // `bypass` the decoders read the continuous latents and the loss is
  // reconstruction only.
  VqForward<T> forward(const Tensor<T>& pose, bool bypass = false) const;
  PoseCodes encode_codes(const Tensor<T>& pose) const;
  Tensor<T> decode_codes(const PoseCodes& codes) const;

 private:
  VqConfig config_;
  std::string prefix_;
  nn::ParameterStore<T>* store_;
  HalfAutoencoder<T> upper_, lower_;
};

// Deterministic pose -> code streams with a trained model.
template <typename T>
PoseCodes pose_to_codes(const VqVae<T>& model, const PoseSequence& pose);

}  // namespace gtnb
