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

#include "gtnb/vqvae.hpp"

#include <limits>

namespace gtnb {

template <typename T>
std::vector<int> nearest_codes(const Tensor<T>& latent, const Tensor<T>& codebook) {
  if (codebook.rank() != 2 || codebook.rows() == 0) throw Error("quantize: empty codebook");
  if (latent.rank() != 2 || latent.cols() != codebook.cols()) {
    throw ShapeError("quantize: latent " + shape_str(latent.shape()) + " vs codebook " +
                     shape_str(codebook.shape()));
  }
  const std::size_t dim = codebook.cols();
  std::vector<int> codes(latent.rows());
  for (std::size_t r = 0; r < latent.rows(); ++r) {
    const T* x = latent.ptr() + r * dim;
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (std::size_t k = 0; k < codebook.rows(); ++k) {
      const T* e = codebook.ptr() + k * dim;
      double d = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = static_cast<double>(x[c]) - static_cast<double>(e[c]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_k = static_cast<int>(k);
      }
    }
    codes[r] = best_k;
  }
  return codes;
}

template <typename T>
Quantized<T> quantize(const ad::Var<T>& latent, const ad::Var<T>& codebook) {
  Quantized<T> q;
  q.codes = nearest_codes(latent.value(), codebook.value());
  q.values = ad::gather_rows(codebook, std::span<const int>(q.codes));
  q.decoder = ad::straight_through(latent, q.values);
  return q;
}

template <typename T>
ad::Var<T> vqvae_loss(const ad::Var<T>& x, const ad::Var<T>& x_hat, const ad::Var<T>& latent,
                      const ad::Var<T>& quantized, double commitment) {
  if (x.shape() != x_hat.shape() || latent.shape() != quantized.shape()) {
    throw ShapeError("vqvae_loss: shape mismatch");
  }
  const auto recon = ad::mse(x, x_hat);
  const auto codebook_term = ad::mse(ad::stop_gradient(latent), quantized);
  const auto commit_term = ad::mse(latent, ad::stop_gradient(quantized));
  return ad::add(ad::add(recon, codebook_term),
                 ad::scale(commit_term, static_cast<T>(commitment)));
}

template <typename T>
HalfAutoencoder<T>::HalfAutoencoder(nn::ParameterStore<T>& store, const std::string& prefix,
                                    std::size_t width, const VqConfig& config, Rng& rng)
    : width_(width) {
  const std::size_t h = config.hidden;
  enc_in_ = nn::Conv1d<T>(store, prefix + ".enc.in", width, h, 3, 1, 1, rng);
  for (int i = 0; i < 3; ++i) {
    enc_down_.emplace_back(store, prefix + ".enc.down" + std::to_string(i), h, h, 4, 2, 1, rng);
  }
  enc_out_ = nn::Conv1d<T>(store, prefix + ".enc.out", h, config.code_dim, 3, 1, 1, rng);
  dec_in_ = nn::Conv1d<T>(store, prefix + ".dec.in", config.code_dim, h, 3, 1, 1, rng);
  for (int i = 0; i < 3; ++i) {
    dec_up_.emplace_back(store, prefix + ".dec.up" + std::to_string(i), h, h, 4, 2, 1, rng);
  }
  dec_out_ = nn::Conv1d<T>(store, prefix + ".dec.out", h, width, 3, 1, 1, rng);

  Tensor<T> book({config.codebook_size, config.code_dim});
  for (auto& v : book.values()) v = static_cast<T>(config.codebook_init_stddev * rng.normal());
  codebook_ = store.add(prefix + ".codebook", std::move(book));
}

template <typename T>
ad::Var<T> HalfAutoencoder<T>::encode(const ad::Var<T>& x) const {
  if (x.shape().size() != 2 || x.cols() != width_) {
    throw ShapeError("vq encoder expects [frames, " + std::to_string(width_) + "], got " +
                     shape_str(x.shape()));
  }
  if (x.rows() == 0 || x.rows() % kVqDownsample != 0) {
    throw ShapeError("vq encoder needs a positive multiple of 8 frames, got " +
                     std::to_string(x.rows()) + "; crop the clip first");
  }
  auto y = ad::relu(enc_in_(x));
  for (const auto& down : enc_down_) y = ad::relu(down(y));
  return enc_out_(y);
}

template <typename T>
ad::Var<T> HalfAutoencoder<T>::decode(const ad::Var<T>& quantized) const {
  auto y = ad::relu(dec_in_(quantized));
  for (const auto& up : dec_up_) y = ad::relu(up(y));
  return dec_out_(y);
}

template <typename T>
ad::Var<T> HalfAutoencoder<T>::decode_codes(std::span<const int> codes) const {
  const int n = static_cast<int>(codebook_.rows());
  for (int c : codes) {
    if (c < 0 || c >= n) {
      throw Error("pose code " + std::to_string(c) + " outside [0, " + std::to_string(n) + ")");
    }
  }
  if (codes.empty()) throw EmptyInputError("no pose codes to decode");
  return decode(ad::gather_rows(ad::stop_gradient(codebook_), codes));
}

template <typename T>
VqVae<T>::VqVae(nn::ParameterStore<T>& store, VqConfig config, Rng& rng, std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)), store_(&store) {
  store.add(prefix_ + ".norm.shift", Tensor<T>({1, kPoseWidth}));
  store.add(prefix_ + ".norm.scale", Tensor<T>::full({1, kPoseWidth}, T{1}));
  store.freeze(prefix_ + ".norm");
  upper_ = HalfAutoencoder<T>(store, prefix_ + ".upper", kUpperWidth, config_, rng);
  lower_ = HalfAutoencoder<T>(store, prefix_ + ".lower", kLowerWidth, config_, rng);
}

template <typename T>
void VqVae<T>::set_normalization(const Tensor<T>& shift, const Tensor<T>& scale) {
  store_->assign(prefix_ + ".norm.shift", shift);
  store_->assign(prefix_ + ".norm.scale", scale);
}

template <typename T>
Tensor<T> VqVae<T>::normalize(const Tensor<T>& pose) const {
  if (pose.rank() != 2 || pose.cols() != kPoseWidth) {
    throw ShapeError("pose must be [frames, 72], got " + shape_str(pose.shape()));
  }
  const auto& shift = store_->get(prefix_ + ".norm.shift").value();
  const auto& scale = store_->get(prefix_ + ".norm.scale").value();
  Tensor<T> out(pose.shape());
  for (std::size_t f = 0; f < pose.rows(); ++f) {
    for (std::size_t c = 0; c < kPoseWidth; ++c) out.at(f, c) = (pose.at(f, c) - shift[c]) * scale[c];
  }
  return out;
}

template <typename T>
Tensor<T> VqVae<T>::denormalize(const Tensor<T>& pose) const {
  const auto& shift = store_->get(prefix_ + ".norm.shift").value();
  const auto& scale = store_->get(prefix_ + ".norm.scale").value();
  Tensor<T> out(pose.shape());
  for (std::size_t f = 0; f < pose.rows(); ++f) {
    for (std::size_t c = 0; c < kPoseWidth; ++c) out.at(f, c) = pose.at(f, c) / scale[c] + shift[c];
  }
  return out;
}

template <typename T>
std::string VqVae<T>::codebook_name(Half h) const {
  return prefix_ + "." + half_name(h) + ".codebook";
}

template <typename T>
VqForward<T> VqVae<T>::forward(const Tensor<T>& pose, bool bypass) const {
  const auto halves = split_body(normalize(pose));
  VqForward<T> out;
  std::vector<ad::Var<T>> losses;
  Tensor<T> recon_upper, recon_lower;
  for (Half h : {Half::Upper, Half::Lower}) {
    const auto& ae = half(h);
    const auto x = ad::Var<T>::constant(h == Half::Upper ? halves.upper : halves.lower);
    const auto latent = ae.encode(x);
    auto q = quantize(latent, ae.codebook());
    const auto x_hat = ae.decode(bypass ? latent : q.decoder);
    losses.push_back(bypass ? ad::mse(x, x_hat)
                            : vqvae_loss(x, x_hat, latent, q.values, config_.commitment));
    if (h == Half::Upper) {
      out.upper_codes = std::move(q.codes);
      recon_upper = x_hat.value();
    } else {
      out.lower_codes = std::move(q.codes);
      recon_lower = x_hat.value();
    }
  }
  out.loss = ad::add(losses[0], losses[1]);
  out.reconstruction = ad::Var<T>::constant(denormalize(merge_body(recon_upper, recon_lower)));
  return out;
}

template <typename T>
PoseCodes VqVae<T>::encode_codes(const Tensor<T>& pose) const {
  const auto halves = split_body(normalize(pose));
  PoseCodes codes;
  codes.upper = nearest_codes(upper_.encode(ad::Var<T>::constant(halves.upper)).value(),
                              upper_.codebook().value());
  codes.lower = nearest_codes(lower_.encode(ad::Var<T>::constant(halves.lower)).value(),
                              lower_.codebook().value());
  return codes;
}

template <typename T>
Tensor<T> VqVae<T>::decode_codes(const PoseCodes& codes) const {
  if (codes.upper.size() != codes.lower.size()) {
    throw ShapeError("upper and lower code streams differ in length");
  }
  return denormalize(merge_body(upper_.decode_codes(codes.upper).value(),
                                lower_.decode_codes(codes.lower).value()));
}

template <typename T>
PoseCodes pose_to_codes(const VqVae<T>& model, const PoseSequence& pose) {
  return model.encode_codes(pose.data.template cast<T>());
}

template std::vector<int> nearest_codes(const Tensor<float>&, const Tensor<float>&);
template std::vector<int> nearest_codes(const Tensor<double>&, const Tensor<double>&);
template Quantized<float> quantize(const ad::Var<float>&, const ad::Var<float>&);
template Quantized<double> quantize(const ad::Var<double>&, const ad::Var<double>&);
template ad::Var<float> vqvae_loss(const ad::Var<float>&, const ad::Var<float>&,
                                   const ad::Var<float>&, const ad::Var<float>&, double);
template ad::Var<double> vqvae_loss(const ad::Var<double>&, const ad::Var<double>&,
                                    const ad::Var<double>&, const ad::Var<double>&, double);
template class HalfAutoencoder<float>;
template class HalfAutoencoder<double>;
template class VqVae<float>;
template class VqVae<double>;
template PoseCodes pose_to_codes(const VqVae<float>&, const PoseSequence&);
template PoseCodes pose_to_codes(const VqVae<double>&, const PoseSequence&);

}  // namespace gtnb
