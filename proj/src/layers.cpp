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

#include "gtnb/layers.hpp"

#include <cmath>

namespace gtnb::nn {

bool prefix_matches(const std::string& prefix, const std::string& name) {
  if (prefix.empty()) return true;
  if (name.size() < prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return false;
  return name.size() == prefix.size() || name[prefix.size()] == '.';
}

template <typename T>
ad::Var<T> ParameterStore<T>::add(const std::string& name, Tensor<T> init) {
  if (name.empty()) throw Error("parameter name must not be empty");
  auto var = ad::Var<T>::leaf(std::move(init), true);
  if (!entries_.emplace(name, var).second) throw Error("duplicate parameter name: " + name);
  return var;
}

template <typename T>
ad::Var<T> ParameterStore<T>::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

template <typename T>
void ParameterStore<T>::assign(const std::string& name, const Tensor<T>& value) {
  auto var = get(name);
  if (var.shape() != value.shape()) {
    throw ShapeError("parameter " + name + " has shape " + shape_str(var.shape()) +
                     ", cannot assign " + shape_str(value.shape()));
  }
  var.mutable_value() = value;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += v.numel();
  return n;
}

template <typename T>
bool ParameterStore<T>::is_frozen(const std::string& name) const {
  for (const auto& p : frozen_) {
    if (prefix_matches(p, name)) return true;
  }
  return false;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, v] : entries_) v.zero_grad();
}

template <typename T>
void ParameterStore<T>::copy_from(const ParameterStore& other, const std::string& prefix) {
  for (const auto& [name, var] : other.entries()) {
    if (prefix_matches(prefix, name)) assign(name, var.value());
  }
  for (const auto& [name, _] : entries_) {
    if (prefix_matches(prefix, name) && !other.contains(name)) {
      throw Error("parameter missing from source store: " + name);
    }
  }
}

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                  std::size_t out, Rng& rng, bool bias) {
  weight_ = store.add(name + ".w", uniform_fan_in<T>({in, out}, in, rng));
  if (bias) bias_ = store.add(name + ".b", Tensor<T>({1, out}));
}

template <typename T>
ad::Var<T> Linear<T>::operator()(const ad::Var<T>& x) const {
  auto y = ad::matmul(x, weight_);
  return bias_.valid() ? ad::add_row(y, bias_) : y;
}

template <typename T>
Conv1d<T>::Conv1d(ParameterStore<T>& store, const std::string& name, std::size_t cin,
                  std::size_t cout, std::size_t kernel, std::size_t stride, std::size_t padding,
                  Rng& rng)
    : kernel_(kernel), stride_(stride), padding_(padding) {
  weight_ = store.add(name + ".w", uniform_fan_in<T>({kernel * cin, cout}, kernel * cin, rng));
  bias_ = store.add(name + ".b", Tensor<T>({1, cout}));
}

template <typename T>
ad::Var<T> Conv1d<T>::operator()(const ad::Var<T>& x) const {
  return ad::conv1d(x, weight_, bias_, kernel_, stride_, padding_);
}

template <typename T>
ConvTranspose1d<T>::ConvTranspose1d(ParameterStore<T>& store, const std::string& name,
                                    std::size_t cin, std::size_t cout, std::size_t kernel,
                                    std::size_t stride, std::size_t padding, Rng& rng)
    : kernel_(kernel), stride_(stride), padding_(padding) {
  // Each output sample receives about kernel / stride input taps.
  weight_ = store.add(name + ".w",
                      uniform_fan_in<T>({cin, kernel * cout}, cin * kernel / stride, rng));
  bias_ = store.add(name + ".b", Tensor<T>({1, cout}));
}

template <typename T>
ad::Var<T> ConvTranspose1d<T>::operator()(const ad::Var<T>& x) const {
  return ad::conv_transpose1d(x, weight_, bias_, kernel_, stride_, padding_);
}

template <typename T>
Conv2d<T>::Conv2d(ParameterStore<T>& store, const std::string& name, std::size_t cin,
                  std::size_t cout, std::size_t kernel, std::size_t stride, std::size_t padding,
                  Rng& rng)
    : kernel_(kernel), stride_(stride), padding_(padding) {
  const std::size_t fan_in = cin * kernel * kernel;
  weight_ = store.add(name + ".w", uniform_fan_in<T>({cout, fan_in}, fan_in, rng));
  bias_ = store.add(name + ".b", Tensor<T>({1, cout}));
}

template <typename T>
ad::Var<T> Conv2d<T>::operator()(const ad::Var<T>& x) const {
  return ad::conv2d(x, weight_, bias_, kernel_, stride_, padding_);
}

template <typename T>
Gru<T>::Gru(ParameterStore<T>& store, const std::string& name, std::size_t in,
            std::size_t hidden, Rng& rng)
    : hidden_(hidden) {
  w_in_ = store.add(name + ".w_in", uniform_fan_in<T>({in, 3 * hidden}, hidden, rng));
  w_hid_ = store.add(name + ".w_hid", uniform_fan_in<T>({hidden, 3 * hidden}, hidden, rng));
  b_in_ = store.add(name + ".b_in", Tensor<T>({1, 3 * hidden}));
  b_hid_ = store.add(name + ".b_hid", Tensor<T>({1, 3 * hidden}));
}

template <typename T>
ad::Var<T> Gru<T>::operator()(const ad::Var<T>& x) const {
  const std::size_t hsz = hidden_;
  const auto projected = ad::add_row(ad::matmul(x, w_in_), b_in_);
  auto h = ad::Var<T>::constant(Tensor<T>({1, hsz}));
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto xt = ad::slice_rows(projected, t, t + 1);
    const auto ht = ad::add_row(ad::matmul(h, w_hid_), b_hid_);
    const auto r = ad::sigmoid(ad::add(ad::slice_cols(xt, 0, hsz), ad::slice_cols(ht, 0, hsz)));
    const auto z =
        ad::sigmoid(ad::add(ad::slice_cols(xt, hsz, 2 * hsz), ad::slice_cols(ht, hsz, 2 * hsz)));
    const auto n = ad::tanh(ad::add(ad::slice_cols(xt, 2 * hsz, 3 * hsz),
                                    ad::mul(r, ad::slice_cols(ht, 2 * hsz, 3 * hsz))));
    h = ad::add(ad::mul(ad::one_minus(z), n), ad::mul(z, h));
  }
  return h;
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
  gamma_ = store.add(name + ".gamma", Tensor<T>::full({1, dim}, T{1}));
  beta_ = store.add(name + ".beta", Tensor<T>({1, dim}));
}

template <typename T>
ad::Var<T> LayerNorm<T>::operator()(const ad::Var<T>& x) const {
  return ad::layer_norm_rows(x, gamma_, beta_);
}

template <typename T>
Embedding<T>::Embedding(ParameterStore<T>& store, const std::string& name, std::size_t count,
                        std::size_t dim, Rng& rng, double stddev) {
  Tensor<T> init({count, dim});
  for (auto& v : init.values()) v = static_cast<T>(stddev * rng.normal());
  table_ = store.add(name + ".table", std::move(init));
}

template <typename T>
ad::Var<T> Embedding<T>::operator()(std::span<const int> ids) const {
  return ad::gather_rows(table_, ids);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& name,
                                          std::size_t dim, std::size_t heads, Rng& rng)
    : qkv_(store, name + ".qkv", dim, 3 * dim, rng),
      out_(store, name + ".out", dim, dim, rng),
      dim_(dim),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("attention width " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

template <typename T>
ad::Var<T> MultiHeadAttention<T>::operator()(const ad::Var<T>& x,
                                              std::span<const std::uint8_t> allowed) const {
  const std::size_t dh = dim_ / heads_;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));
  const auto qkv = qkv_(x);
  std::vector<ad::Var<T>> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto q = ad::slice_cols(qkv, h * dh, (h + 1) * dh);
    const auto k = ad::slice_cols(qkv, dim_ + h * dh, dim_ + (h + 1) * dh);
    const auto v = ad::slice_cols(qkv, 2 * dim_ + h * dh, 2 * dim_ + (h + 1) * dh);
    const auto p = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt), allowed);
    heads.push_back(ad::matmul(p, v));
  }
  return out_(heads.size() == 1 ? heads.front() : ad::concat_cols(heads));
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> uniform_fan_in<float>(Shape, std::size_t, Rng&);
template Tensor<double> uniform_fan_in<double>(Shape, std::size_t, Rng&);
template class Linear<float>;
template class Linear<double>;
template class Conv1d<float>;
template class Conv1d<double>;
template class ConvTranspose1d<float>;
template class ConvTranspose1d<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class Gru<float>;
template class Gru<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Embedding<float>;
template class Embedding<double>;
template class MultiHeadAttention<float>;
template class MultiHeadAttention<double>;

}  // namespace gtnb::nn
