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

#include <map>
#include <set>
#include <string>

#include "gtnb/autodiff.hpp"
#include "gtnb/rng.hpp"

namespace gtnb::nn {

// Named learnable tensors. Names are dot-separated paths ("gtn.ref.conv0.w");
// a frozen prefix matches whole path segments only, so freezing "gtn" covers
// "gtn.tokens" but not "gtnx.w".
template <typename T>
class ParameterStore {
 public:
  using Entries = std::map<std::string, ad::Var<T>>;

  ad::Var<T> add(const std::string& name, Tensor<T> init);
  ad::Var<T> get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  // Overwrites the value of an existing entry; shapes must match.
  void assign(const std::string& name, const Tensor<T>& value);

  const Entries& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;

  void freeze(const std::string& prefix) { frozen_.insert(prefix); }
  void unfreeze(const std::string& prefix) { frozen_.erase(prefix); }
  bool is_frozen(const std::string& name) const;
  const std::set<std::string>& frozen() const noexcept { return frozen_; }

  void zero_grad();

  // Copies every value whose name starts with `prefix` (segment-wise) from
  // `other`; all such names must exist in both stores.
  void copy_from(const ParameterStore& other, const std::string& prefix = "");

 private:
  Entries entries_;
  std::set<std::string> frozen_;
};

bool prefix_matches(const std::string& prefix, const std::string& name);

// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         Rng& rng, bool bias = true);
  ad::Var<T> operator()(const ad::Var<T>& x) const;
  const ad::Var<T>& weight() const { return weight_; }

 private:
  ad::Var<T> weight_;  // [in, out]
  ad::Var<T> bias_;    // [1, out]
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);
  ad::Var<T> operator()(const ad::Var<T>& x) const;

 private:
  ad::Var<T> weight_, bias_;
  std::size_t kernel_ = 0, stride_ = 1, padding_ = 0;
};

template <typename T>
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(ParameterStore<T>& store, const std::string& name, std::size_t cin,
                  std::size_t cout, std::size_t kernel, std::size_t stride, std::size_t padding,
                  Rng& rng);
  ad::Var<T> operator()(const ad::Var<T>& x) const;

 private:
  ad::Var<T> weight_, bias_;
  std::size_t kernel_ = 0, stride_ = 1, padding_ = 0;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);
  ad::Var<T> operator()(const ad::Var<T>& x) const;

 private:
  ad::Var<T> weight_, bias_;
  std::size_t kernel_ = 0, stride_ = 1, padding_ = 0;
};

// Single-layer GRU over the rows of x ([steps, in]); returns the final
// hidden state [1, hidden] starting from a zero state.
template <typename T>
class Gru {
 public:
  Gru() = default;
  Gru(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t hidden,
      Rng& rng);
  ad::Var<T> operator()(const ad::Var<T>& x) const;
  std::size_t hidden() const { return hidden_; }

 private:
  ad::Var<T> w_in_, w_hid_, b_in_, b_hid_;  // gate order: reset, update, candidate
  std::size_t hidden_ = 0;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim);
  ad::Var<T> operator()(const ad::Var<T>& x) const;

 private:
  ad::Var<T> gamma_, beta_;
};

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore<T>& store, const std::string& name, std::size_t count,
            std::size_t dim, Rng& rng, double stddev = 0.02);
  ad::Var<T> operator()(std::span<const int> ids) const;
  const ad::Var<T>& table() const { return table_; }

 private:
  ad::Var<T> table_;
};

// Multi-head self-attention. `allowed` is an n x n mask (non-zero = query
// row may attend to key column); empty means unmasked.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                     std::size_t heads, Rng& rng);
  ad::Var<T> operator()(const ad::Var<T>& x, std::span<const std::uint8_t> allowed = {}) const;

 private:
  Linear<T> qkv_, out_;
  std::size_t dim_ = 0, heads_ = 1;
};

}  // namespace gtnb::nn
