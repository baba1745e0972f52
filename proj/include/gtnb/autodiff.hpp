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

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gtnb/tensor.hpp"

// Reverse-mode automatic differentiation over dense tensors.
//
// A Var is a handle to a node in a dynamically built graph. Operations on
// Vars that require gradients record a backward closure; Var::backward()
// walks the graph in reverse topological order and accumulates gradients
// into every reachable node. Leaves (parameters) keep their gradient until
// zero_grad() is called.
namespace gtnb::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<T> value, bool requires_grad);
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool valid() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  // Leaves only: stops (or resumes) gradient flow into this value.
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  T item() const;

  // Gradient accumulated by backward(); zeros if none has reached this node.
  const Tensor<T>& grad() const { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.numel() == node_->value.numel(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  // Seeds d(self)/d(self) = 1; self must hold exactly one element.
  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Elementwise and broadcasting arithmetic. `add_row` broadcasts a [1, n]
// row over every row of an [m, n] matrix.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_row(const Var<T>& a, const Var<T>& row);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> one_minus(const Var<T>& a);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);

// [m, k] x [k, n]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [m, k] x [n, k]^T
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end);
template <typename T> Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t end);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> gather_rows(const Var<T>& table, std::span<const int> indices);
// Non-overlapping mean over groups of `factor` consecutive rows.
template <typename T> Var<T> avg_pool_rows(const Var<T>& a, std::size_t factor);

// Row-wise softmax. When `allowed` is non-empty it is a rows x cols mask
// (non-zero = may attend); disallowed entries get probability exactly 0.
template <typename T>
Var<T> softmax_rows(const Var<T>& a, std::span<const std::uint8_t> allowed = {});

// -sum(target * ln(max(p, eps))) over all elements.
template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const Tensor<T>& target, T eps = T(1e-12));

template <typename T>
Var<T> layer_norm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <typename T> Var<T> stop_gradient(const Var<T>& a);
// Forward value of `quantized`; gradient passed unchanged to `latent`.
template <typename T> Var<T> straight_through(const Var<T>& latent, const Var<T>& quantized);

// x: [T, Cin] channels-last; weight: [K * Cin, Cout]; bias: [1, Cout].
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding);
// x: [T, Cin]; weight: [Cin, K * Cout]; bias: [1, Cout].
// Output length (T - 1) * stride - 2 * padding + kernel.
template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                        std::size_t kernel, std::size_t stride, std::size_t padding);
// x: [Cin, H, W]; weight: [Cout, Cin * K * K]; bias: [1, Cout].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding);

// Plain (non-differentiable) helpers shared by the layers and tests.
template <typename T> std::vector<T> softmax(std::span<const T> logits);
template <typename T> T cross_entropy(std::span<const T> pred, std::span<const T> target,
                                      T eps = T(1e-12));

}  // namespace gtnb::ad
