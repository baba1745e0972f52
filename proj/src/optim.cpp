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

#include "gtnb/optim.hpp"

#include <cmath>

namespace gtnb::nn {

template <typename T>
void adam_step(ParameterStore<T>& params, const GradientMap<T>& grads, OptimizerState<T>& state) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw Error("gradient for unknown parameter: " + name);
    const auto var = params.get(name);
    if (g.shape() != var.shape()) {
      throw ShapeError("gradient for " + name + " has shape " + shape_str(g.shape()) +
                       ", parameter has " + shape_str(var.shape()));
    }
    for (T v : g.values()) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter " + name);
    }
  }

  ++state.step;
  const auto& hp = state.config;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (const auto& [name, var_const] : params.entries()) {
    if (params.is_frozen(name)) continue;
    auto var = var_const;
    auto& value = var.mutable_value();
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.shape() != value.shape()) m = Tensor<T>(value.shape());
    if (v.shape() != value.shape()) v = Tensor<T>(value.shape());
    const auto it = grads.find(name);
    const Tensor<T>* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
      const double mi = hp.beta1 * static_cast<double>(m[i]) + (1.0 - hp.beta1) * gi;
      const double vi = hp.beta2 * static_cast<double>(v[i]) + (1.0 - hp.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = hp.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + hp.epsilon);
      value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
    }
  }
}

template <typename T>
void adam_step(ParameterStore<T>& params, OptimizerState<T>& state) {
  GradientMap<T> grads;
  for (const auto& [name, var] : params.entries()) {
    if (var.has_grad()) grads.emplace(name, var.grad());
  }
  adam_step(params, grads, state);
}

template void adam_step(ParameterStore<float>&, const GradientMap<float>&, OptimizerState<float>&);
template void adam_step(ParameterStore<double>&, const GradientMap<double>&,
                        OptimizerState<double>&);
template void adam_step(ParameterStore<float>&, OptimizerState<float>&);
template void adam_step(ParameterStore<double>&, OptimizerState<double>&);

}  // namespace gtnb::nn
