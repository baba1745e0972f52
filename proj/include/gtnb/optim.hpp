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
#include <map>
#include <string>

#include "gtnb/layers.hpp"

namespace gtnb::nn {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

// Bias-corrected Adam update. Parameters under a frozen prefix are skipped
// entirely (moments untouched). Every gradient is validated before any
// parameter changes; a missing entry counts as a zero gradient.
template <typename T>
void adam_step(ParameterStore<T>& params, const GradientMap<T>& grads, OptimizerState<T>& state);

// Same, reading gradients accumulated on the store's leaves.
template <typename T>
void adam_step(ParameterStore<T>& params, OptimizerState<T>& state);

}  // namespace gtnb::nn
