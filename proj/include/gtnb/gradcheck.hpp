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

#include <functional>
#include <string>

#include "gtnb/layers.hpp"

namespace gtnb::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

// max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|), using
// central differences with step h. fn must return a single element.
double grad_check(const std::function<ad::Var<double>(const ad::Var<double>&)>& fn,
                  const Tensor<double>& point, double h = 1e-6);

// Checks d(loss)/d(parameter) for the parameters of `store`, sampling at
// most `max_per_tensor` coordinates from each tensor (0 = all of them).
// Frozen parameters are skipped.
GradCheckReport grad_check_parameters(const std::function<ad::Var<double>()>& loss,
                                      ParameterStore<double>& store, double h = 1e-6,
                                      std::size_t max_per_tensor = 0, std::uint64_t seed = 0);

}  // namespace gtnb::nn
