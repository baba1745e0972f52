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

#include "gtnb/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtnb/rng.hpp"

namespace gtnb::nn {
namespace {

double relative_error(double ad, double fd) {
  return std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
}

double scalar_of(const ad::Var<double>& v) {
  if (v.numel() != 1) {
    throw ShapeError("grad_check: function output must be scalar, got " + shape_str(v.shape()));
  }
  return v.item();
}

}  // namespace

double grad_check(const std::function<ad::Var<double>(const ad::Var<double>&)>& fn,
                  const Tensor<double>& point, double h) {
  auto x = ad::Var<double>::leaf(point, true);
  const auto out = fn(x);
  scalar_of(out);
  out.backward();
  const Tensor<double> analytic = x.grad();

  double worst = 0.0;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    Tensor<double> plus = point, minus = point;
    plus[i] += h;
    minus[i] -= h;
    const double fp = scalar_of(fn(ad::Var<double>::constant(plus)));
    const double fm = scalar_of(fn(ad::Var<double>::constant(minus)));
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

GradCheckReport grad_check_parameters(const std::function<ad::Var<double>()>& loss,
                                      ParameterStore<double>& store, double h,
                                      std::size_t max_per_tensor, std::uint64_t seed) {
  store.zero_grad();
  const auto out = loss();
  scalar_of(out);
  out.backward();

  Rng rng(seed);
  GradCheckReport report;
  for (const auto& [name, var_const] : store.entries()) {
    if (store.is_frozen(name)) continue;
    auto var = var_const;
    const Tensor<double> analytic = var.grad();
    std::vector<std::size_t> coords(var.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_per_tensor != 0 && coords.size() > max_per_tensor) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_per_tensor);
    }
    for (auto i : coords) {
      auto& value = var.mutable_value();
      const double saved = value[i];
      value[i] = saved + h;
      const double fp = scalar_of(loss());
      value[i] = saved - h;
      const double fm = scalar_of(loss());
      value[i] = saved;
      const double err = relative_error(analytic[i], (fp - fm) / (2.0 * h));
      ++report.coordinates_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = name;
        report.worst_index = i;
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace gtnb::nn
