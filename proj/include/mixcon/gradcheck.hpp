// Copyright 2026 The mixcon Authors.
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

#ifndef MIXCON_GRADCHECK_HPP_
#define MIXCON_GRADCHECK_HPP_

#include "mixcon/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace mixcon {

using BoundParams = std::map<std::string, Var<double>>;

// Builds the scalar objective on a tape from the bound parameters.
using Objective = std::function<Var<double>(Tape<double>&, const BoundParams&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace detail {

inline double evaluate(const Objective& f, const TensorMap<double>& params,
                       bool trainable, GradMap<double>* grads) {
  Tape<double> tape;
  tape.set_check_finite(true);
  BoundParams bound;
  for (const auto& [name, t] : params) {
    bound.emplace(name, trainable ? tape.parameter(name, t.values)
                                  : tape.constant(t.values));
  }
  Var<double> out = f(tape, bound);
  if (grads != nullptr) *grads = tape.backward(out);
  return out.value()(0, 0);
}

}  // namespace detail

// Central-difference check of every parameter coordinate. When
// `max_coords_per_tensor` is positive, larger tensors are probed on a seeded
// sample of that many coordinates instead of exhaustively.
inline GradCheckResult grad_check(const Objective& f, TensorMap<double> params,
                                  double eps,
                                  std::size_t max_coords_per_tensor = 0,
                                  std::uint64_t sample_seed = 0) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-4]");
  }
  GradMap<double> grads;
  detail::evaluate(f, params, true, &grads);

  GradCheckResult res;
  std::mt19937_64 rng(sample_seed);
  for (auto& [name, tensor] : params) {
    const Eigen::Index n = tensor.values.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (max_coords_per_tensor > 0 &&
        coords.size() > max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto it = grads.find(name);
    for (Eigen::Index k : coords) {
      double* slot = tensor.values.data() + k;
      const double saved = *slot;
      *slot = saved + eps;
      const double up = detail::evaluate(f, params, false, nullptr);
      *slot = saved - eps;
      const double down = detail::evaluate(f, params, false, nullptr);
      *slot = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic =
          it == grads.end() ? 0.0 : *(it->second.data() + k);
      const double err = relative_error(analytic, numeric);
      ++res.coordinates;
      if (err > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = err;
        res.worst_param = name;
        res.worst_index = k;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace mixcon

#endif  // MIXCON_GRADCHECK_HPP_
