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

#ifndef MIXCON_OPTIM_HPP_
#define MIXCON_OPTIM_HPP_

#include "mixcon/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mixcon {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Biases and logit scales are excluded from weight decay.
inline bool is_no_decay(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".b") || name.rfind("scale/", 0) == 0;
}

template <typename Scalar>
struct OptimState {
  AdamWHyper hyper;
  std::int64_t step = 0;
  GradMap<Scalar> first_moment;
  GradMap<Scalar> second_moment;
};

// Decoupled weight decay with bias-corrected moments. Parameters absent from
// `grads` are left untouched, decay included.
template <typename Scalar>
void adamw_step(TensorMap<Scalar>& params, const GradMap<Scalar>& grads,
                OptimState<Scalar>& state, double lr,
                const std::function<bool(const std::string&)>& no_decay =
                    is_no_decay) {
  if (lr < 0) throw std::invalid_argument("adamw_step: negative learning rate");
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw ShapeError("adamw_step: gradient for unknown parameter " + name);
    }
    if (it->second.values.rows() != g.rows() ||
        it->second.values.cols() != g.cols()) {
      throw ShapeError("adamw_step: gradient shape mismatch for " + name);
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(h.beta1, t));
  const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(h.beta2, t));
  const Scalar b1 = static_cast<Scalar>(h.beta1);
  const Scalar b2 = static_cast<Scalar>(h.beta2);
  const Scalar step_lr = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(h.eps);

  for (const auto& [name, g] : grads) {
    Mat<Scalar>& theta = params.at(name).values;
    auto [mit, m_new] = state.first_moment.try_emplace(
        name, Mat<Scalar>::Zero(g.rows(), g.cols()));
    auto [vit, v_new] = state.second_moment.try_emplace(
        name, Mat<Scalar>::Zero(g.rows(), g.cols()));
    Mat<Scalar>& m = mit->second;
    Mat<Scalar>& v = vit->second;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    if (h.weight_decay != 0.0 && !no_decay(name)) {
      theta *= Scalar(1) - step_lr * static_cast<Scalar>(h.weight_decay);
    }
    theta.array() -= step_lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + eps);
  }
}

// Linear warmup from zero, then half-cosine decay to zero.
struct Schedule {
  double base_lr = 1e-3;
  std::int64_t batch_size = 256;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;

  // Linear scaling rule.
  double peak_lr() const {
    return base_lr * static_cast<double>(batch_size) / 256.0;
  }

  void validate() const {
    if (total_steps <= 0 || warmup_steps < 0 || warmup_steps >= total_steps) {
      throw std::invalid_argument(
          "schedule: need 0 <= warmup_steps < total_steps");
    }
  }
};

inline double lr_at(std::int64_t step, const Schedule& s) {
  s.validate();
  if (step < 0 || step > s.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) +
                            " outside [0, " + std::to_string(s.total_steps) +
                            "]");
  }
  const double peak = s.peak_lr();
  if (step < s.warmup_steps) {
    return peak * (static_cast<double>(step) /
                   static_cast<double>(s.warmup_steps));
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mixcon

#endif  // MIXCON_OPTIM_HPP_
