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

#ifndef MIXCON_LOSSES_HPP_
#define MIXCON_LOSSES_HPP_

#include "mixcon/autodiff.hpp"
#include "mixcon/model.hpp"

#include <array>
#include <optional>
#include <string>

namespace mixcon {

struct LossFlags {
  bool p_i = true;
  bool p_t = true;
  bool i_t = true;
  bool d3_t = true;

  // Point-image plus point-text only.
  static LossFlags baseline() { return {true, true, false, false}; }
  static LossFlags full() { return {}; }

  std::array<bool, 4> as_array() const { return {p_i, p_t, i_t, d3_t}; }
  bool any() const { return p_i || p_t || i_t || d3_t; }
};

// Mean over the batch in each direction. Each direction gets its own
// similarity product so that swapping the arguments swaps two summands and
// nothing else.
template <typename Scalar>
Var<Scalar> info_nce(Var<Scalar> a, Var<Scalar> b, Var<Scalar> scale) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("info_nce: shape mismatch " +
                     ad::detail::dims(a.rows(), a.cols()) + " vs " +
                     ad::detail::dims(b.rows(), b.cols()));
  }
  if (a.rows() < 1) throw ShapeError("info_nce: empty batch");
  if (scale.rows() != 1 || scale.cols() != 1) {
    throw ShapeError("info_nce: scale must be 1x1");
  }
  if (!(scale.value()(0, 0) > Scalar(0))) {
    throw std::invalid_argument("info_nce: scale must be positive");
  }
  auto direction = [&](Var<Scalar> x, Var<Scalar> y) {
    Var<Scalar> logits = ad::scale_by(ad::matmul(x, ad::transpose(y)), scale);
    return ad::mean_all(ad::logsumexp_rows(logits)) -
           ad::mean_all(ad::diag(logits));
  };
  return ad::scale(direction(a, b) + direction(b, a), Scalar(0.5));
}

template <typename Scalar>
struct LossBreakdown {
  LossFlags flags;
  std::optional<double> p_i, p_t, i_t, d3_t;  // absent when disabled
  double total = 0.0;
  Var<Scalar> total_var;

  std::array<std::optional<double>, 4> terms() const {
    return {p_i, p_t, i_t, d3_t};
  }
};

inline constexpr std::array<const char*, 4> kLossNames = {"l_p_i", "l_p_t",
                                                          "l_i_t", "l_3d_t"};

template <typename Scalar>
LossBreakdown<Scalar> total_loss(const Embeddings<Scalar>& e,
                                 const ParamVars<Scalar>& p,
                                 const LossFlags& flags) {
  if (!flags.any()) throw ConfigError("loss: every term is disabled");
  if ((flags.p_i || flags.i_t || flags.d3_t) && !e.has_image) {
    throw ConfigError("loss: image terms enabled but no views in the batch");
  }
  if ((flags.p_t || flags.i_t || flags.d3_t) && !e.has_text) {
    throw ConfigError("loss: text terms enabled but no captions in the batch");
  }
  if (flags.d3_t && !e.has_joint) {
    throw ConfigError("loss: the 3D-text term needs the sculptor");
  }
  LossBreakdown<Scalar> out;
  out.flags = flags;
  std::optional<Var<Scalar>> sum;
  auto add = [&](std::optional<double>& slot, Var<Scalar> term) {
    slot = static_cast<double>(term.value()(0, 0));
    sum = sum ? *sum + term : term;
  };
  if (flags.p_i) add(out.p_i, info_nce(e.point, e.image, logit_scale(p, 0)));
  if (flags.p_t) add(out.p_t, info_nce(e.point, e.text, logit_scale(p, 1)));
  if (flags.i_t) add(out.i_t, info_nce(e.image_it, e.text, logit_scale(p, 2)));
  if (flags.d3_t) add(out.d3_t, info_nce(e.joint, e.text, logit_scale(p, 3)));
  out.total_var = *sum;
  out.total = static_cast<double>(sum->value()(0, 0));
  return out;
}

template <typename Scalar>
LossBreakdown<Scalar> batch_loss(Tape<Scalar>& tape, const ParamVars<Scalar>& p,
                                 const ModelConfig& cfg,
                                 const BatchInputs<Scalar>& in,
                                 const LossFlags& flags) {
  return total_loss(embed_batch(tape, p, cfg, in), p, flags);
}

}  // namespace mixcon

#endif  // MIXCON_LOSSES_HPP_
