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

// Trainable components: the point encoder and its head, multi-view fusion,
// the 3D sculptor, the image adapter and the logit scales. Weights act on the
// right, y = x W + b, with W stored fan_in x fan_out.

#ifndef MIXCON_MODEL_HPP_
#define MIXCON_MODEL_HPP_

#include "mixcon/autodiff.hpp"
#include "mixcon/log.hpp"
#include "mixcon/rng.hpp"
#include "mixcon/synthgen.hpp"
#include "mixcon/tensor.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mixcon {

enum class FusionMode : std::uint8_t { kViewPool, kViewPoolFc, kMaxPool, kMaxPoolFc };
enum class AdapterScope : std::uint8_t { kClipOnly, kAllImage };

std::string_view to_string(FusionMode m);
FusionMode fusion_mode_from_string(std::string_view s);
std::string_view to_string(AdapterScope s);
AdapterScope adapter_scope_from_string(std::string_view s);

inline bool has_fc(FusionMode m) {
  return m == FusionMode::kViewPoolFc || m == FusionMode::kMaxPoolFc;
}

struct ModelConfig {
  int embed_dim = 64;
  std::vector<int> point_widths = {64, 128, 256};
  int post_width = 256;
  FusionMode fusion = FusionMode::kViewPool;
  AdapterScope adapter_scope = AdapterScope::kClipOnly;
  bool sculptor = true;

  void validate() const;
};

// Loss-term order used everywhere: P-I, P-T, I-T, 3D-T.
inline constexpr std::array<const char*, 4> kScaleNames = {
    "scale/p_i", "scale/p_t", "scale/i_t", "scale/3d_t"};
inline constexpr double kInitScale = 14.28;
inline constexpr double kMaxScale = 100.0;

// Largest representable log-scale whose exp does not exceed kMaxScale.
template <typename Scalar>
Scalar max_log_scale() {
  Scalar v = static_cast<Scalar>(std::log(kMaxScale));
  while (std::exp(static_cast<double>(v)) > kMaxScale) {
    v = std::nextafter(v, Scalar(0));
  }
  return v;
}

template <typename Scalar>
using ParamStore = TensorMap<Scalar>;

template <typename Scalar>
using ParamVars = std::map<std::string, Var<Scalar>>;

// Names of every trainable tensor for a configuration, in store order.
std::vector<std::string> param_names(const ModelConfig& cfg);

// Xavier-uniform MLP weights, zero biases, identity adapter and fusion FC,
// averaging sculptor, log-scales at ln 14.28.
ParamStore<double> init_params_double(const ModelConfig& cfg, std::uint64_t seed);

template <typename Scalar>
ParamStore<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  const auto d = init_params_double(cfg, seed);
  ParamStore<Scalar> out;
  for (const auto& [name, t] : d) out.emplace(name, t.template cast<Scalar>());
  return out;
}

// Throws ShapeError naming the first tensor that is missing, unexpected, or
// of the wrong shape.
template <typename Scalar>
void check_store(const ModelConfig& cfg, const ParamStore<Scalar>& store);

// Clamps every log-scale so that exp(log-scale) <= 100.
template <typename Scalar>
void clamp_scales(ParamStore<Scalar>& store) {
  const Scalar hi = max_log_scale<Scalar>();
  for (const char* n : kScaleNames) {
    auto it = store.find(n);
    if (it == store.end()) continue;
    Scalar& v = it->second.values(0, 0);
    if (v > hi) v = hi;
  }
}

template <typename Scalar>
ParamVars<Scalar> bind_params(Tape<Scalar>& tape,
                              const ParamStore<Scalar>& store,
                              bool trainable) {
  ParamVars<Scalar> out;
  for (const auto& [name, t] : store) {
    out.emplace(name, trainable ? tape.parameter(name, t.values)
                                : tape.constant(t.values));
  }
  return out;
}

namespace detail {

template <typename Scalar>
const Var<Scalar>& need(const ParamVars<Scalar>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ShapeError("missing parameter " + name);
  return it->second;
}

template <typename Scalar>
Var<Scalar> dense(const ParamVars<Scalar>& p, const std::string& prefix,
                  Var<Scalar> x) {
  return ad::add_row(ad::matmul(x, need(p, prefix + ".w")),
                     need(p, prefix + ".b"));
}

}  // namespace detail

// points: (N * P) x 6, objects stacked. Returns N x D unit rows.
template <typename Scalar>
Var<Scalar> encode_points(const ParamVars<Scalar>& p, const ModelConfig& cfg,
                          Var<Scalar> points, Eigen::Index per_object) {
  if (per_object < 1 || points.rows() % per_object != 0 || points.cols() != 6) {
    throw ShapeError("encode_points: expected (N*" +
                     std::to_string(per_object) + ")x6 points, got " +
                     ad::detail::dims(points.rows(), points.cols()));
  }
  Var<Scalar> h = points;
  for (std::size_t l = 0; l < cfg.point_widths.size(); ++l) {
    h = ad::relu(detail::dense(p, "fP/l" + std::to_string(l), h));
  }
  h = ad::group_max(h, per_object);
  h = ad::relu(detail::dense(p, "fP/post", h));
  return ad::normalize_rows(ad::matmul(h, detail::need(p, "gP.w")));
}

// Smallest distance of the encoder from a non-differentiable point: the
// least |pre-activation| over every ReLU and the least gap between the two
// largest entries of every max-pooled column. Finite-difference probes need
// this to exceed the step by a margin.
template <typename Scalar>
Scalar kink_margin(const ParamStore<Scalar>& store, const ModelConfig& cfg,
                   const Mat<Scalar>& points, Eigen::Index per_object) {
  auto w = [&](const std::string& n) -> const Mat<Scalar>& {
    return store.at(n).values;
  };
  Scalar margin = std::numeric_limits<Scalar>::infinity();
  auto dense_relu = [&](const Mat<Scalar>& x, const std::string& prefix) {
    Mat<Scalar> z = (x * w(prefix + ".w")).rowwise() +
                    Eigen::Matrix<Scalar, 1, Eigen::Dynamic>(w(prefix + ".b"));
    margin = std::min(margin, z.cwiseAbs().minCoeff());
    return Mat<Scalar>(z.cwiseMax(Scalar(0)));
  };
  Mat<Scalar> h = points;
  for (std::size_t l = 0; l < cfg.point_widths.size(); ++l) {
    h = dense_relu(h, "fP/l" + std::to_string(l));
  }
  const Eigen::Index n = h.rows() / per_object;
  Mat<Scalar> pooled(n, h.cols());
  for (Eigen::Index o = 0; o < n; ++o) {
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      auto col = h.col(c).segment(o * per_object, per_object);
      Scalar top = col(0), second = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index k = 1; k < per_object; ++k) {
        if (col(k) > top) {
          second = top;
          top = col(k);
        } else if (col(k) > second) {
          second = col(k);
        }
      }
      // A column of ReLU zeros has no gradient either way.
      if (top > Scalar(0) && per_object > 1) margin = std::min(margin, top - second);
      pooled(o, c) = top;
    }
  }
  dense_relu(pooled, "fP/post");
  return margin;
}

// views: (N * M) x D per-view frozen embeddings, objects stacked.
template <typename Scalar>
Var<Scalar> fuse_views(const ParamVars<Scalar>& p, FusionMode mode,
                       Var<Scalar> views, Eigen::Index per_object) {
  if (per_object < 1) throw ShapeError("fuse_views: M must be >= 1");
  if (views.rows() % per_object != 0) {
    throw ShapeError("fuse_views: view rows not divisible by M");
  }
  const bool maxp =
      mode == FusionMode::kMaxPool || mode == FusionMode::kMaxPoolFc;
  Var<Scalar> z = maxp ? ad::group_max(views, per_object)
                       : ad::group_mean(views, per_object);
  if (has_fc(mode)) z = ad::matmul(z, detail::need(p, "gMV.w"));
  return ad::normalize_rows(z);
}

// normalize(concat(zI, zP) W + b). Rows whose pre-normalization vector is
// exactly zero fall back to zP.
template <typename Scalar>
Var<Scalar> sculpt(const ParamVars<Scalar>& p, Var<Scalar> zi, Var<Scalar> zp) {
  if (zi.cols() != zp.cols() || zi.rows() != zp.rows()) {
    throw ShapeError("sculpt: z^I " + ad::detail::dims(zi.rows(), zi.cols()) +
                     " vs z^P " + ad::detail::dims(zp.rows(), zp.cols()));
  }
  const Var<Scalar>& w = detail::need(p, "g3D.w");
  if (w.rows() != 2 * zi.cols()) {
    throw ShapeError("sculpt: g3D.w must have 2D input rows");
  }
  Var<Scalar> pre = ad::add_row(ad::matmul(ad::concat_cols(zi, zp), w),
                                detail::need(p, "g3D.b"));
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norms =
      pre.value().rowwise().norm();
  if ((norms.array() == Scalar(0)).any()) {
    log_warning("sculptor produced a zero vector; using z^P");
    Mat<Scalar> mask = Mat<Scalar>::Zero(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
      if (norms(i) == Scalar(0)) mask.row(i).setOnes();
    }
    pre = ad::add(pre, ad::mul(zp, pre.tape().constant(std::move(mask))));
  }
  return ad::normalize_rows(pre);
}

template <typename Scalar>
Var<Scalar> adapt(const ParamVars<Scalar>& p, Var<Scalar> zi) {
  return ad::normalize_rows(ad::matmul(zi, detail::need(p, "adapter.w")));
}

// log-scale of loss term k (see kScaleNames) and its exp.
template <typename Scalar>
Var<Scalar> logit_scale(const ParamVars<Scalar>& p, int k) {
  return ad::exp(detail::need(p, kScaleNames.at(static_cast<std::size_t>(k))));
}

// Inputs of one batch. Per-view embeddings come from the frozen teacher.
template <typename Scalar>
struct BatchInputs {
  Mat<Scalar> points;      // (N * P) x 6
  Eigen::Index points_per_object = 0;
  Mat<Scalar> view_embeds;  // (N * M) x D, may be empty
  Eigen::Index views_per_object = 0;
  Mat<Scalar> text;        // N x D, may be empty
};

template <typename Scalar>
struct Embeddings {
  Var<Scalar> point;     // z^P
  Var<Scalar> image;     // z^I fed to P-I, fusion and the sculptor
  Var<Scalar> image_it;  // z^I' fed to I-T
  Var<Scalar> text;      // z^T
  Var<Scalar> joint;     // z^3D
  bool has_image = false;
  bool has_text = false;
  bool has_joint = false;
};

// Builds every embedding the batch supports. The adapter is applied to the
// I-T path, or to every image path under kAllImage.
template <typename Scalar>
Embeddings<Scalar> embed_batch(Tape<Scalar>& tape, const ParamVars<Scalar>& p,
                               const ModelConfig& cfg,
                               const BatchInputs<Scalar>& in) {
  Embeddings<Scalar> e;
  e.point = encode_points(p, cfg, tape.constant(in.points), in.points_per_object);
  if (in.view_embeds.size() > 0) {
    Var<Scalar> fused = fuse_views(p, cfg.fusion, tape.constant(in.view_embeds),
                                   in.views_per_object);
    if (fused.rows() != e.point.rows()) {
      throw ShapeError("embed_batch: view and point batch sizes differ");
    }
    Var<Scalar> adapted = adapt(p, fused);
    e.image = cfg.adapter_scope == AdapterScope::kAllImage ? adapted : fused;
    e.image_it = adapted;
    e.has_image = true;
    if (cfg.sculptor) {
      e.joint = sculpt(p, e.image, e.point);
      e.has_joint = true;
    }
  }
  if (in.text.size() > 0) {
    e.text = tape.constant(in.text);
    e.has_text = true;
  }
  return e;
}

}  // namespace mixcon

#endif  // MIXCON_MODEL_HPP_
