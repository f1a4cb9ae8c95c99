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


#include "mixcon/losscheck.hpp"

#include "mixcon/rng.hpp"

#include <random>

namespace mixcon {
namespace {

Mat<double> gaussian(Rng& rng, Eigen::Index r, Eigen::Index c, double sd) {
  std::normal_distribution<double> g(0.0, sd);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

bool is_bias(const std::string& name) {
  return name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

}  // namespace

GradCheckResult check_loss_gradients(const LossCheckSpec& spec) {
  if (spec.batch < 1 || spec.points < 1 || spec.views < 1) {
    throw ConfigError("gradcheck: batch, points and views must be >= 1");
  }
  ModelConfig cfg;
  cfg.embed_dim = spec.embed_dim;
  cfg.point_widths = spec.point_widths;
  cfg.post_width = spec.post_width;
  cfg.fusion = spec.fusion;
  cfg.adapter_scope = spec.adapter_scope;
  cfg.validate();

  Rng rng = make_rng(spec.seed, Stream::kGradCheck);
  const Eigen::Index n = spec.batch, d = spec.embed_dim;
  BatchInputs<double> in;
  in.points_per_object = spec.points;
  in.views_per_object = spec.views;
  in.points = gaussian(rng, n * spec.points, 6, 0.5);
  in.view_embeds = gaussian(rng, n * spec.views, d, 1.0);
  in.view_embeds.rowwise().normalize();
  in.text = gaussian(rng, n, d, 1.0);
  in.text.rowwise().normalize();

  ParamStore<double> params;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) {
      throw NumericError("gradcheck: no kink-free parameter draw found");
    }
    params = init_params<double>(cfg, spec.seed);
    for (auto& [name, t] : params) {
      if (name.rfind("scale/", 0) == 0) continue;
      const auto r = t.values.rows(), c = t.values.cols();
      if (is_bias(name)) {
        t.values = gaussian(rng, r, c, 0.1);
      } else {
        t.values += gaussian(rng, r, c, 0.05);
      }
    }
    if (kink_margin(params, cfg, in.points, spec.points) > 2 * spec.eps) {
      break;
    }
  }

  Objective f = [&](Tape<double>& t, const BoundParams& b) {
    return batch_loss(t, b, cfg, in, LossFlags::full()).total_var;
  };
  return grad_check(f, std::move(params), spec.eps, spec.max_coords_per_tensor,
                    spec.seed);
}

}  // namespace mixcon
