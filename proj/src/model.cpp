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

#include "mixcon/model.hpp"

#include <random>

namespace mixcon {
namespace {

constexpr std::array<std::string_view, 4> kFusionNames = {
    "view_pool", "view_pool_fc", "max_pool", "max_pool_fc"};
constexpr std::array<std::string_view, 2> kScopeNames = {"clip_only",
                                                         "all_image"};

struct Slot {
  std::string name;
  Eigen::Index rows, cols;
};

std::vector<Slot> layout(const ModelConfig& cfg) {
  const Eigen::Index d = cfg.embed_dim;
  std::vector<Slot> s;
  Eigen::Index in = 6;
  for (std::size_t l = 0; l < cfg.point_widths.size(); ++l) {
    const std::string p = "fP/l" + std::to_string(l);
    s.push_back({p + ".w", in, cfg.point_widths[l]});
    s.push_back({p + ".b", 1, cfg.point_widths[l]});
    in = cfg.point_widths[l];
  }
  s.push_back({"fP/post.w", in, cfg.post_width});
  s.push_back({"fP/post.b", 1, cfg.post_width});
  s.push_back({"gP.w", cfg.post_width, d});
  if (has_fc(cfg.fusion)) s.push_back({"gMV.w", d, d});
  if (cfg.sculptor) {
    s.push_back({"g3D.w", 2 * d, d});
    s.push_back({"g3D.b", 1, d});
  }
  s.push_back({"adapter.w", d, d});
  for (const char* n : kScaleNames) s.push_back({n, 1, 1});
  return s;
}

}  // namespace

std::string_view to_string(FusionMode m) {
  return kFusionNames.at(static_cast<std::size_t>(m));
}

FusionMode fusion_mode_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kFusionNames.size(); ++i) {
    if (kFusionNames[i] == s) return static_cast<FusionMode>(i);
  }
  throw ConfigError("unknown fusion mode '" + std::string(s) + "'");
}

std::string_view to_string(AdapterScope s) {
  return kScopeNames.at(static_cast<std::size_t>(s));
}

AdapterScope adapter_scope_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kScopeNames.size(); ++i) {
    if (kScopeNames[i] == s) return static_cast<AdapterScope>(i);
  }
  throw ConfigError("unknown adapter scope '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
  if (point_widths.empty()) throw ConfigError("model: no point layers");
  for (int w : point_widths) {
    if (w < 1) throw ConfigError("model: layer widths must be >= 1");
  }
  if (post_width < 1) throw ConfigError("model: post_width must be >= 1");
}

std::vector<std::string> param_names(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : layout(cfg)) out.push_back(s.name);
  std::sort(out.begin(), out.end());
  return out;
}

ParamStore<double> init_params_double(const ModelConfig& cfg,
                                      std::uint64_t seed) {
  cfg.validate();
  ParamStore<double> store;
  for (const auto& s : layout(cfg)) {
    Mat<double> v = Mat<double>::Zero(s.rows, s.cols);
    const bool bias = s.name.size() > 2 &&
                      s.name.compare(s.name.size() - 2, 2, ".b") == 0;
    if (s.name.rfind("scale/", 0) == 0) {
      v(0, 0) = std::log(kInitScale);
    } else if (s.name == "adapter.w" || s.name == "gMV.w") {
      v.setIdentity();
    } else if (s.name == "g3D.w") {
      v.topRows(cfg.embed_dim).diagonal().setConstant(0.5);
      v.bottomRows(cfg.embed_dim).diagonal().setConstant(0.5);
    } else if (!bias && s.name != "g3D.b") {
      Rng rng = make_rng(seed, Stream::kInit, fnv1a64(s.name));
      const double a = std::sqrt(6.0 / double(s.rows + s.cols));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng);
    }
    const std::vector<std::int64_t> shape =
        s.rows == 1 && s.cols == 1 ? std::vector<std::int64_t>{}
        : s.rows == 1              ? std::vector<std::int64_t>{s.cols}
                                   : std::vector<std::int64_t>{s.rows, s.cols};
    store.emplace(s.name, Tensor<double>(shape, std::move(v)));
  }
  return store;
}

template <typename Scalar>
void check_store(const ModelConfig& cfg, const ParamStore<Scalar>& store) {
  const auto slots = layout(cfg);
  for (const auto& s : slots) {
    auto it = store.find(s.name);
    if (it == store.end()) throw ShapeError("missing tensor " + s.name);
    if (it->second.values.rows() != s.rows ||
        it->second.values.cols() != s.cols) {
      throw ShapeError("tensor " + s.name + " is " +
                       ad::detail::dims(it->second.values.rows(),
                                        it->second.values.cols()) +
                       ", model expects " + ad::detail::dims(s.rows, s.cols));
    }
  }
  if (store.size() != slots.size()) {
    for (const auto& [name, t] : store) {
      bool known = false;
      for (const auto& s : slots) known = known || s.name == name;
      if (!known) throw ShapeError("unexpected tensor " + name);
    }
  }
}

template void check_store<float>(const ModelConfig&, const ParamStore<float>&);
template void check_store<double>(const ModelConfig&, const ParamStore<double>&);

}  // namespace mixcon
