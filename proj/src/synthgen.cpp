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

#include "mixcon/synthgen.hpp"

#include "mixcon/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>

namespace mixcon {
namespace {

constexpr std::array<std::string_view, kFamilyCount> kFamilyNames = {
    "sphere", "box", "cylinder", "cone", "torus", "pyramid", "ellipsoid",
    "capsule"};
constexpr std::array<std::string_view, kSizeCount> kSizeNames = {
    "tiny", "small", "large", "huge"};
constexpr std::array<std::string_view, kProportionCount> kProportionNames = {
    "flat", "regular", "tall"};
constexpr std::array<std::string_view, kColorCount> kColorNames = {
    "red", "green", "blue", "yellow", "orange", "purple", "white", "black"};

constexpr std::array<double, kSizeCount> kSizeFactor = {0.45, 0.7, 1.1, 1.5};
constexpr std::array<double, kProportionCount> kHeightFactor = {0.5, 1.0, 1.8};

constexpr double kTorusMajor = 0.7;
constexpr double kTorusMinor = 0.3;
constexpr double kCapsuleRadius = 0.5;
constexpr double kCapsuleHalfLength = 0.5;
const Eigen::Vector3d kEllipsoidAxes(1.0, 0.65, 0.8);

constexpr double kPi = std::numbers::pi;

// Dense samples per pixel used for rasterizing silhouettes.
constexpr int kRenderDensity = 24;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Eigen::Vector3d unit_direction(Rng& rng) {
  std::normal_distribution<double> n01;
  for (;;) {
    Eigen::Vector3d v(n01(rng), n01(rng), n01(rng));
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

Eigen::Vector3d on_disc(Rng& rng, double radius, double z) {
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  const double t = uniform(rng, 0.0, 2.0 * kPi);
  return {r * std::cos(t), r * std::sin(t), z};
}

Eigen::Vector3d sample_one(Family family, Rng& rng) {
  switch (family) {
    case Family::kSphere:
      return unit_direction(rng);
    case Family::kBox: {
      const int face = std::uniform_int_distribution<int>(0, 5)(rng);
      Eigen::Vector3d p(uniform(rng, -1, 1), uniform(rng, -1, 1),
                        uniform(rng, -1, 1));
      p[face / 2] = face % 2 == 0 ? 1.0 : -1.0;
      return p;
    }
    case Family::kCylinder: {
      // lateral 4*pi, each cap pi
      const double u = uniform(rng, 0.0, 6.0);
      if (u < 4.0) {
        const double t = uniform(rng, 0.0, 2.0 * kPi);
        return {std::cos(t), std::sin(t), uniform(rng, -1, 1)};
      }
      return on_disc(rng, 1.0, u < 5.0 ? 1.0 : -1.0);
    }
    case Family::kCone: {
      const double lateral = std::sqrt(5.0);
      if (uniform(rng, 0.0, lateral + 1.0) < lateral) {
        const double s = std::sqrt(uniform(rng, 0.0, 1.0));
        const double t = uniform(rng, 0.0, 2.0 * kPi);
        return {s * std::cos(t), s * std::sin(t), 1.0 - 2.0 * s};
      }
      return on_disc(rng, 1.0, -1.0);
    }
    case Family::kTorus: {
      for (;;) {
        const double u = uniform(rng, 0.0, 2.0 * kPi);
        const double v = uniform(rng, 0.0, 2.0 * kPi);
        const double w = (kTorusMajor + kTorusMinor * std::cos(v)) /
                         (kTorusMajor + kTorusMinor);
        if (uniform(rng, 0.0, 1.0) > w) continue;
        const double ring = kTorusMajor + kTorusMinor * std::cos(v);
        return {ring * std::cos(u), ring * std::sin(u),
                kTorusMinor * std::sin(v)};
      }
    }
    case Family::kPyramid: {
      // four sides of area sqrt(5) each, base of area 4
      const double side = std::sqrt(5.0);
      const double u = uniform(rng, 0.0, 4.0 * side + 4.0);
      if (u >= 4.0 * side) {
        return {uniform(rng, -1, 1), uniform(rng, -1, 1), -1.0};
      }
      const int k = std::min(3, static_cast<int>(u / side));
      double a = uniform(rng, 0.0, 1.0);
      double b = uniform(rng, 0.0, 1.0);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      static const Eigen::Vector3d corners[4] = {
          {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1}};
      const Eigen::Vector3d apex(0, 0, 1);
      const Eigen::Vector3d& c0 = corners[k];
      const Eigen::Vector3d& c1 = corners[(k + 1) % 4];
      return c0 + a * (c1 - c0) + b * (apex - c0);
    }
    case Family::kEllipsoid: {
      const Eigen::Vector3d& ax = kEllipsoidAxes;
      const double bound = std::max({ax.y() * ax.z(), ax.x() * ax.z(),
                                     ax.x() * ax.y()});
      for (;;) {
        const Eigen::Vector3d d = unit_direction(rng);
        const double area = Eigen::Vector3d(ax.y() * ax.z() * d.x(),
                                            ax.x() * ax.z() * d.y(),
                                            ax.x() * ax.y() * d.z())
                                .norm();
        if (uniform(rng, 0.0, bound) <= area) return ax.cwiseProduct(d);
      }
    }
    case Family::kCapsule: {
      if (uniform(rng, 0.0, 1.0) < 0.5) {
        const double t = uniform(rng, 0.0, 2.0 * kPi);
        return {kCapsuleRadius * std::cos(t), kCapsuleRadius * std::sin(t),
                uniform(rng, -kCapsuleHalfLength, kCapsuleHalfLength)};
      }
      Eigen::Vector3d d = unit_direction(rng);
      const double cz = d.z() >= 0 ? kCapsuleHalfLength : -kCapsuleHalfLength;
      return kCapsuleRadius * d + Eigen::Vector3d(0, 0, cz);
    }
  }
  throw ConfigError("unsupported shape family");
}

template <std::size_t N>
std::size_t index_of(const std::array<std::string_view, N>& names,
                     std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return i;
  }
  throw ConfigError(std::string("unknown ") + what + ": " + std::string(s));
}

void replace_all(std::string& s, std::string_view key, std::string_view val) {
  for (std::size_t pos = s.find(key); pos != std::string::npos;
       pos = s.find(key, pos + val.size())) {
    s.replace(pos, key.size(), val);
  }
}

}  // namespace

std::string_view to_string(Family f) {
  return kFamilyNames.at(static_cast<std::size_t>(f));
}
std::string_view to_string(SizeWord s) {
  return kSizeNames.at(static_cast<std::size_t>(s));
}
std::string_view to_string(ProportionWord p) {
  return kProportionNames.at(static_cast<std::size_t>(p));
}
std::string_view to_string(ColorWord c) {
  return kColorNames.at(static_cast<std::size_t>(c));
}

Family family_from_string(std::string_view s) {
  return static_cast<Family>(index_of(kFamilyNames, s, "shape family"));
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kEvalIn:
      return "eval_in";
    case Split::kEvalZeroShot:
      return "eval_zeroshot";
  }
  return "?";
}

Split split_from_string(std::string_view s) {
  for (Split sp : kAllSplits) {
    if (to_string(sp) == s) return sp;
  }
  throw ConfigError("unknown split: " + std::string(s));
}

Eigen::Vector3d palette_rgb(ColorWord c) {
  static const std::array<Eigen::Vector3d, kColorCount> rgb = {
      Eigen::Vector3d(0.85, 0.10, 0.10), Eigen::Vector3d(0.10, 0.70, 0.20),
      Eigen::Vector3d(0.10, 0.25, 0.85), Eigen::Vector3d(0.95, 0.85, 0.10),
      Eigen::Vector3d(0.95, 0.50, 0.05), Eigen::Vector3d(0.55, 0.15, 0.70),
      Eigen::Vector3d(0.95, 0.95, 0.95), Eigen::Vector3d(0.08, 0.08, 0.08)};
  return rgb.at(static_cast<std::size_t>(c));
}

std::vector<CameraPose> default_poses(int count) {
  std::vector<CameraPose> poses;
  for (int i = 0; i < count; ++i) {
    poses.push_back({360.0 * i / count, i % 2 == 0 ? 20.0 : 40.0});
  }
  return poses;
}

Mat<double> sample_canonical_surface(Family family, int count,
                                     std::uint64_t rng_key) {
  if (count < 1) throw ConfigError("surface sample count must be positive");
  Rng rng(rng_key);
  Mat<double> out(count, 3);
  for (int i = 0; i < count; ++i) {
    out.row(i) = sample_one(family, rng).transpose();
  }
  return out;
}

double canonical_surface_residual(Family family, const Eigen::Vector3d& p) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double rho = std::hypot(p.x(), p.y());
  switch (family) {
    case Family::kSphere:
      return p.norm() - 1.0;
    case Family::kBox:
      return p.cwiseAbs().maxCoeff() - 1.0;
    case Family::kCylinder: {
      const double side = std::abs(p.z()) <= 1.0 ? std::abs(rho - 1.0) : kInf;
      const double cap = rho <= 1.0 ? std::abs(std::abs(p.z()) - 1.0) : kInf;
      return std::min(side, cap);
    }
    case Family::kCone: {
      const double side =
          std::abs(p.z()) <= 1.0 ? std::abs(rho - (1.0 - p.z()) / 2.0) : kInf;
      const double base = rho <= 1.0 ? std::abs(p.z() + 1.0) : kInf;
      return std::min(side, base);
    }
    case Family::kTorus: {
      const double d = rho - kTorusMajor;
      return d * d + p.z() * p.z() - kTorusMinor * kTorusMinor;
    }
    case Family::kPyramid: {
      const double m = std::max(std::abs(p.x()), std::abs(p.y()));
      const double side = m <= 1.0 ? std::abs(p.z() - (1.0 - 2.0 * m)) : kInf;
      const double base = m <= 1.0 ? std::abs(p.z() + 1.0) : kInf;
      return std::min(side, base);
    }
    case Family::kEllipsoid:
      return p.cwiseQuotient(kEllipsoidAxes).squaredNorm() - 1.0;
    case Family::kCapsule: {
      const double cz =
          std::clamp(p.z(), -kCapsuleHalfLength, kCapsuleHalfLength);
      return (p - Eigen::Vector3d(0, 0, cz)).norm() - kCapsuleRadius;
    }
  }
  throw ConfigError("unsupported shape family");
}

Mat<double> sample_surface_points(const ShapeSpec& spec, int count,
                                  std::uint64_t rng_key, double noise_sigma) {
  Mat<double> xyz =
      sample_canonical_surface(spec.family, count,
                               derive_seed(rng_key, Stream::kSurface));
  xyz = xyz * spec.scale_xyz.asDiagonal();
  if (noise_sigma > 0.0) {
    Rng rng = make_rng(rng_key, Stream::kSurface, 1);
    std::normal_distribution<double> n01;
    for (Eigen::Index i = 0; i < xyz.size(); ++i) {
      xyz.data()[i] += noise_sigma * n01(rng);
    }
  }
  const double max_norm = xyz.rowwise().norm().maxCoeff();
  if (max_norm > 0.0) xyz /= max_norm;

  Mat<double> out(count, 6);
  out.leftCols(3) = xyz;
  const Eigen::Vector3d base = palette_rgb(spec.color);
  Rng rng = make_rng(rng_key, Stream::kColor);
  for (int i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) {
      out(i, 3 + c) = std::clamp(base[c] + uniform(rng, -0.05, 0.05), 0.0, 1.0);
    }
  }
  return out;
}

ViewStack render_views(const ShapeSpec& spec,
                       const std::vector<CameraPose>& poses, int height,
                       int width) {
  if (poses.empty()) throw ConfigError("render_views: no camera poses");
  if (height < 8 || width < 8) {
    throw ConfigError("render_views: image must be at least 8x8");
  }
  const int base = kRenderDensity * height * width / 4;
  Mat<double> pts = sample_canonical_surface(
      spec.family, base, derive_seed(spec.object_seed, Stream::kRender));
  // Mirror copies in x and y make the sampling exactly as symmetric as the
  // analytic surface.
  Mat<double> dense(4 * base, 3);
  dense.topRows(base) = pts;
  dense.middleRows(base, base) = pts;
  dense.middleRows(base, base).col(0) *= -1.0;
  dense.middleRows(2 * base, base) = pts;
  dense.middleRows(2 * base, base).col(1) *= -1.0;
  dense.bottomRows(base) = pts;
  dense.bottomRows(base).leftCols(2) *= -1.0;
  dense = dense * spec.scale_xyz.asDiagonal();
  dense /= dense.rowwise().norm().maxCoeff();

  ViewStack out;
  out.height = height;
  out.width = width;
  const int hw = height * width;
  for (const CameraPose& pose : poses) {
    const double az = pose.azimuth_deg * kPi / 180.0;
    const double el = pose.elevation_deg * kPi / 180.0;
    const Eigen::Vector3d toward(std::cos(el) * std::cos(az),
                                 std::cos(el) * std::sin(az), std::sin(el));
    const Eigen::Vector3d right(-std::sin(az), std::cos(az), 0.0);
    const Eigen::Vector3d up = toward.cross(right);

    std::vector<float> sil(hw, 0.0f);
    std::vector<float> depth(hw, 0.0f);
    for (Eigen::Index i = 0; i < dense.rows(); ++i) {
      const Eigen::Vector3d p = dense.row(i).transpose();
      const double u = p.dot(right);
      const double v = p.dot(up);
      const double w = p.dot(toward);
      const int col = std::clamp(static_cast<int>(std::floor((u + 1.0) * 0.5 * width)),
                                 0, width - 1);
      const int row = std::clamp(static_cast<int>(std::floor((1.0 - v) * 0.5 * height)),
                                 0, height - 1);
      const int k = row * width + col;
      const float d = static_cast<float>(std::clamp((1.0 + w) * 0.5, 0.0, 1.0));
      if (sil[k] == 0.0f || d > depth[k]) depth[k] = d;
      sil[k] = 1.0f;
    }
    // Fill isolated single-pixel holes left by the point splatting.
    std::vector<float> sil_filled = sil;
    std::vector<float> depth_filled = depth;
    for (int r = 1; r + 1 < height; ++r) {
      for (int c = 1; c + 1 < width; ++c) {
        const int k = r * width + c;
        if (sil[k] != 0.0f) continue;
        const int nb[4] = {k - 1, k + 1, k - width, k + width};
        if (sil[nb[0]] && sil[nb[1]] && sil[nb[2]] && sil[nb[3]]) {
          sil_filled[k] = 1.0f;
          depth_filled[k] = 0.25f * (depth[nb[0]] + depth[nb[1]] +
                                     depth[nb[2]] + depth[nb[3]]);
        }
      }
    }
    Mat<float> img(2, hw);
    for (int k = 0; k < hw; ++k) {
      img(0, k) = sil_filled[k];
      img(1, k) = depth_filled[k];
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

std::vector<std::string> default_caption_templates() {
  return {"a {size} {proportion} {color} {family}",
          "a {color} {family} that is {size} and {proportion}",
          "{size} {color} {family} with a {proportion} profile",
          "a {proportion} {family} painted {color} of {size} size"};
}

std::string make_caption(const ShapeSpec& spec,
                         const std::vector<std::string>& templates,
                         std::size_t template_id) {
  if (template_id >= templates.size()) {
    throw ConfigError("caption template id out of range");
  }
  std::string s = templates[template_id];
  replace_all(s, "{size}", to_string(spec.size));
  replace_all(s, "{proportion}", to_string(spec.proportion));
  replace_all(s, "{color}", to_string(spec.color));
  replace_all(s, "{family}", to_string(spec.family));
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string Category::name() const {
  std::string s(to_string(size));
  s += ' ';
  s += to_string(proportion);
  s += ' ';
  s += to_string(family);
  return s;
}

void SynthConfig::validate() const {
  if (train_categories <= 0 || zeroshot_categories <= 0 ||
      objects_per_category <= 0 || eval_in_per_category <= 0) {
    throw ConfigError("dataset: every split needs a positive size");
  }
  if (train_categories + zeroshot_categories >
      kFamilyCount * kSizeCount * kProportionCount) {
    throw ConfigError("dataset: more categories than shape combinations");
  }
  if (zeroshot_categories > train_categories) {
    throw ConfigError(
        "dataset: zero-shot categories reuse train families, so they cannot "
        "outnumber train categories");
  }
  if (points < 8) throw ConfigError("dataset: need at least 8 points");
  if (views < 1) throw ConfigError("dataset: need at least one view");
  if (height < 8 || width < 8) {
    throw ConfigError("dataset: images must be at least 8x8");
  }
  if (noise_sigma < 0.0) throw ConfigError("dataset: negative noise");
}

std::vector<Category> choose_categories(const SynthConfig& cfg,
                                        std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, Stream::kCategories);
  std::vector<int> families(kFamilyCount);
  std::iota(families.begin(), families.end(), 0);
  std::shuffle(families.begin(), families.end(), rng);
  std::uniform_int_distribution<int> pick_size(0, kSizeCount - 1);
  std::uniform_int_distribution<int> pick_prop(0, kProportionCount - 1);

  std::set<std::tuple<int, int, int>> used;
  std::vector<Category> cats;
  auto add = [&](int fam, Split home, int forbid_prop) {
    for (;;) {
      const int s = pick_size(rng);
      const int p = pick_prop(rng);
      if (p == forbid_prop) continue;
      if (!used.insert({fam, s, p}).second) continue;
      Category c;
      c.id = static_cast<std::uint32_t>(cats.size());
      c.family = static_cast<Family>(fam);
      c.size = static_cast<SizeWord>(s);
      c.proportion = static_cast<ProportionWord>(p);
      c.home_split = home;
      cats.push_back(c);
      return;
    }
  };
  for (int i = 0; i < cfg.train_categories; ++i) {
    add(families[i % kFamilyCount], Split::kTrain, -1);
  }
  // Zero-shot classes reuse train families with a different proportion, so
  // the family word in their names has been seen during training while the
  // (family, size, proportion) label has not.
  for (int j = 0; j < cfg.zeroshot_categories; ++j) {
    const Category& anchor = cats[static_cast<std::size_t>(j)];
    add(static_cast<int>(anchor.family), Split::kEvalZeroShot,
        static_cast<int>(anchor.proportion));
  }
  return cats;
}

ShapeSpec make_object_spec(const Category& cat, Split split,
                           std::uint64_t index, std::uint64_t seed) {
  ShapeSpec spec;
  spec.family = cat.family;
  spec.size = cat.size;
  spec.proportion = cat.proportion;
  spec.object_seed = derive_seed(seed, Stream::kObject,
                                 static_cast<std::uint64_t>(split), index);
  Rng rng(spec.object_seed);
  spec.color = static_cast<ColorWord>(
      std::uniform_int_distribution<int>(0, kColorCount - 1)(rng));
  const double s = kSizeFactor[static_cast<std::size_t>(cat.size)];
  const double h = kHeightFactor[static_cast<std::size_t>(cat.proportion)];
  const Eigen::Vector3d nominal(s, s, s * h);
  for (int a = 0; a < 3; ++a) {
    spec.scale_xyz[a] =
        std::clamp(nominal[a] * uniform(rng, 0.9, 1.1), 0.2, 2.0);
  }
  return spec;
}

std::vector<std::uint32_t> DatasetManifest::category_ids(Split home) const {
  std::vector<std::uint32_t> ids;
  for (const auto& c : categories) {
    if (c.home_split == home) ids.push_back(c.id);
  }
  return ids;
}

std::vector<std::string> DatasetManifest::category_names() const {
  std::vector<std::string> names;
  for (const auto& c : categories) names.push_back(c.name());
  return names;
}

Triplet make_triplet(const DatasetManifest& m, const Category& cat,
                     Split split, std::uint64_t index) {
  const ShapeSpec spec = make_object_spec(cat, split, index, m.seed);
  Triplet t;
  t.points = sample_surface_points(spec, m.points, spec.object_seed,
                                   m.noise_sigma);
  t.views = render_views(spec, m.poses, m.height, m.width);
  Rng rng = make_rng(spec.object_seed, Stream::kObject, 1);
  const std::size_t tid = std::uniform_int_distribution<std::size_t>(
      0, m.caption_templates.size() - 1)(rng);
  t.caption = make_caption(spec, m.caption_templates, tid);
  t.category_id = cat.id;
  t.split = split;
  return t;
}

}  // namespace mixcon
