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

// Procedural (point cloud, multi-view image, caption) triplets built from
// parametric shape families, and the on-disk dataset format that stores them.

#ifndef MIXCON_SYNTHGEN_HPP_
#define MIXCON_SYNTHGEN_HPP_

#include "mixcon/tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mixcon {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Family : std::uint8_t {
  kSphere,
  kBox,
  kCylinder,
  kCone,
  kTorus,
  kPyramid,
  kEllipsoid,
  kCapsule,
};
inline constexpr int kFamilyCount = 8;

enum class SizeWord : std::uint8_t { kTiny, kSmall, kLarge, kHuge };
enum class ProportionWord : std::uint8_t { kFlat, kRegular, kTall };
enum class ColorWord : std::uint8_t {
  kRed,
  kGreen,
  kBlue,
  kYellow,
  kOrange,
  kPurple,
  kWhite,
  kBlack,
};
inline constexpr int kSizeCount = 4;
inline constexpr int kProportionCount = 3;
inline constexpr int kColorCount = 8;

std::string_view to_string(Family f);
std::string_view to_string(SizeWord s);
std::string_view to_string(ProportionWord p);
std::string_view to_string(ColorWord c);
Family family_from_string(std::string_view s);
Eigen::Vector3d palette_rgb(ColorWord c);

enum class Split : std::uint8_t { kTrain, kEvalIn, kEvalZeroShot };
inline constexpr std::array<Split, 3> kAllSplits = {
    Split::kTrain, Split::kEvalIn, Split::kEvalZeroShot};
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct ShapeSpec {
  Family family = Family::kSphere;
  Eigen::Vector3d scale_xyz = Eigen::Vector3d::Ones();
  SizeWord size = SizeWord::kLarge;
  ProportionWord proportion = ProportionWord::kRegular;
  ColorWord color = ColorWord::kRed;
  std::uint64_t object_seed = 0;
};

struct CameraPose {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
};

// Evenly spaced azimuths (30 degrees apart for the default 12), elevations
// alternating 20 / 40 degrees.
std::vector<CameraPose> default_poses(int count = 12);

// Unnormalized samples on the canonical (unit bounding box) surface of a
// family. Every family is centered and mirror-symmetric in x and y.
Mat<double> sample_canonical_surface(Family family, int count,
                                     std::uint64_t rng_key);

// Signed implicit residual of a canonical-surface point; zero on the surface.
double canonical_surface_residual(Family family, const Eigen::Vector3d& p);

// P x 6 rows of (x, y, z, r, g, b). Points are scaled by scale_xyz, perturbed
// by `noise_sigma`, and divided by the largest norm so that max norm is 1.
Mat<double> sample_surface_points(const ShapeSpec& spec, int count,
                                  std::uint64_t rng_key,
                                  double noise_sigma = 0.01);

// One image per pose, each a 2 x (H*W) block: silhouette row then depth row.
struct ViewStack {
  int height = 0;
  int width = 0;
  std::vector<Mat<float>> images;

  float silhouette(std::size_t view, int row, int col) const {
    return images[view](0, row * width + col);
  }
  float depth(std::size_t view, int row, int col) const {
    return images[view](1, row * width + col);
  }
};

ViewStack render_views(const ShapeSpec& spec,
                       const std::vector<CameraPose>& poses, int height,
                       int width);

std::vector<std::string> default_caption_templates();
std::string make_caption(const ShapeSpec& spec,
                         const std::vector<std::string>& templates,
                         std::size_t template_id);

struct Category {
  std::uint32_t id = 0;
  Family family = Family::kSphere;
  SizeWord size = SizeWord::kLarge;
  ProportionWord proportion = ProportionWord::kRegular;
  Split home_split = Split::kTrain;

  // "{size} {proportion} {family}".
  std::string name() const;
};

struct SynthConfig {
  int train_categories = 8;
  int zeroshot_categories = 4;
  int objects_per_category = 150;
  int eval_in_per_category = 25;
  int points = 256;
  int views = 12;
  int height = 32;
  int width = 32;
  double noise_sigma = 0.01;

  void validate() const;
};

struct DatasetManifest {
  std::uint32_t version = 1;
  std::array<std::uint32_t, 3> counts{};
  std::vector<Category> categories;
  int points = 0;
  int views = 0;
  int height = 0;
  int width = 0;
  std::vector<CameraPose> poses;
  std::uint64_t seed = 0;
  std::vector<std::string> caption_templates;
  double noise_sigma = 0.0;

  std::uint32_t count(Split s) const {
    return counts[static_cast<std::size_t>(s)];
  }
  std::vector<std::uint32_t> category_ids(Split home) const;
  std::vector<std::string> category_names() const;
};

// One object, fully materialized.
struct Triplet {
  Mat<double> points;  // P x 6
  ViewStack views;
  std::string caption;
  std::uint32_t category_id = 0;
  Split split = Split::kTrain;
};

std::vector<Category> choose_categories(const SynthConfig& cfg,
                                        std::uint64_t seed);
ShapeSpec make_object_spec(const Category& cat, Split split,
                           std::uint64_t index, std::uint64_t seed);
Triplet make_triplet(const DatasetManifest& m, const Category& cat,
                     Split split, std::uint64_t index);

DatasetManifest build_dataset(const SynthConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& dir);

// In-memory split as stored on disk. Views are absent when the split's
// views.bin is missing.
struct SplitData {
  Split split = Split::kTrain;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> captions;
  Mat<float> points;                // (n * P) x 6
  std::optional<Mat<float>> views;  // (n * M) x (2 * H * W)

  std::size_t size() const { return labels.size(); }
  bool has_views() const { return views.has_value(); }
};

DatasetManifest load_manifest(const std::filesystem::path& dir);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir);
SplitData load_split(const std::filesystem::path& dir,
                     const DatasetManifest& m, Split split,
                     bool load_views = true);
std::filesystem::path split_dir(const std::filesystem::path& dir, Split s);

}  // namespace mixcon

#endif  // MIXCON_SYNTHGEN_HPP_
