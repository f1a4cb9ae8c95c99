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

// Frozen image and text encoders. Raw features are seeded random projections
// passed through x / (1 + |x|); a ridge-calibrated linear map per modality
// then pulls both into one shared, pre-aligned embedding space.

#ifndef MIXCON_TEACHER_HPP_
#define MIXCON_TEACHER_HPP_

#include "mixcon/synthgen.hpp"
#include "mixcon/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mixcon {

struct TeacherSpec {
  int embed_dim = 64;
  int feature_dim = 0;  // 0 selects 4 * embed_dim
  std::uint64_t seed = 0x5eed;
  double ridge = 1e-2;
  int calibration_per_category = 50;

  int features() const { return feature_dim > 0 ? feature_dim : 4 * embed_dim; }
  void validate() const;
};

using RowF = Eigen::Matrix<float, 1, Eigen::Dynamic>;

// One unit code per category, the calibration target shared by both
// modalities.
struct SemanticCodeBook {
  Mat<double> codes;  // C x D
  std::uint64_t seed = 0;

  static SemanticCodeBook generate(int categories, int dim, std::uint64_t seed);
};

struct CalibrationReport {
  double image_residual = 0.0;  // ||R W^T - C||_F / ||C||_F
  double text_residual = 0.0;
  std::size_t image_rows = 0;
  std::size_t text_rows = 0;
};

// Solves (R^T R + lambda I) W^T = R^T C by Cholesky. Returns W (D x F).
Mat<double> ridge_solve(const Mat<double>& features, const Mat<double>& targets,
                        double lambda);

std::vector<std::string> tokenize(std::string_view text);

class Teacher {
 public:
  Teacher(const TeacherSpec& spec, int image_values);

  const TeacherSpec& spec() const { return spec_; }
  int embed_dim() const { return spec_.embed_dim; }
  int feature_dim() const { return spec_.features(); }
  int image_values() const { return static_cast<int>(projection_.cols()); }

  RowF image_features_raw(std::span<const float> image) const;
  // Rows of `images` are flattened images.
  Mat<float> image_features_raw(const Mat<float>& images) const;
  RowF text_features_raw(std::string_view caption) const;
  Mat<float> text_features_raw(const std::vector<std::string>& captions) const;

  CalibrationReport calibrate(const Mat<float>& images,
                              std::span<const std::uint32_t> image_labels,
                              const std::vector<std::string>& captions,
                              std::span<const std::uint32_t> caption_labels,
                              const SemanticCodeBook& codes);

  bool calibrated() const { return calibrated_; }
  const Mat<float>& image_map() const { return image_map_; }
  const Mat<float>& text_map() const { return text_map_; }
  void set_maps(Mat<float> image_map, Mat<float> text_map);

  RowF embed_image(std::span<const float> image) const;
  RowF embed_text(std::string_view caption) const;
  // Unit rows, one per input.
  Mat<float> embed_images(const Mat<float>& images) const;
  Mat<float> embed_texts(const std::vector<std::string>& captions) const;

 private:
  Mat<float> embed_rows(const Mat<float>& raw, const Mat<float>& map) const;
  void require_calibrated() const;

  TeacherSpec spec_;
  Mat<float> projection_;  // F x image_values
  Mat<float> image_map_;   // D x F
  Mat<float> text_map_;    // D x F
  bool calibrated_ = false;
};

// Calibrates on the first `calibration_per_category` train objects of every
// train category: every stored view and the caption of each object. Codes
// come from the teacher seed.
CalibrationReport calibrate_on_dataset(Teacher& teacher,
                                       const DatasetManifest& manifest,
                                       const SplitData& train);

}  // namespace mixcon

#endif  // MIXCON_TEACHER_HPP_
