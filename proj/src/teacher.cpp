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

#include "mixcon/teacher.hpp"

#include "mixcon/log.hpp"
#include "mixcon/rng.hpp"

#include <Eigen/Cholesky>

#include <cctype>
#include <cmath>
#include <sstream>

namespace mixcon {
namespace {

template <typename Derived>
void softsign_inplace(Eigen::MatrixBase<Derived>& m) {
  m = m.array() / (1.0f + m.array().abs());
}

Eigen::VectorXd gaussian_unit(Rng& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (;;) {
    for (int i = 0; i < dim; ++i) v(i) = g(rng);
    const double n = v.norm();
    if (n > 0.0) return v / n;
  }
}

}  // namespace

void TeacherSpec::validate() const {
  if (embed_dim < 8) throw ConfigError("teacher: embed_dim must be >= 8");
  if (features() < embed_dim) {
    throw ConfigError("teacher: feature_dim must be >= embed_dim");
  }
  if (!(ridge > 0.0)) throw ConfigError("teacher: ridge must be > 0");
  if (calibration_per_category < 5) {
    throw ConfigError("teacher: calibration_per_category must be >= 5");
  }
}

SemanticCodeBook SemanticCodeBook::generate(int categories, int dim,
                                            std::uint64_t seed) {
  if (categories < 1 || dim < 1) {
    throw ConfigError("codebook: categories and dim must be positive");
  }
  SemanticCodeBook book;
  book.seed = seed;
  book.codes.resize(categories, dim);
  Rng rng = make_rng(seed, Stream::kCodeBook);
  for (int c = 0; c < categories; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) {
        throw NumericError("codebook: cannot place " +
                           std::to_string(categories) + " codes in dim " +
                           std::to_string(dim) + " with |cos| < 0.5");
      }
      const Eigen::VectorXd v = gaussian_unit(rng, dim);
      bool ok = true;
      if (dim >= 32) {
        for (int k = 0; k < c && ok; ++k) {
          ok = std::abs(book.codes.row(k).dot(v)) < 0.5;
        }
      }
      if (ok) {
        book.codes.row(c) = v.transpose();
        break;
      }
    }
  }
  return book;
}

Mat<double> ridge_solve(const Mat<double>& features, const Mat<double>& targets,
                        double lambda) {
  if (features.rows() != targets.rows()) {
    throw ShapeError("ridge_solve: features have " +
                     std::to_string(features.rows()) + " rows, targets " +
                     std::to_string(targets.rows()));
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("ridge_solve: lambda < 0");
  const Eigen::Index f = features.cols();
  Eigen::MatrixXd gram = features.transpose() * features;
  gram.diagonal().array() += lambda;
  const Eigen::MatrixXd rhs = features.transpose() * targets;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    std::ostringstream msg;
    msg << "ridge system (" << f << "x" << f << ") is singular at lambda="
        << lambda << "; raise the ridge coefficient";
    throw NumericError(msg.str());
  }
  return llt.solve(rhs).transpose();
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Teacher::Teacher(const TeacherSpec& spec, int image_values) : spec_(spec) {
  spec_.validate();
  if (image_values < 1) throw ConfigError("teacher: image_values must be >= 1");
  const int f = spec_.features();
  projection_.resize(f, image_values);
  Rng rng = make_rng(spec_.seed, Stream::kTeacherImage);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(double(image_values)));
  for (int i = 0; i < f; ++i) {
    for (int j = 0; j < image_values; ++j) {
      projection_(i, j) = static_cast<float>(g(rng));
    }
  }
}

Mat<float> Teacher::image_features_raw(const Mat<float>& images) const {
  if (images.cols() != projection_.cols()) {
    throw ShapeError("teacher: image has " + std::to_string(images.cols()) +
                     " values, expected " +
                     std::to_string(projection_.cols()));
  }
  Mat<float> out = images * projection_.transpose();
  softsign_inplace(out);
  return out;
}

RowF Teacher::image_features_raw(std::span<const float> image) const {
  const Eigen::Map<const Mat<float>> row(image.data(), 1,
                                         static_cast<Eigen::Index>(image.size()));
  return image_features_raw(Mat<float>(row));
}

RowF Teacher::text_features_raw(std::string_view caption) const {
  const auto tokens = tokenize(caption);
  if (tokens.empty()) throw std::invalid_argument("teacher: empty caption");
  const int f = spec_.features();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(f);
  for (const auto& t : tokens) {
    Rng rng = make_rng(spec_.seed, Stream::kTeacherToken, fnv1a64(t));
    sum += gaussian_unit(rng, f);
  }
  RowF out = sum.transpose().cast<float>();
  softsign_inplace(out);
  return out;
}

Mat<float> Teacher::text_features_raw(
    const std::vector<std::string>& captions) const {
  Mat<float> out(static_cast<Eigen::Index>(captions.size()), spec_.features());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = text_features_raw(captions[i]);
  }
  return out;
}

CalibrationReport Teacher::calibrate(const Mat<float>& images,
                                     std::span<const std::uint32_t> image_labels,
                                     const std::vector<std::string>& captions,
                                     std::span<const std::uint32_t> caption_labels,
                                     const SemanticCodeBook& codes) {
  if (codes.codes.cols() != spec_.embed_dim) {
    throw ShapeError("teacher: code width differs from embed_dim");
  }
  if (static_cast<std::size_t>(images.rows()) != image_labels.size() ||
      captions.size() != caption_labels.size()) {
    throw ShapeError("teacher: calibration rows and labels differ in count");
  }
  auto targets = [&](std::span<const std::uint32_t> labels) {
    Mat<double> c(static_cast<Eigen::Index>(labels.size()), codes.codes.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= codes.codes.rows()) {
        throw ShapeError("teacher: calibration label out of range");
      }
      c.row(static_cast<Eigen::Index>(i)) = codes.codes.row(labels[i]);
    }
    return c;
  };
  auto fit = [&](const Mat<float>& raw, const Mat<double>& c, double& resid) {
    const Mat<double> r = raw.cast<double>();
    Mat<double> w = ridge_solve(r, c, spec_.ridge);
    resid = (r * w.transpose() - c).norm() / c.norm();
    return Mat<float>(w.cast<float>());
  };

  CalibrationReport rep;
  rep.image_rows = image_labels.size();
  rep.text_rows = caption_labels.size();
  image_map_ = fit(image_features_raw(images), targets(image_labels),
                   rep.image_residual);
  text_map_ = fit(text_features_raw(captions), targets(caption_labels),
                  rep.text_residual);
  calibrated_ = true;
  return rep;
}

void Teacher::set_maps(Mat<float> image_map, Mat<float> text_map) {
  const int d = spec_.embed_dim, f = spec_.features();
  if (image_map.rows() != d || image_map.cols() != f || text_map.rows() != d ||
      text_map.cols() != f) {
    throw ShapeError("teacher: maps must be " + std::to_string(d) + "x" +
                     std::to_string(f));
  }
  image_map_ = std::move(image_map);
  text_map_ = std::move(text_map);
  calibrated_ = true;
}

void Teacher::require_calibrated() const {
  if (!calibrated_) throw std::logic_error("teacher: not calibrated");
}

Mat<float> Teacher::embed_rows(const Mat<float>& raw,
                               const Mat<float>& map) const {
  require_calibrated();
  Mat<float> z = raw * map.transpose();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const float n = z.row(i).norm();
    if (n > 0.0f && std::isfinite(n)) {
      z.row(i) /= n;
    } else {
      log_warning("teacher: zero embedding, using first basis vector");
      z.row(i).setZero();
      z(i, 0) = 1.0f;
    }
  }
  return z;
}

Mat<float> Teacher::embed_images(const Mat<float>& images) const {
  return embed_rows(image_features_raw(images), image_map_);
}

Mat<float> Teacher::embed_texts(const std::vector<std::string>& captions) const {
  return embed_rows(text_features_raw(captions), text_map_);
}

RowF Teacher::embed_image(std::span<const float> image) const {
  return embed_rows(Mat<float>(image_features_raw(image)), image_map_);
}

RowF Teacher::embed_text(std::string_view caption) const {
  return embed_rows(Mat<float>(text_features_raw(caption)), text_map_);
}

CalibrationReport calibrate_on_dataset(Teacher& teacher,
                                       const DatasetManifest& manifest,
                                       const SplitData& train) {
  if (train.split != Split::kTrain) {
    throw ConfigError("calibration must use the train split");
  }
  if (!train.has_views()) throw ConfigError("calibration needs train views");
  const int per = teacher.spec().calibration_per_category;
  const int m = manifest.views;
  std::vector<int> taken(manifest.categories.size(), 0);
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (taken[train.labels[i]] < per) {
      ++taken[train.labels[i]];
      chosen.push_back(i);
    }
  }
  for (std::uint32_t id : manifest.category_ids(Split::kTrain)) {
    if (taken[id] < 5) {
      throw ConfigError("calibration needs >= 5 objects of category " +
                        std::to_string(id));
    }
  }

  Mat<float> images(static_cast<Eigen::Index>(chosen.size()) * m,
                    train.views->cols());
  std::vector<std::uint32_t> image_labels;
  std::vector<std::string> captions;
  std::vector<std::uint32_t> caption_labels;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const std::size_t i = chosen[k];
    images.middleRows(static_cast<Eigen::Index>(k) * m, m) =
        train.views->middleRows(static_cast<Eigen::Index>(i) * m, m);
    image_labels.insert(image_labels.end(), m, train.labels[i]);
    captions.push_back(train.captions[i]);
    caption_labels.push_back(train.labels[i]);
  }
  const auto codes = SemanticCodeBook::generate(
      static_cast<int>(manifest.categories.size()), teacher.embed_dim(),
      teacher.spec().seed);
  return teacher.calibrate(images, image_labels, captions, caption_labels,
                           codes);
}

}  // namespace mixcon
