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

#ifndef MIXCON_TENSOR_HPP_
#define MIXCON_TENSOR_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixcon {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

enum class Precision { kSingle, kDouble };

template <typename Scalar>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  return std::is_same_v<Scalar, float> ? Precision::kSingle : Precision::kDouble;
}

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dense tensor stored as a row-major matrix. Rank 0 is 1x1, rank 1 is 1xn,
// rank 2 is rxc, and higher ranks fold every leading extent into the rows.
template <typename Scalar>
struct Tensor {
  static constexpr Precision kPrecision = precision_of<Scalar>();

  std::vector<std::int64_t> shape;
  Mat<Scalar> values;

  Tensor() = default;

  Tensor(std::vector<std::int64_t> extents, Mat<Scalar> data)
      : shape(std::move(extents)), values(std::move(data)) {
    if (element_count() != values.size()) {
      throw ShapeError("tensor extents do not match element count");
    }
  }

  static Tensor matrix(Mat<Scalar> data) {
    std::vector<std::int64_t> extents{data.rows(), data.cols()};
    return Tensor(std::move(extents), std::move(data));
  }

  static Tensor vector(Mat<Scalar> row) {
    std::vector<std::int64_t> extents{row.size()};
    return Tensor(std::move(extents), std::move(row));
  }

  static Tensor scalar(Scalar v) {
    Mat<Scalar> m(1, 1);
    m(0, 0) = v;
    return Tensor({}, std::move(m));
  }

  std::int64_t element_count() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                           std::multiplies<>());
  }

  std::size_t rank() const { return shape.size(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, values.template cast<Other>());
  }
};

// Ordered so iteration, serialization, and optimizer updates are reproducible.
template <typename Scalar>
using TensorMap = std::map<std::string, Tensor<Scalar>>;

template <typename Scalar>
using GradMap = std::map<std::string, Mat<Scalar>>;

}  // namespace mixcon

#endif  // MIXCON_TENSOR_HPP_
