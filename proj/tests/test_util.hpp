#ifndef MIXCON_TESTS_TEST_UTIL_HPP_
#define MIXCON_TESTS_TEST_UTIL_HPP_

#include "mixcon/model.hpp"
#include "mixcon/rng.hpp"

#include <random>

namespace mixcon::testing_util {

template <typename Scalar = double>
Mat<Scalar> gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Mat<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(g(rng));
  }
  return m;
}

template <typename Scalar = double>
Mat<Scalar> unit_rows(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Mat<Scalar> m = gaussian<Scalar>(r, c, seed);
  m.rowwise().normalize();
  return m;
}

template <typename Scalar = double>
BatchInputs<Scalar> random_batch(int n, int d, int p, int m,
                                 std::uint64_t seed) {
  BatchInputs<Scalar> in;
  in.points = gaussian<Scalar>(Eigen::Index(n) * p, 6, seed) * Scalar(0.5);
  in.points_per_object = p;
  in.view_embeds = unit_rows<Scalar>(Eigen::Index(n) * m, d, seed + 1);
  in.views_per_object = m;
  in.text = unit_rows<Scalar>(n, d, seed + 2);
  return in;
}

}  // namespace mixcon::testing_util

#endif  // MIXCON_TESTS_TEST_UTIL_HPP_
