#include "mixcon/autodiff.hpp"
#include "mixcon/gradcheck.hpp"
#include "mixcon/optim.hpp"
#include "mixcon/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mixcon {
namespace {

using MatD = Mat<double>;

MatD gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

TEST(Autodiff, SquareAtThree) {
  Tape<double> tape;
  auto x = tape.parameter("x", MatD::Constant(1, 1, 3.0));
  auto y = ad::mul(x, x);
  EXPECT_EQ(y.value()(0, 0), 9.0);
  const auto g = tape.backward(y);
  EXPECT_EQ(g.at("x")(0, 0), 6.0);
}

TEST(Autodiff, GradMapKeysAreTouchedParameters) {
  Tape<double> tape;
  auto a = tape.parameter("a", MatD::Ones(2, 2));
  tape.parameter("unused", MatD::Ones(2, 2));
  auto c = tape.constant(MatD::Ones(2, 2));
  const auto g = tape.backward(ad::sum_all(ad::mul(a, c)));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.count("a"));
}

TEST(Autodiff, DuplicateParameterNameThrows) {
  Tape<double> tape;
  tape.parameter("a", MatD::Ones(1, 1));
  EXPECT_THROW(tape.parameter("a", MatD::Ones(1, 1)), std::invalid_argument);
}

TEST(Autodiff, NormalizeOnTangentPassesGradientThrough) {
  MatD x(1, 3);
  x << 0.6, 0.8, 0.0;
  MatD g(1, 3);
  g << -0.8, 0.6, 0.5;  // orthogonal to x
  Tape<double> tape;
  auto v = tape.parameter("x", x);
  auto loss = ad::sum_all(ad::mul(ad::normalize_rows(v), tape.constant(g)));
  const auto grads = tape.backward(loss);
  EXPECT_LE((grads.at("x") - g).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, GroupMaxRoutesTiesToLowestRow) {
  MatD x(3, 2);
  x << 1, 5,
       4, 5,
       4, 2;
  Tape<double> tape;
  auto v = tape.parameter("x", x);
  auto m = ad::group_max(v, 3);
  EXPECT_EQ(m.value()(0, 0), 4.0);
  EXPECT_EQ(m.value()(0, 1), 5.0);
  const auto g = tape.backward(ad::sum_all(m));
  MatD want = MatD::Zero(3, 2);
  want(1, 0) = 1.0;
  want(0, 1) = 1.0;
  EXPECT_EQ(g.at("x"), want);
}

TEST(Autodiff, LogOfNonPositiveThrows) {
  Tape<double> tape;
  auto v = tape.constant(MatD::Constant(1, 2, 0.0));
  EXPECT_THROW(ad::log(v), NumericError);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape<double> tape;
  auto a = tape.constant(MatD::Ones(2, 3));
  auto b = tape.constant(MatD::Ones(2, 3));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(ad::add(a, tape.constant(MatD::Ones(3, 2))), ShapeError);
  EXPECT_THROW(ad::add_row(a, tape.constant(MatD::Ones(1, 2))), ShapeError);
}

TEST(Autodiff, CheckFiniteFlagsOverflow) {
  Tape<double> tape;
  tape.set_check_finite(true);
  auto v = tape.constant(MatD::Constant(1, 1, 1e6));
  EXPECT_THROW(ad::exp(v), NumericError);
}

TEST(GradCheck, LinearMapIsExact) {
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(gaussian(4, 3, 1));
  p["b"] = Tensor<double>::vector(gaussian(1, 3, 2));
  const MatD x = gaussian(5, 4, 3);
  const MatD up = gaussian(5, 3, 4);
  Objective f = [&](Tape<double>& t, const BoundParams& b) {
    auto y = ad::add_row(ad::matmul(t.constant(x), b.at("w")), b.at("b"));
    return ad::sum_all(ad::mul(y, t.constant(up)));
  };
  // Only roundoff remains for a linear objective, about |f| * 2^-52 / eps, so
  // the widest allowed step is used.
  const auto r = grad_check(f, p, 1e-4);
  EXPECT_EQ(r.coordinates, 15u);
  EXPECT_LE(r.max_rel_error, 1e-10);
}

TEST(GradCheck, ReluAwayFromKinks) {
  const double eps = 1e-5;
  // Resample until every pre-activation clears the kink by 10 eps.
  std::uint64_t seed = 10;
  MatD x, w;
  for (;; ++seed) {
    x = gaussian(6, 4, seed);
    w = gaussian(4, 5, seed + 1000);
    if ((x * w).cwiseAbs().minCoeff() > 10 * eps) break;
  }
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(w);
  const MatD up = gaussian(6, 5, 7);
  Objective f = [&](Tape<double>& t, const BoundParams& b) {
    auto h = ad::relu(ad::matmul(t.constant(x), b.at("w")));
    return ad::sum_all(ad::mul(h, t.constant(up)));
  };
  EXPECT_LE(grad_check(f, p, eps).max_rel_error, 1e-6);
}

TEST(GradCheck, LogSumExpOfFiveVector) {
  TensorMap<double> p;
  p["v"] = Tensor<double>::vector(gaussian(1, 5, 5));
  Objective f = [](Tape<double>&, const BoundParams& b) {
    return ad::sum_all(ad::logsumexp_rows(b.at("v")));
  };
  EXPECT_LE(grad_check(f, p, 1e-5).max_rel_error, 1e-8);
}

TEST(GradCheck, SmoothCompositeOfEveryOp) {
  TensorMap<double> p;
  p["a"] = Tensor<double>::matrix(gaussian(6, 4, 11));
  p["b"] = Tensor<double>::matrix(gaussian(6, 4, 12));
  p["s"] = Tensor<double>::scalar(0.7);
  Objective f = [](Tape<double>& t, const BoundParams& b) {
    auto a = ad::normalize_rows(ad::softsign(b.at("a")));
    auto pooled = ad::group_mean(ad::concat_cols(a, b.at("b")), 2);  // 3x8
    auto gm = ad::group_max(b.at("b"), 3);                          // 2x4
    auto sq = ad::matmul(pooled, ad::transpose(pooled));             // 3x3
    auto logits = ad::scale_by(sq, ad::exp(b.at("s")));
    auto lse = ad::logsumexp_rows(logits);
    auto d = ad::diag(logits);
    auto pos = ad::exp(ad::scale(gm, 0.1));
    return ad::mean_all(lse - d) + ad::mean_all(ad::log(pos)) +
           ad::sum_all(ad::sub(pos, ad::scale(pos, 0.5)));
  };
  EXPECT_LE(grad_check(f, p, 1e-6).max_rel_error, 1e-6);
}

TEST(GradCheck, RejectsEpsOutsideRange) {
  TensorMap<double> p;
  p["v"] = Tensor<double>::scalar(1.0);
  Objective f = [](Tape<double>&, const BoundParams& b) { return b.at("v"); };
  EXPECT_THROW(grad_check(f, p, 1e-3), std::invalid_argument);
  EXPECT_THROW(grad_check(f, p, 1e-7), std::invalid_argument);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(AdamW, ZeroLearningRateLeavesParameters) {
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(gaussian(3, 3, 1));
  const MatD before = p["w"].values;
  GradMap<double> g{{"w", gaussian(3, 3, 2)}};
  OptimState<double> st;
  adamw_step(p, g, st, 0.0);
  EXPECT_EQ(p["w"].values, before);
  EXPECT_EQ(st.step, 1);
}

TEST(AdamW, FirstStepClosedForm) {
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(gaussian(2, 4, 3));
  const MatD theta = p["w"].values;
  const MatD g = gaussian(2, 4, 4);
  OptimState<double> st;
  st.hyper.weight_decay = 0.0;
  const double lr = 0.01;
  adamw_step(p, GradMap<double>{{"w", g}}, st, lr);
  const MatD want =
      theta.array() - lr * g.array() / (g.array().square().sqrt() + 1e-8);
  EXPECT_LE((p["w"].values - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AdamW, DecoupledDecayOnly) {
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(gaussian(2, 2, 5));
  p["w.b"] = Tensor<double>::vector(gaussian(1, 2, 6));
  p["scale/p_t"] = Tensor<double>::scalar(2.0);
  const TensorMap<double> before = p;
  GradMap<double> g{{"w", MatD::Zero(2, 2)},
                    {"w.b", MatD::Zero(1, 2)},
                    {"scale/p_t", MatD::Zero(1, 1)}};
  OptimState<double> st;
  st.hyper.weight_decay = 0.1;
  const double lr = 0.5;
  adamw_step(p, g, st, lr);
  EXPECT_LE((p["w"].values - before.at("w").values * (1 - lr * 0.1))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  EXPECT_EQ(p["w.b"].values, before.at("w.b").values);
  EXPECT_EQ(p["scale/p_t"].values, before.at("scale/p_t").values);
}

TEST(AdamW, ShapeMismatchAndNegativeLr) {
  TensorMap<double> p;
  p["w"] = Tensor<double>::matrix(MatD::Zero(2, 2));
  OptimState<double> st;
  EXPECT_THROW(adamw_step(p, GradMap<double>{{"w", MatD::Zero(2, 3)}}, st, 0.1),
               ShapeError);
  EXPECT_THROW(adamw_step(p, GradMap<double>{{"w", MatD::Zero(2, 2)}}, st, -1.0),
               std::invalid_argument);
  EXPECT_EQ(st.step, 0);
}

TEST(Schedule, PaperScaleEndpoints) {
  Schedule s{1e-3, 2048, 100, 1000};
  EXPECT_EQ(s.peak_lr(), 8e-3);
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_EQ(lr_at(100, s), 8e-3);
  EXPECT_EQ(lr_at(550, s), 4e-3);
  EXPECT_EQ(lr_at(1000, s), 0.0);
  EXPECT_THROW(lr_at(1001, s), std::out_of_range);
  EXPECT_THROW(lr_at(-1, s), std::out_of_range);
}

TEST(Schedule, ContinuousSinglePeakMonotoneDecay) {
  Schedule s{1e-3, 128, 27, 270};
  double prev = lr_at(0, s);
  int peaks = 0;
  for (std::int64_t k = 1; k <= s.total_steps; ++k) {
    const double lr = lr_at(k, s);
    EXPECT_LE(std::abs(lr - prev), s.peak_lr() / 20);
    if (k <= s.warmup_steps) {
      EXPECT_GT(lr, prev);
    } else {
      EXPECT_LE(lr, prev);
    }
    peaks += lr == s.peak_lr();
    prev = lr;
  }
  EXPECT_EQ(peaks, 1);
}

TEST(Schedule, InvalidWarmupRejected) {
  Schedule s{1e-3, 128, 10, 10};
  EXPECT_THROW(lr_at(0, s), std::invalid_argument);
}

TEST(Seeding, StreamsAreDisjoint) {
  EXPECT_NE(derive_seed(1, Stream::kInit), derive_seed(1, Stream::kBatchOrder));
  EXPECT_NE(derive_seed(1, Stream::kInit), derive_seed(2, Stream::kInit));
  EXPECT_EQ(derive_seed(1, Stream::kInit, 3), derive_seed(1, Stream::kInit, 3));
}

}  // namespace
}  // namespace mixcon
