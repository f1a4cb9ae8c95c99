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

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every operation records its value and a closure that pushes the upstream
// gradient onto its parents. Nodes that do not depend on a parameter carry no
// closure, so frozen inputs (teacher embeddings, point coordinates) cost only
// their forward evaluation.

#ifndef MIXCON_AUTODIFF_HPP_
#define MIXCON_AUTODIFF_HPP_

#include "mixcon/tensor.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mixcon {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Mat<Scalar>& value() const { return tape_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward =
      std::function<void(Tape&, const Matrix& upstream, const Matrix& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) {
    return push(std::move(value), false, nullptr, {});
  }

  // A trainable leaf. Its gradient is reported under `name` by backward().
  Var<Scalar> parameter(const std::string& name, Matrix value) {
    if (!param_names_.insert(name).second) {
      throw std::invalid_argument("parameter registered twice: " + name);
    }
    return push(std::move(value), true, nullptr, name);
  }

  // Records an op. The closure is kept only if some parent needs a gradient.
  Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> parents,
                     Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr,
                {});
  }

  const Matrix& value(Var<Scalar> v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var<Scalar> v) const {
    return nodes_[v.id()].requires_grad;
  }

  template <typename Derived>
  void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void set_check_finite(bool on) { check_finite_ = on; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape backwards. Returns the
  // gradient of every parameter reached from root.
  GradMap<Scalar> backward(Var<Scalar> root) {
    Node& r = nodes_[root.id()];
    if (r.value.size() != 1) {
      throw ShapeError("backward() needs a scalar root");
    }
    for (auto& n : nodes_) {
      n.has_grad = false;
    }
    if (!r.requires_grad) return {};
    r.grad = Matrix::Ones(1, 1);
    r.has_grad = true;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, n.grad, n.value);
    }
    GradMap<Scalar> out;
    for (auto& n : nodes_) {
      if (!n.name.empty() && n.has_grad) out.emplace(n.name, n.grad);
    }
    return out;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    std::string name;
  };

  Var<Scalar> push(Matrix value, bool requires_grad, Backward backward,
                   std::string name) {
    if (check_finite_ && !value.allFinite()) {
      std::ostringstream os;
      os << "non-finite value produced at tape node " << nodes_.size();
      throw NumericError(os.str());
    }
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false,
                          std::move(backward), std::move(name)});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  // deque keeps node references stable while closures append new nodes.
  std::deque<Node> nodes_;
  std::unordered_set<std::string> param_names_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

namespace ad {

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const char* op, Var<Scalar> a, Var<Scalar> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     dims(a.rows(), a.cols()) + " vs " +
                     dims(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ " +
                     detail::dims(a.rows(), a.cols()) + " * " +
                     detail::dims(b.rows(), b.cols()));
  }
  Mat<Scalar> out;
  out.noalias() = a.value() * b.value();
  return a.tape().record(
      std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        if (t.requires_grad(a)) {
          Mat<Scalar> ga;
          ga.noalias() = g * b.value().transpose();
          t.accumulate(a, ga);
        }
        if (t.requires_grad(b)) {
          Mat<Scalar> gb;
          gb.noalias() = a.value().transpose() * g;
          t.accumulate(b, gb);
        }
      });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape("add", a, b);
  return a.tape().record(a.value() + b.value(), {a, b},
                         [a, b](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape("sub", a, b);
  return a.tape().record(a.value() - b.value(), {a, b},
                         [a, b](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g);
                           t.accumulate(b, -g);
                         });
}

// a (r x c) + row (1 x c), broadcast down the rows.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()));
  }
  Mat<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape().record(std::move(out), {a, row},
                         [a, row](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g);
                           if (t.requires_grad(row)) {
                             t.accumulate(row, g.colwise().sum());
                           }
                         });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape("mul", a, b);
  return a.tape().record(
      a.value().cwiseProduct(b.value()), {a, b},
      [a, b](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
        if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
      });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  return a.tape().record(a.value() * c, {a},
                         [a, c](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g * c);
                         });
}

// a scaled by a 1x1 variable.
template <typename Scalar>
Var<Scalar> scale_by(Var<Scalar> a, Var<Scalar> s) {
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must be 1x1");
  return a.tape().record(
      a.value() * s.value()(0, 0), {a, s},
      [a, s](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        if (t.requires_grad(a)) t.accumulate(a, g * s.value()(0, 0));
        if (t.requires_grad(s)) {
          Mat<Scalar> gs(1, 1);
          gs(0, 0) = g.cwiseProduct(a.value()).sum();
          t.accumulate(s, gs);
        }
      });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  return a.tape().record(
      a.value().cwiseMax(Scalar(0)), {a},
      [a](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        t.accumulate(a, (a.value().array() > Scalar(0))
                            .select(g, Scalar(0))
                            .matrix());
      });
}

// x / (1 + |x|): odd, bounded by 1, slope 1 at the origin.
template <typename Scalar>
Var<Scalar> softsign(Var<Scalar> a) {
  Mat<Scalar> out =
      (a.value().array() / (Scalar(1) + a.value().array().abs())).matrix();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           auto d = Scalar(1) + a.value().array().abs();
                           t.accumulate(a, (g.array() / (d * d)).matrix());
                         });
}

template <typename Scalar>
Var<Scalar> exp(Var<Scalar> a) {
  return a.tape().record(a.value().array().exp().matrix(), {a},
                         [a](Tape<Scalar>& t, const Mat<Scalar>& g,
                             const Mat<Scalar>& out) {
                           t.accumulate(a, g.cwiseProduct(out));
                         });
}

template <typename Scalar>
Var<Scalar> log(Var<Scalar> a) {
  if ((a.value().array() <= Scalar(0)).any()) {
    throw NumericError("log: non-positive argument");
  }
  return a.tape().record(a.value().array().log().matrix(), {a},
                         [a](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, (g.array() / a.value().array())
                                               .matrix());
                         });
}

// Row-wise x / ||x||. The Jacobian of each row is (I - z z^T) / ||x||.
template <typename Scalar>
Var<Scalar> normalize_rows(Var<Scalar> a) {
  const Mat<Scalar>& x = a.value();
  Vec<Scalar> norms = x.rowwise().norm();
  norms = norms.cwiseMax(std::numeric_limits<Scalar>::min());
  Mat<Scalar> z = norms.cwiseInverse().asDiagonal() * x;
  return a.tape().record(
      std::move(z), {a},
      [a, norms](Tape<Scalar>& t, const Mat<Scalar>& g, const Mat<Scalar>& zv) {
        Vec<Scalar> dots = zv.cwiseProduct(g).rowwise().sum();
        Mat<Scalar> ga = g - dots.asDiagonal() * zv;
        t.accumulate(a, norms.cwiseInverse().asDiagonal() * ga);
      });
}

// Max over consecutive blocks of `group` rows: (B*group) x c -> B x c.
// Ties route the subgradient to the lowest row in the block.
template <typename Scalar>
Var<Scalar> group_max(Var<Scalar> a, Eigen::Index group) {
  const Mat<Scalar>& x = a.value();
  if (group <= 0 || x.rows() % group != 0) {
    throw ShapeError("group_max: rows not divisible by group size");
  }
  const Eigen::Index blocks = x.rows() / group;
  const Eigen::Index cols = x.cols();
  Mat<Scalar> out(blocks, cols);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      arg(blocks, cols);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index base = b * group;
    out.row(b) = x.row(base);
    arg.row(b).setConstant(base);
    for (Eigen::Index r = base + 1; r < base + group; ++r) {
      const Scalar* src = x.row(r).data();
      Scalar* dst = out.row(b).data();
      Eigen::Index* idx = arg.row(b).data();
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (src[c] > dst[c]) {
          dst[c] = src[c];
          idx[c] = r;
        }
      }
    }
  }
  const Eigen::Index rows = x.rows();
  return a.tape().record(
      std::move(out), {a},
      [a, arg = std::move(arg), rows, cols](Tape<Scalar>& t,
                                            const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        Mat<Scalar> ga = Mat<Scalar>::Zero(rows, cols);
        for (Eigen::Index b = 0; b < g.rows(); ++b) {
          for (Eigen::Index c = 0; c < cols; ++c) {
            ga(arg(b, c), c) += g(b, c);
          }
        }
        t.accumulate(a, ga);
      });
}

// Mean over consecutive blocks of `group` rows.
template <typename Scalar>
Var<Scalar> group_mean(Var<Scalar> a, Eigen::Index group) {
  const Mat<Scalar>& x = a.value();
  if (group <= 0 || x.rows() % group != 0) {
    throw ShapeError("group_mean: rows not divisible by group size");
  }
  const Eigen::Index blocks = x.rows() / group;
  Mat<Scalar> out = Mat<Scalar>::Zero(blocks, x.cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index r = 0; r < group; ++r) out.row(b) += x.row(b * group + r);
  }
  out /= Scalar(group);
  return a.tape().record(
      std::move(out), {a}, [a, group](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        Mat<Scalar> ga(g.rows() * group, g.cols());
        for (Eigen::Index b = 0; b < g.rows(); ++b) {
          for (Eigen::Index r = 0; r < group; ++r) {
            ga.row(b * group + r) = g.row(b) / Scalar(group);
          }
        }
        t.accumulate(a, ga);
      });
}

template <typename Scalar>
Var<Scalar> concat_cols(Var<Scalar> a, Var<Scalar> b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row count differs");
  Mat<Scalar> out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return a.tape().record(std::move(out), {a, b},
                         [a, b, ca, cb](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g.leftCols(ca));
                           t.accumulate(b, g.rightCols(cb));
                         });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  return a.tape().record(a.value().transpose(), {a},
                         [a](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, g.transpose());
                         });
}

// Diagonal of a square matrix as an r x 1 column.
template <typename Scalar>
Var<Scalar> diag(Var<Scalar> a) {
  if (a.rows() != a.cols()) throw ShapeError("diag: matrix is not square");
  Mat<Scalar> out = a.value().diagonal();
  const Eigen::Index n = a.rows();
  return a.tape().record(std::move(out), {a},
                         [a, n](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           Mat<Scalar> ga = Mat<Scalar>::Zero(n, n);
                           ga.diagonal() = g.col(0);
                           t.accumulate(a, ga);
                         });
}

// Row-wise log(sum(exp(x))) with the row max factored out: r x c -> r x 1.
template <typename Scalar>
Var<Scalar> logsumexp_rows(Var<Scalar> a) {
  const Mat<Scalar>& x = a.value();
  Vec<Scalar> mx = x.rowwise().maxCoeff();
  Mat<Scalar> shifted = x.colwise() - mx;
  Mat<Scalar> e = shifted.array().exp().matrix();
  Vec<Scalar> sums = e.rowwise().sum();
  Mat<Scalar> out = (mx.array() + sums.array().log()).matrix();
  return a.tape().record(
      std::move(out), {a},
      [a, e = std::move(e), sums](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
        Vec<Scalar> w = g.col(0).cwiseQuotient(sums);
        t.accumulate(a, w.asDiagonal() * e);
      });
}

template <typename Scalar>
Var<Scalar> sum_all(Var<Scalar> a) {
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return a.tape().record(std::move(out), {a},
                         [a, r, c](Tape<Scalar>& t, const Mat<Scalar>& g,
                 const Mat<Scalar>&) {
                           t.accumulate(a, Mat<Scalar>::Constant(r, c, g(0, 0)));
                         });
}

template <typename Scalar>
Var<Scalar> mean_all(Var<Scalar> a) {
  return scale(sum_all(a), Scalar(1) / Scalar(a.value().size()));
}

}  // namespace ad

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  return ad::add(a, b);
}
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  return ad::sub(a, b);
}

}  // namespace mixcon

#endif  // MIXCON_AUTODIFF_HPP_
