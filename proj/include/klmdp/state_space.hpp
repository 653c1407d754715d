#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "klmdp/errors.hpp"

namespace klmdp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-sum tolerance for every stochastic matrix in the library.
inline constexpr double kRowSumTolerance = 1e-12;

/// X = X_u x X_n, enumerated row-major over (x_u, x_n) so that the
/// x_n coordinate of a fixed x_u is contiguous.
class ProductStateSpace {
 public:
  ProductStateSpace(Index controlled_size, Index nature_size)
      : d_u_(controlled_size), d_n_(nature_size) {
    if (d_u_ < 1 || d_n_ < 1) {
      throw DomainError("ProductStateSpace: both factor sizes must be >= 1");
    }
  }

  Index controlled_size() const { return d_u_; }
  Index nature_size() const { return d_n_; }
  Index size() const { return d_u_ * d_n_; }

  Index flatten(Index x_u, Index x_n) const {
    if (x_u < 0 || x_u >= d_u_ || x_n < 0 || x_n >= d_n_) {
      throw DomainError("flatten: index (" + std::to_string(x_u) + ", " +
                        std::to_string(x_n) + ") outside " +
                        std::to_string(d_u_) + "x" + std::to_string(d_n_));
    }
    return x_u * d_n_ + x_n;
  }

  std::pair<Index, Index> unflatten(Index x) const {
    if (x < 0 || x >= size()) {
      throw DomainError("unflatten: state " + std::to_string(x) +
                        " outside [0, " + std::to_string(size()) + ")");
    }
    return {x / d_n_, x % d_n_};
  }

  bool operator==(const ProductStateSpace&) const = default;

 private:
  Index d_u_;
  Index d_n_;
};

/// Dense nonnegative matrix whose rows are pmfs. Immutable once built.
class StochasticMatrix {
 public:
  explicit StochasticMatrix(Matrix entries, double tolerance = kRowSumTolerance)
      : m_(std::move(entries)) {
    validate(tolerance);
  }

  /// Rescales each row to sum to one before validating. Rows must be
  /// nonnegative with positive mass.
  static StochasticMatrix normalized(Matrix entries) {
    for (Index i = 0; i < entries.rows(); ++i) {
      const double s = entries.row(i).sum();
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw DomainError("StochasticMatrix: row " + std::to_string(i) +
                          " has no positive mass");
      }
      entries.row(i) /= s;
    }
    return StochasticMatrix(std::move(entries));
  }

  Index rows() const { return m_.rows(); }
  Index cols() const { return m_.cols(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }

 private:
  void validate(double tolerance) const {
    if (m_.rows() == 0 || m_.cols() == 0) {
      throw DomainError("StochasticMatrix: empty matrix");
    }
    for (Index i = 0; i < m_.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < m_.cols(); ++j) {
        const double v = m_(i, j);
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw DomainError("StochasticMatrix: entry (" + std::to_string(i) +
                            ", " + std::to_string(j) +
                            ") is negative or not finite");
        }
        s += v;
      }
      if (std::abs(s - 1.0) > tolerance) {
        throw DomainError("StochasticMatrix: row " + std::to_string(i) +
                          " sums to " + std::to_string(s));
      }
    }
  }

  Matrix m_;
};

/// The pair (R, Q0) generating P(x, (x_u', x_n')) = R(x, x_u') Q0(x, x_n').
/// R is the decision rule (d x d_u), Q0 the nature kernel (d x d_n).
class FactoredKernel {
 public:
  FactoredKernel(ProductStateSpace space, StochasticMatrix rule,
                 StochasticMatrix nature)
      : space_(space), rule_(std::move(rule)), nature_(std::move(nature)) {
    const Index d = space_.size();
    if (rule_.rows() != d || rule_.cols() != space_.controlled_size()) {
      throw DomainError("FactoredKernel: rule must be d x d_u");
    }
    if (nature_.rows() != d || nature_.cols() != space_.nature_size()) {
      throw DomainError("FactoredKernel: nature kernel must be d x d_n");
    }
  }

  const ProductStateSpace& space() const { return space_; }
  const StochasticMatrix& rule() const { return rule_; }
  const StochasticMatrix& nature() const { return nature_; }

  /// Same nature kernel, different decision rule.
  FactoredKernel with_rule(StochasticMatrix rule) const {
    return FactoredKernel(space_, std::move(rule), nature_);
  }

 private:
  ProductStateSpace space_;
  StochasticMatrix rule_;
  StochasticMatrix nature_;
};

/// Real function on X pinned to zero at a basepoint.
class ValueFunction {
 public:
  ValueFunction(Vector values, Index basepoint)
      : values_(std::move(values)), basepoint_(basepoint) {
    if (basepoint_ < 0 || basepoint_ >= values_.size()) {
      throw DomainError("ValueFunction: basepoint outside the state space");
    }
    renormalize();
  }

  static ValueFunction zero(Index size, Index basepoint) {
    return ValueFunction(Vector::Zero(size), basepoint);
  }

  const Vector& values() const { return values_; }
  Index basepoint() const { return basepoint_; }
  Index size() const { return values_.size(); }
  double operator[](Index x) const { return values_(x); }

 private:
  void renormalize() {
    const double pin = values_(basepoint_);
    values_.array() -= pin;
    values_(basepoint_) = 0.0;
  }

  Vector values_;
  Index basepoint_;
};

/// Dense d x d matrix of the factored kernel.
inline StochasticMatrix induced_transition(const FactoredKernel& kernel) {
  const auto& space = kernel.space();
  const Index d = space.size();
  const Index d_u = space.controlled_size();
  const Index d_n = space.nature_size();
  const Matrix& r = kernel.rule().matrix();
  const Matrix& q = kernel.nature().matrix();
  Matrix p(d, d);
  for (Index u = 0; u < d_u; ++u) {
    for (Index n = 0; n < d_n; ++n) {
      p.col(u * d_n + n) = r.col(u).cwiseProduct(q.col(n));
    }
  }
  return StochasticMatrix(std::move(p));
}

/// (P v)(x) for the factored P, without forming P.
inline Vector apply_transition(const FactoredKernel& kernel, const Vector& v) {
  const auto& space = kernel.space();
  if (v.size() != space.size()) {
    throw DomainError("apply_transition: vector length mismatch");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
  Eigen::Map<const RowMajor> grid(v.data(), space.controlled_size(),
                                  space.nature_size());
  const Matrix conditional = kernel.nature().matrix() * grid.transpose();
  return kernel.rule().matrix().cwiseProduct(conditional).rowwise().sum();
}

}  // namespace klmdp
