#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "klmdp/state_space.hpp"

namespace klmdp {

/// Exponentially tilted decision rule together with its per-state
/// log-normalizer.
struct TiltResult {
  StochasticMatrix tilted_rule;
  Vector log_normalizer;
};

/// h(x_u' | x) = sum_{x_n'} Q0(x, x_n') h(x_u', x_n'), as a d x d_u matrix.
inline Matrix conditional_expectation(const Vector& h,
                                      const FactoredKernel& kernel) {
  const auto& space = kernel.space();
  if (h.size() != space.size()) {
    throw DomainError("conditional_expectation: h has length " +
                      std::to_string(h.size()) + ", expected " +
                      std::to_string(space.size()));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
  Eigen::Map<const RowMajor> grid(h.data(), space.controlled_size(),
                                  space.nature_size());
  return kernel.nature().matrix() * grid.transpose();
}

inline Matrix conditional_expectation(const ValueFunction& h,
                                      const FactoredKernel& kernel) {
  return conditional_expectation(h.values(), kernel);
}

namespace detail {

// Shared row kernel for log_normalizer and tilt. Entries with zero nominal
// mass are skipped entirely, so an infinite or NaN g there is harmless.
inline double row_log_sum_exp(const Matrix& g, const Matrix& r0, Index x) {
  double peak = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (Index u = 0; u < r0.cols(); ++u) {
    if (r0(x, u) > 0.0) {
      peak = std::max(peak, g(x, u));
      any = true;
    }
  }
  if (!any) {
    throw DomainError("log_normalizer: nominal rule row " + std::to_string(x) +
                      " has no support");
  }
  double s = 0.0;
  for (Index u = 0; u < r0.cols(); ++u) {
    if (r0(x, u) > 0.0) s += r0(x, u) * std::exp(g(x, u) - peak);
  }
  return peak + std::log(s);
}

}  // namespace detail

/// Lambda(x) = log sum_{x_u'} R0(x, x_u') exp(g(x, x_u')), evaluated with
/// per-row max subtraction.
inline Vector log_normalizer(const Matrix& g_cond, const StochasticMatrix& r0) {
  if (g_cond.rows() != r0.rows() || g_cond.cols() != r0.cols()) {
    throw DomainError("log_normalizer: shape mismatch");
  }
  Vector out(r0.rows());
  for (Index x = 0; x < r0.rows(); ++x) {
    out(x) = detail::row_log_sum_exp(g_cond, r0.matrix(), x);
  }
  return out;
}

/// R_h(x, x_u') = R0(x, x_u') exp(h(x_u'|x) - Lambda_h(x)). Combined with Q0
/// this is the tilted kernel P_h. Support of R0 is preserved exactly.
inline TiltResult tilt(const Vector& h, const FactoredKernel& kernel) {
  const Matrix g = conditional_expectation(h, kernel);
  const Matrix& r0 = kernel.rule().matrix();
  Matrix rule = Matrix::Zero(r0.rows(), r0.cols());
  Vector lambda(r0.rows());
  for (Index x = 0; x < r0.rows(); ++x) {
    const double lse = detail::row_log_sum_exp(g, r0, x);
    double s = 0.0;
    for (Index u = 0; u < r0.cols(); ++u) {
      if (r0(x, u) > 0.0) {
        rule(x, u) = r0(x, u) * std::exp(g(x, u) - lse);
        s += rule(x, u);
      }
    }
    rule.row(x) /= s;
    lambda(x) = lse;
  }
  return TiltResult{StochasticMatrix(std::move(rule)), std::move(lambda)};
}

inline TiltResult tilt(const ValueFunction& h, const FactoredKernel& kernel) {
  return tilt(h.values(), kernel);
}

/// Unique maximizer over decision rules R of
///   -c_KL(x, R) + sum_x' P(x, x') W(x'),
/// where P = R Q0. It is the Gibbs tilt of R0 by W, and the attained maximum
/// is log_normalizer(x).
inline TiltResult optimal_rule(const Vector& continuation,
                               const FactoredKernel& kernel) {
  return tilt(continuation, kernel);
}

inline TiltResult optimal_rule(const ValueFunction& continuation,
                               const FactoredKernel& kernel) {
  return tilt(continuation.values(), kernel);
}

/// Row-wise relative entropy D(rule(x, .) || nominal(x, .)) with 0 log 0 = 0.
/// Works for decision rules (d x d_u) and full kernels (d x d) alike.
inline Vector kl_step_cost(const StochasticMatrix& rule,
                           const StochasticMatrix& nominal) {
  if (rule.rows() != nominal.rows() || rule.cols() != nominal.cols()) {
    throw DomainError("kl_step_cost: shape mismatch");
  }
  Vector cost = Vector::Zero(rule.rows());
  for (Index x = 0; x < rule.rows(); ++x) {
    double c = 0.0;
    for (Index u = 0; u < rule.cols(); ++u) {
      const double p = rule(x, u);
      if (p <= 0.0) continue;
      const double q = nominal(x, u);
      if (q <= 0.0) {
        throw AbsoluteContinuityError(
            "kl_step_cost: mass at (" + std::to_string(x) + ", " +
            std::to_string(u) + ") outside the nominal support");
      }
      c += p * std::log(p / q);
    }
    // Rounding can leave tiny negatives when rule == nominal.
    cost(x) = std::max(c, 0.0);
  }
  return cost;
}

/// Donsker-Varadhan rate K(P || P0) = sum_x pi(x) D(P(x, .) || P0(x, .)).
/// pi must be invariant for P to within 1e-9 in l1.
inline double dv_rate(const StochasticMatrix& p, const StochasticMatrix& p0,
                      const Vector& pi) {
  if (p.rows() != p.cols() || pi.size() != p.rows()) {
    throw DomainError("dv_rate: shape mismatch");
  }
  const double residual =
      (pi.transpose() * p.matrix() - pi.transpose()).lpNorm<1>();
  if (residual > 1e-9) {
    throw DomainError("dv_rate: pi is not invariant for P (l1 residual " +
                      std::to_string(residual) + ")");
  }
  return pi.dot(kl_step_cost(p, p0));
}

}  // namespace klmdp
