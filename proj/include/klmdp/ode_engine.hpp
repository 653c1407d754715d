#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "klmdp/chain_solvers.hpp"
#include "klmdp/kl_calculus.hpp"
#include "klmdp/state_space.hpp"

namespace klmdp {

struct OdeConfig {
  double zeta_max = 0.0;
  /// Nominal RK4 step. The grid uses zeta_max / ceil(zeta_max / step) so
  /// that zeta_max is hit exactly.
  double step = 0.01;
  /// Values in [0, zeta_max] where full solutions are emitted. Empty means
  /// {0, zeta_max}.
  std::vector<double> checkpoints;
  /// Bound on sup_x |zeta U + Lambda_h - h - eta| at every checkpoint.
  double residual_tol = 1e-6;
  /// Bound on sup_x |U + P H - H - pi(U)| at every checkpoint.
  double poisson_tol = 1e-6;
};

/// A requested checkpoint that did not fall on the integration grid.
struct CheckpointSnap {
  double requested;
  double snapped;
};

/// Uniform grid zeta_k = zeta_max * k / steps, k = 0..steps.
class ZetaGrid {
 public:
  explicit ZetaGrid(const OdeConfig& cfg) : zeta_max_(cfg.zeta_max) {
    if (!(cfg.zeta_max >= 0.0) || !std::isfinite(cfg.zeta_max)) {
      throw DomainError("OdeConfig: zeta_max must be finite and >= 0");
    }
    if (!(cfg.step > 0.0) || !std::isfinite(cfg.step)) {
      throw DomainError("OdeConfig: step must be finite and > 0");
    }
    steps_ = zeta_max_ == 0.0
                 ? 0
                 : std::max<Index>(1, static_cast<Index>(std::ceil(
                                          zeta_max_ / cfg.step - 1e-9)));

    std::vector<double> wanted = cfg.checkpoints;
    if (wanted.empty()) wanted = {0.0, zeta_max_};
    for (double c : wanted) {
      if (!(c >= -1e-12 && c <= zeta_max_ + 1e-12)) {
        throw DomainError("OdeConfig: checkpoint " + std::to_string(c) +
                          " outside [0, zeta_max]");
      }
      Index k = steps_ == 0 ? 0
                            : static_cast<Index>(std::lround(c / step()));
      k = std::clamp<Index>(k, 0, steps_);
      if (std::abs(zeta(k) - c) > 1e-12) snaps_.push_back({c, zeta(k)});
      checkpoint_steps_.push_back(k);
      requested_.push_back(c);
    }
    // Sort by grid index and drop duplicates created by snapping.
    std::vector<std::size_t> order(checkpoint_steps_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return checkpoint_steps_[a] < checkpoint_steps_[b];
    });
    std::vector<Index> ks;
    std::vector<double> req;
    for (auto i : order) {
      if (!ks.empty() && ks.back() == checkpoint_steps_[i]) continue;
      ks.push_back(checkpoint_steps_[i]);
      req.push_back(requested_[i]);
    }
    checkpoint_steps_ = std::move(ks);
    requested_ = std::move(req);
  }

  Index steps() const { return steps_; }
  double step() const {
    return steps_ == 0 ? 0.0 : zeta_max_ / static_cast<double>(steps_);
  }
  double zeta(Index k) const {
    return k == steps_ ? zeta_max_
                       : zeta_max_ * static_cast<double>(k) /
                             static_cast<double>(steps_);
  }
  const std::vector<Index>& checkpoint_steps() const {
    return checkpoint_steps_;
  }
  const std::vector<double>& requested() const { return requested_; }
  const std::vector<CheckpointSnap>& snaps() const { return snaps_; }
  bool is_checkpoint(Index k) const {
    return std::binary_search(checkpoint_steps_.begin(),
                              checkpoint_steps_.end(), k);
  }

 private:
  double zeta_max_;
  Index steps_ = 0;
  std::vector<Index> checkpoint_steps_;
  std::vector<double> requested_;
  std::vector<CheckpointSnap> snaps_;
};

// ---------------------------------------------------------------------------
// Average reward

/// H = H°(P_h): the basepoint-normalized Poisson solution for the tilted
/// kernel P_h, along with pi_h and pi_h(U).
inline ChainAnalysis ar_vector_field_analysis(const ValueFunction& h,
                                              const FactoredKernel& model,
                                              const Vector& utility) {
  const TiltResult t = tilt(h, model);
  const StochasticMatrix p = induced_transition(model.with_rule(t.tilted_rule));
  return poisson_solve(p, utility, h.basepoint());
}

inline ValueFunction ar_vector_field(const ValueFunction& h,
                                     const FactoredKernel& model,
                                     const Vector& utility) {
  return ar_vector_field_analysis(h, model, utility).poisson_solution;
}

/// sup_x |zeta U(x) + Lambda_h(x) - h(x) - eta|.
inline double aroe_residual(const Vector& h, double eta,
                            const FactoredKernel& model, const Vector& utility,
                            double zeta) {
  const Vector lambda =
      log_normalizer(conditional_expectation(h, model), model.rule());
  return (zeta * utility + lambda - h - Vector::Constant(h.size(), eta))
      .lpNorm<Eigen::Infinity>();
}

struct ArGridPoint {
  double zeta;
  Vector h;
  double eta;
  double aroe_residual_sup;
};

struct ArCheckpoint {
  double zeta;
  double requested_zeta;
  ValueFunction h;
  double eta;
  StochasticMatrix tilted_rule;
  StochasticMatrix controlled_P;
  Vector pi;
  /// dh/dzeta at this point.
  ValueFunction vector_field;
  double aroe_residual_sup;
  double poisson_residual_sup;
};

struct ZetaSolutionPath {
  ZetaGrid grid;
  std::vector<ArGridPoint> trajectory;
  std::vector<ArCheckpoint> checkpoints;
};

namespace detail {

inline void require_utility(const FactoredKernel& model, const Vector& utility) {
  if (utility.size() != model.space().size()) {
    throw DomainError("utility length " + std::to_string(utility.size()) +
                      " does not match state count " +
                      std::to_string(model.space().size()));
  }
}

inline ArCheckpoint make_ar_checkpoint(const FactoredKernel& model,
                                       const Vector& utility, Index basepoint,
                                       double zeta, double requested,
                                       const Vector& h, double eta,
                                       const OdeConfig& cfg) {
  ValueFunction hv(h, basepoint);
  TiltResult t = tilt(hv, model);
  StochasticMatrix p = induced_transition(model.with_rule(t.tilted_rule));
  ChainAnalysis a = poisson_solve(p, utility, basepoint);
  const double aroe = aroe_residual(hv.values(), eta, model, utility, zeta);
  if (!(aroe <= cfg.residual_tol)) {
    throw ConvergenceError(
        "solve_average_reward: AROE residual " + std::to_string(aroe) +
        " at zeta = " + std::to_string(zeta) + " exceeds " +
        std::to_string(cfg.residual_tol) + "; reduce the step");
  }
  if (!(a.poisson_residual <= cfg.poisson_tol)) {
    throw ConvergenceError("solve_average_reward: Poisson residual " +
                           std::to_string(a.poisson_residual) +
                           " at zeta = " + std::to_string(zeta) +
                           " exceeds " + std::to_string(cfg.poisson_tol));
  }
  return ArCheckpoint{zeta,
                      requested,
                      std::move(hv),
                      eta,
                      std::move(t.tilted_rule),
                      std::move(p),
                      std::move(a.pi),
                      std::move(a.poisson_solution),
                      aroe,
                      a.poisson_residual};
}

}  // namespace detail

/// Integrates dh/dzeta = H°(P_h), d eta/dzeta = pi_h(U) from h = 0, eta = 0
/// with classical RK4 on the joint state (h, eta).
inline ZetaSolutionPath solve_average_reward(const FactoredKernel& model,
                                             const Vector& utility,
                                             Index basepoint,
                                             const OdeConfig& cfg) {
  detail::require_utility(model, utility);
  const Index d = model.space().size();
  if (basepoint < 0 || basepoint >= d) {
    throw DomainError("solve_average_reward: basepoint out of range");
  }
  ZetaSolutionPath path{ZetaGrid(cfg), {}, {}};
  const ZetaGrid& grid = path.grid;
  const double s = grid.step();

  auto field = [&](const Vector& h, Vector& dh) {
    ChainAnalysis a =
        ar_vector_field_analysis(ValueFunction(h, basepoint), model, utility);
    dh = a.poisson_solution.values();
    return a.mean_reward;
  };

  Vector h = Vector::Zero(d);
  double eta = 0.0;
  std::size_t next_cp = 0;
  Vector k1, k2, k3, k4;
  for (Index k = 0;; ++k) {
    const double zeta = grid.zeta(k);
    path.trajectory.push_back(
        {zeta, h, eta, aroe_residual(h, eta, model, utility, zeta)});
    if (next_cp < grid.checkpoint_steps().size() &&
        grid.checkpoint_steps()[next_cp] == k) {
      path.checkpoints.push_back(detail::make_ar_checkpoint(
          model, utility, basepoint, zeta, grid.requested()[next_cp], h, eta,
          cfg));
      ++next_cp;
    }
    if (k == grid.steps()) break;

    const double e1 = field(h, k1);
    const double e2 = field(h + 0.5 * s * k1, k2);
    const double e3 = field(h + 0.5 * s * k2, k3);
    const double e4 = field(h + s * k3, k4);
    h += (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    h.array() -= h(basepoint);
    eta += (s / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
  }
  return path;
}

struct OracleOptions {
  Index max_iterations = 1000000;
  double tolerance = 1e-10;
  /// Weight on the new iterate; 1 is plain relative value iteration.
  double damping = 1.0;
};

struct AroeSolution {
  ValueFunction h;
  double eta;
  Index iterations;
};

/// Relative value iteration on zeta U + Lambda_h = h + eta. Independent of the
/// ODE route.
inline AroeSolution aroe_fixed_point_oracle(const FactoredKernel& model,
                                            const Vector& utility, double zeta,
                                            Index basepoint,
                                            const OracleOptions& opts = {}) {
  detail::require_utility(model, utility);
  const Index d = model.space().size();
  if (basepoint < 0 || basepoint >= d) {
    throw DomainError("aroe_fixed_point_oracle: basepoint out of range");
  }
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) {
    throw DomainError("aroe_fixed_point_oracle: damping must be in (0, 1]");
  }
  Vector h = Vector::Zero(d);
  double eta = 0.0;
  for (Index it = 1; it <= opts.max_iterations; ++it) {
    Vector next = zeta * utility +
                  log_normalizer(conditional_expectation(h, model), model.rule());
    eta = next(basepoint);
    next.array() -= eta;
    next = (1.0 - opts.damping) * h + opts.damping * next;
    const double change = (next - h).lpNorm<Eigen::Infinity>();
    h = std::move(next);
    if (change <= opts.tolerance) {
      return AroeSolution{ValueFunction(std::move(h), basepoint), eta, it};
    }
  }
  throw ConvergenceError(
      "aroe_fixed_point_oracle: no convergence after " +
      std::to_string(opts.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Finite horizon

/// Backward dynamic programming: W_0 = zeta U, W_t = zeta U + Lambda_{W_{t-1}}.
inline std::vector<Vector> fh_backward_oracle(const FactoredKernel& model,
                                              const Vector& utility,
                                              double zeta, Index horizon) {
  detail::require_utility(model, utility);
  if (horizon < 0) throw DomainError("fh_backward_oracle: horizon must be >= 0");
  std::vector<Vector> w;
  w.reserve(horizon + 1);
  w.push_back(zeta * utility);
  for (Index t = 1; t <= horizon; ++t) {
    w.push_back(zeta * utility +
                log_normalizer(conditional_expectation(w.back(), model),
                               model.rule()));
  }
  return w;
}

struct FhGridPoint {
  double zeta;
  std::vector<Vector> values;
};

struct FhCheckpoint {
  double zeta;
  double requested_zeta;
  /// values[k] is W*_k, k = 0..T. Not basepoint-normalized.
  std::vector<Vector> values;
  /// policies[i] = optimal_rule(values[i]); used when i + 1 steps remain.
  std::vector<StochasticMatrix> policies;
};

struct FiniteHorizonPath {
  ZetaGrid grid;
  Index horizon;
  std::vector<FhGridPoint> trajectory;
  std::vector<FhCheckpoint> checkpoints;
};

/// Block vector field: V_0 = U and V_k = U + P_{k-1} V_{k-1}, which unrolls
/// to Z_{k-1} U with Z_{k-1} = I + P_{k-1} + P_{k-1} P_{k-2} + ... + P_{k-1}..P_0.
/// P_i is the controlled kernel of optimal_rule(W_i).
inline std::vector<Vector> fh_vector_field(const std::vector<Vector>& w,
                                           const FactoredKernel& model,
                                           const Vector& utility) {
  std::vector<Vector> v;
  v.reserve(w.size());
  v.push_back(utility);
  for (std::size_t k = 1; k < w.size(); ++k) {
    const TiltResult policy = optimal_rule(w[k - 1], model);
    const Matrix cond = conditional_expectation(v.back(), model);
    v.push_back(utility + policy.tilted_rule.matrix()
                              .cwiseProduct(cond)
                              .rowwise()
                              .sum());
  }
  return v;
}

inline FiniteHorizonPath solve_finite_horizon(const FactoredKernel& model,
                                              const Vector& utility,
                                              Index horizon,
                                              const OdeConfig& cfg) {
  detail::require_utility(model, utility);
  if (horizon < 0) {
    throw DomainError("solve_finite_horizon: horizon must be >= 0");
  }
  FiniteHorizonPath path{ZetaGrid(cfg), horizon, {}, {}};
  const ZetaGrid& grid = path.grid;
  const double s = grid.step();
  const Index d = model.space().size();
  const auto blocks = static_cast<std::size_t>(horizon + 1);

  auto axpy = [](const std::vector<Vector>& base, double a,
                 const std::vector<Vector>& dir) {
    std::vector<Vector> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + a * dir[i];
    return out;
  };

  std::vector<Vector> w(blocks, Vector::Zero(d));
  std::size_t next_cp = 0;
  for (Index k = 0;; ++k) {
    const double zeta = grid.zeta(k);
    path.trajectory.push_back({zeta, w});
    if (next_cp < grid.checkpoint_steps().size() &&
        grid.checkpoint_steps()[next_cp] == k) {
      FhCheckpoint cp{zeta, grid.requested()[next_cp], w, {}};
      for (Index i = 0; i < horizon; ++i) {
        cp.policies.push_back(optimal_rule(w[i], model).tilted_rule);
      }
      path.checkpoints.push_back(std::move(cp));
      ++next_cp;
    }
    if (k == grid.steps()) break;

    const auto k1 = fh_vector_field(w, model, utility);
    const auto k2 = fh_vector_field(axpy(w, 0.5 * s, k1), model, utility);
    const auto k3 = fh_vector_field(axpy(w, 0.5 * s, k2), model, utility);
    const auto k4 = fh_vector_field(axpy(w, s, k3), model, utility);
    for (std::size_t i = 0; i < blocks; ++i) {
      w[i] += (s / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return path;
}

}  // namespace klmdp
