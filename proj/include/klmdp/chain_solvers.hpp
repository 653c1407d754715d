#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "klmdp/state_space.hpp"

namespace klmdp {

/// Class structure of the support graph {(x, x') : P(x, x') > 0}.
struct ChainStructure {
  /// Number of closed communicating classes.
  Index recurrent_class_count = 0;
  /// Membership in the recurrent class (only meaningful when unichain).
  std::vector<bool> recurrent;
  /// Period of the first closed class found.
  Index period = 0;

  bool unichain() const { return recurrent_class_count == 1; }
  bool aperiodic() const { return period == 1; }
  bool irreducible() const {
    return unichain() &&
           std::all_of(recurrent.begin(), recurrent.end(),
                       [](bool r) { return r; });
  }
};

/// Tarjan SCC over the support graph, then the period of the closed class by
/// BFS levels: gcd over in-class edges (u, v) of level(u) + 1 - level(v).
inline ChainStructure analyze_chain(const Matrix& p) {
  const Index d = p.rows();
  if (p.cols() != d) throw DomainError("analyze_chain: matrix is not square");

  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(d));
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      if (p(i, j) > 0.0) adj[i].push_back(j);

  // Iterative Tarjan.
  std::vector<Index> index(d, -1), low(d, 0), comp(d, -1), stack;
  std::vector<bool> on_stack(d, false);
  Index next_index = 0, comp_count = 0;
  struct Frame {
    Index v;
    std::size_t edge;
  };
  for (Index root = 0; root < d; ++root) {
    if (index[root] >= 0) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.edge < adj[f.v].size()) {
        const Index w = adj[f.v][f.edge++];
        if (index[w] < 0) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const Index v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        Index w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = comp_count;
        } while (w != v);
        ++comp_count;
      }
    }
  }

  std::vector<bool> closed(comp_count, true);
  for (Index i = 0; i < d; ++i)
    for (Index j : adj[i])
      if (comp[i] != comp[j]) closed[comp[i]] = false;

  ChainStructure out;
  out.recurrent.assign(d, false);
  Index first_closed = -1;
  for (Index c = 0; c < comp_count; ++c) {
    if (!closed[c]) continue;
    ++out.recurrent_class_count;
    if (first_closed < 0) first_closed = c;
  }
  if (first_closed < 0) return out;
  for (Index i = 0; i < d; ++i) out.recurrent[i] = comp[i] == first_closed;

  Index start = 0;
  while (comp[start] != first_closed) ++start;
  std::vector<Index> level(d, -1);
  std::vector<Index> queue{start};
  level[start] = 0;
  Index g = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Index u = queue[head];
    for (Index v : adj[u]) {
      if (comp[v] != first_closed) continue;
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      } else {
        g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
      }
    }
  }
  out.period = g == 0 ? 1 : g;
  return out;
}

/// Throws ChainStructureError unless P has one recurrent class and it is
/// aperiodic.
inline ChainStructure require_unichain_aperiodic(const Matrix& p) {
  ChainStructure s = analyze_chain(p);
  if (!s.unichain()) {
    throw ChainStructureError("not unichain: " +
                              std::to_string(s.recurrent_class_count) +
                              " recurrent classes");
  }
  if (!s.aperiodic()) {
    throw ChainStructureError("not aperiodic: recurrent class has period " +
                              std::to_string(s.period));
  }
  return s;
}

/// Unique invariant pmf of a unichain aperiodic P. Solves pi (I - P) = 0 with
/// the last balance equation replaced by sum(pi) = 1.
inline Vector invariant_pmf(const StochasticMatrix& p) {
  const Matrix& m = p.matrix();
  if (m.rows() != m.cols()) throw DomainError("invariant_pmf: not square");
  require_unichain_aperiodic(m);
  const Index d = m.rows();
  Matrix a = Matrix::Identity(d, d) - m.transpose();
  a.row(d - 1).setOnes();
  Vector b = Vector::Zero(d);
  b(d - 1) = 1.0;
  Eigen::PartialPivLU<Matrix> lu(a);
  Vector pi = lu.solve(b);
  // Transient states carry round-off of either sign.
  for (Index i = 0; i < d; ++i)
    if (pi(i) < 0.0) pi(i) = 0.0;
  pi /= pi.sum();
  const double residual = (pi.transpose() * m - pi.transpose()).lpNorm<1>();
  if (!(residual <= 1e-9)) {
    throw ConvergenceError("invariant_pmf: residual " +
                           std::to_string(residual) + " exceeds 1e-9");
  }
  return pi;
}

namespace detail {

inline Matrix fundamental_system(const Matrix& p, const Vector& pi) {
  const Index d = p.rows();
  return Matrix::Identity(d, d) - p + Vector::Ones(d) * pi.transpose();
}

inline Eigen::PartialPivLU<Matrix> factor_fundamental(const Matrix& p,
                                                      const Vector& pi) {
  Eigen::PartialPivLU<Matrix> lu(fundamental_system(p, pi));
  const double rc = lu.rcond();
  if (!(rc > 1e-14)) {
    throw SingularSystemError(
        "fundamental matrix: I - P + 1 pi is not invertible (rcond " +
        std::to_string(rc) + ")");
  }
  return lu;
}

}  // namespace detail

/// Z = [I - P + 1 (x) pi]^{-1}.
inline Matrix fundamental_matrix(const StochasticMatrix& p, const Vector& pi) {
  if (p.rows() != p.cols() || pi.size() != p.rows()) {
    throw DomainError("fundamental_matrix: shape mismatch");
  }
  return detail::factor_fundamental(p.matrix(), pi).inverse();
}

struct ChainAnalysis {
  Vector pi;
  /// Solution of P H = H - U + pi(U), pinned at the basepoint.
  ValueFunction poisson_solution;
  double mean_reward;
  /// sup-norm of P H - H + U - pi(U).
  double poisson_residual;
};

/// Basepoint-normalized solution of Poisson's equation. The basepoint must be
/// recurrent for P.
inline ChainAnalysis poisson_solve(const StochasticMatrix& p,
                                   const Vector& utility, Index basepoint) {
  const Matrix& m = p.matrix();
  const Index d = m.rows();
  if (m.cols() != d || utility.size() != d) {
    throw DomainError("poisson_solve: shape mismatch");
  }
  if (basepoint < 0 || basepoint >= d) {
    throw DomainError("poisson_solve: basepoint outside the state space");
  }
  const ChainStructure s = analyze_chain(m);
  if (s.unichain() && !s.recurrent[basepoint]) {
    throw ChainStructureError("poisson_solve: basepoint " +
                              std::to_string(basepoint) +
                              " is transient; it must lie in the recurrent class");
  }
  Vector pi = invariant_pmf(p);
  const double mean = pi.dot(utility);
  Vector y = detail::factor_fundamental(m, pi).solve(utility);
  y.array() -= y(basepoint);
  ValueFunction h(std::move(y), basepoint);
  const double residual =
      (m * h.values() - h.values() + utility - Vector::Constant(d, mean))
          .lpNorm<Eigen::Infinity>();
  return ChainAnalysis{std::move(pi), std::move(h), mean, residual};
}

struct PowerIterationOptions {
  Index max_iterations = 100000;
  /// Bound on (max - min) / min of the Collatz-Wielandt ratios (Wv)(x)/v(x).
  double relative_tolerance = 1e-12;
};

struct PerronFrobeniusPair {
  double lambda;
  /// log(lambda), exact even when lambda itself would overflow.
  double log_lambda;
  /// Positive eigenvector with v(basepoint) = 1.
  Vector v;
  Index iterations;
};

struct PerronFrobeniusResult {
  PerronFrobeniusPair pair;
  StochasticMatrix twisted;
};

/// Unconstrained baseline: the PF pair of W(x, x') = exp(zeta U(x)) P0(x, x')
/// and the twisted kernel (1/lambda) (v(x')/v(x)) W(x, x').
inline PerronFrobeniusResult perron_frobenius_baseline(
    const StochasticMatrix& p0, const Vector& utility, double zeta,
    Index basepoint, const PowerIterationOptions& opts = {}) {
  const Matrix& m = p0.matrix();
  const Index d = m.rows();
  if (m.cols() != d || utility.size() != d) {
    throw DomainError("perron_frobenius_baseline: shape mismatch");
  }
  if (basepoint < 0 || basepoint >= d) {
    throw DomainError("perron_frobenius_baseline: basepoint out of range");
  }
  const ChainStructure s = analyze_chain(m);
  if (!s.irreducible() || !s.aperiodic()) {
    throw ChainStructureError(
        "perron_frobenius_baseline: P0 must be irreducible and aperiodic");
  }

  // Rescale by exp(-zeta max U) so every row weight is in (0, 1].
  const double shift = zeta * utility.maxCoeff();
  const Vector weight = (zeta * utility.array() - shift).exp().matrix();
  const Matrix w = weight.asDiagonal() * m;

  Vector v = Vector::Ones(d);
  double lo = 0.0, hi = 0.0;
  Index it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Vector wv = w * v;
    const Eigen::ArrayXd ratio = wv.array() / v.array();
    lo = ratio.minCoeff();
    hi = ratio.maxCoeff();
    v = wv / wv.maxCoeff();
    if (hi - lo <= opts.relative_tolerance * lo) break;
  }
  if (it == opts.max_iterations) {
    throw ConvergenceError("perron_frobenius_baseline: power iteration did not converge in " +
                           std::to_string(opts.max_iterations) + " iterations");
  }
  const double lambda_scaled = 0.5 * (lo + hi);
  v /= v(basepoint);

  Matrix twisted = (w * v.asDiagonal()).array().colwise() /
                   (lambda_scaled * v.array());
  const double log_lambda = std::log(lambda_scaled) + shift;
  PerronFrobeniusPair pair{std::exp(log_lambda), log_lambda, std::move(v), it + 1};
  return PerronFrobeniusResult{std::move(pair),
                               StochasticMatrix::normalized(std::move(twisted))};
}

}  // namespace klmdp
