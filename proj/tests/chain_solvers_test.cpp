#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "klmdp/chain_solvers.hpp"
#include "klmdp/uav_benchmark.hpp"
#include "test_support.hpp"

namespace klmdp {
namespace {

Matrix two_state(double a, double b) {
  Matrix p(2, 2);
  p << 1 - a, a, b, 1 - b;
  return p;
}

TEST(AnalyzeChain, ClassifiesStructure) {
  Matrix two_classes = Matrix::Identity(3, 3);
  two_classes.row(2) << 0.5, 0.5, 0.0;
  const ChainStructure s = analyze_chain(two_classes);
  EXPECT_EQ(s.recurrent_class_count, 2);

  Matrix flip(2, 2);
  flip << 0, 1, 1, 0;
  EXPECT_EQ(analyze_chain(flip).period, 2);

  Matrix cycle3 = Matrix::Zero(3, 3);
  cycle3(0, 1) = cycle3(1, 2) = cycle3(2, 0) = 1.0;
  EXPECT_EQ(analyze_chain(cycle3).period, 3);

  // Transient state 0 feeding an aperiodic class {1, 2}.
  Matrix absorbing(3, 3);
  absorbing << 0.5, 0.5, 0.0, 0.0, 0.3, 0.7, 0.0, 0.6, 0.4;
  const ChainStructure a = analyze_chain(absorbing);
  EXPECT_TRUE(a.unichain());
  EXPECT_TRUE(a.aperiodic());
  EXPECT_FALSE(a.irreducible());
  EXPECT_FALSE(a.recurrent[0]);
  EXPECT_TRUE(a.recurrent[1]);
}

TEST(InvariantPmf, Examples) {
  EXPECT_NEAR(invariant_pmf(StochasticMatrix(Matrix::Ones(1, 1)))(0), 1.0, 1e-15);

  const StochasticMatrix q = uav::build_wind_chain(5, 0.05);
  const Vector pi = invariant_pmf(q);
  EXPECT_LT((pi.array() - 0.2).abs().maxCoeff(), 1e-14);

  const Vector p2 = invariant_pmf(StochasticMatrix(two_state(0.3, 0.1)));
  EXPECT_NEAR(p2(0), 0.25, 1e-15);
  EXPECT_NEAR(p2(1), 0.75, 1e-15);
}

TEST(InvariantPmf, StructureErrors) {
  Matrix two_classes = Matrix::Identity(2, 2);
  EXPECT_THROW(invariant_pmf(StochasticMatrix(two_classes)), ChainStructureError);
  Matrix flip(2, 2);
  flip << 0, 1, 1, 0;
  try {
    invariant_pmf(StochasticMatrix(flip));
    FAIL() << "expected ChainStructureError";
  } catch (const ChainStructureError& e) {
    EXPECT_NE(std::string(e.what()).find("not aperiodic"), std::string::npos);
  }
}

TEST(InvariantPmf, AgreesWithPowerIterationOnRandomChains) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = testing::random_pmf_rows(rng, 8, 8);
    const Vector pi = invariant_pmf(StochasticMatrix(p));
    EXPECT_LT((pi - testing::invariant_by_power(p, 500)).lpNorm<1>(), 1e-12);
  }
}

TEST(FundamentalMatrix, Examples) {
  Vector pi(3);
  pi << 0.2, 0.5, 0.3;
  const Matrix iid = Vector::Ones(3) * pi.transpose();
  EXPECT_LT((fundamental_matrix(StochasticMatrix(iid), pi) - Matrix::Identity(3, 3))
                .cwiseAbs().maxCoeff(), 1e-15);

  EXPECT_NEAR(fundamental_matrix(StochasticMatrix(Matrix::Ones(1, 1)), Vector::Ones(1))(0, 0),
              1.0, 1e-15);

  const Matrix half = Matrix::Constant(2, 2, 0.5);
  const Vector u = Vector::Constant(2, 0.5);
  EXPECT_LT((fundamental_matrix(StochasticMatrix(half), u) - Matrix::Identity(2, 2))
                .cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FundamentalMatrix, SingularSystemIsReported) {
  // With two recurrent classes I - P + 1 pi is singular for any pi.
  const StochasticMatrix p(Matrix::Identity(2, 2));
  Vector pi(2);
  pi << 1.0, 0.0;
  EXPECT_THROW(fundamental_matrix(p, pi), SingularSystemError);
}

TEST(FundamentalMatrix, MatchesPowerSeriesOnRandomChains) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix p = testing::random_pmf_rows(rng, 10, 10);
    const Vector pi = invariant_pmf(StochasticMatrix(p));
    const Matrix z = fundamental_matrix(StochasticMatrix(p), pi);
    EXPECT_LT((z * Vector::Ones(10) - Vector::Ones(10)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((pi.transpose() * z - pi.transpose()).cwiseAbs().maxCoeff(), 1e-9);

    const Matrix centered = p - Vector::Ones(10) * pi.transpose();
    Matrix series = Matrix::Identity(10, 10);
    Matrix term = Matrix::Identity(10, 10);
    for (int n = 1; n < 400; ++n) {
      term = term * centered;
      series += term;
      if (term.cwiseAbs().maxCoeff() < 1e-16) break;
    }
    EXPECT_LT((z - series).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(PoissonSolve, ConstantAndZeroUtility) {
  const StochasticMatrix p(two_state(0.3, 0.1));
  const ChainAnalysis c = poisson_solve(p, Vector::Constant(2, 3.0), 0);
  EXPECT_LT(c.poisson_solution.values().cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(c.mean_reward, 3.0, 1e-14);
  const ChainAnalysis z = poisson_solve(p, Vector::Zero(2), 1);
  EXPECT_EQ(z.poisson_solution.values(), Vector::Zero(2));
  EXPECT_EQ(z.mean_reward, 0.0);
}

TEST(PoissonSolve, TwoStateHandSolution) {
  const Matrix p = two_state(0.3, 0.1);
  Vector u(2);
  u << 1.0, 0.0;
  const ChainAnalysis c = poisson_solve(StochasticMatrix(p), u, 1);
  EXPECT_NEAR(c.mean_reward, 0.25, 1e-15);
  // 0.3 H(0) = 1 - 0.25 with H(1) = 0.
  EXPECT_NEAR(c.poisson_solution[0], 2.5, 1e-14);
  EXPECT_EQ(c.poisson_solution[1], 0.0);
  const Vector series = testing::poisson_by_series(p, c.pi, u, 1, 2000);
  EXPECT_LT((series - c.poisson_solution.values()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(c.poisson_residual, 1e-14);
}

TEST(PoissonSolve, RandomChainsSatisfyPoissonEquation) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 2 + static_cast<Index>(rng() % 12);
    const Matrix p = testing::random_pmf_rows(rng, d, d);
    const Vector u = testing::random_utility(rng, d);
    const Index base = static_cast<Index>(rng() % d);
    const ChainAnalysis c = poisson_solve(StochasticMatrix(p), u, base);
    EXPECT_LE(c.poisson_residual, 1e-8);
    EXPECT_EQ(c.poisson_solution[base], 0.0);
    EXPECT_LT((testing::poisson_by_series(p, c.pi, u, base, 400) -
               c.poisson_solution.values()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PoissonSolve, UnichainWithTransientStates) {
  Matrix p(3, 3);
  p << 0.5, 0.5, 0.0, 0.0, 0.3, 0.7, 0.0, 0.6, 0.4;
  Vector u(3);
  u << -1.0, 0.0, 0.5;
  const ChainAnalysis c = poisson_solve(StochasticMatrix(p), u, 1);
  EXPECT_EQ(c.pi(0), 0.0);
  EXPECT_LE(c.poisson_residual, 1e-12);
  EXPECT_THROW(poisson_solve(StochasticMatrix(p), u, 0), ChainStructureError);
}

TEST(PerronFrobenius, ZeroZetaAndConstantUtility) {
  std::mt19937_64 rng(31);
  const Matrix p0 = testing::random_pmf_rows(rng, 6, 6);
  const PerronFrobeniusResult r0 =
      perron_frobenius_baseline(StochasticMatrix(p0), testing::random_utility(rng, 6), 0.0, 0);
  EXPECT_NEAR(r0.pair.lambda, 1.0, 1e-14);
  EXPECT_LT((r0.pair.v.array() - 1.0).abs().maxCoeff(), 1e-14);
  EXPECT_LT((r0.twisted.matrix() - p0).cwiseAbs().maxCoeff(), 1e-14);

  const PerronFrobeniusResult rc =
      perron_frobenius_baseline(StochasticMatrix(p0), Vector::Constant(6, -0.7), 1.3, 2);
  EXPECT_NEAR(rc.pair.lambda, std::exp(-0.7 * 1.3), 1e-14);
  EXPECT_LT((rc.twisted.matrix() - p0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PerronFrobenius, TwoStateClosedForm) {
  const double e = std::numbers::e;
  Vector u(2);
  u << 0.0, 1.0;
  const PerronFrobeniusResult r =
      perron_frobenius_baseline(StochasticMatrix(Matrix::Constant(2, 2, 0.5)), u, 1.0, 0);
  EXPECT_NEAR(r.pair.lambda, (1 + e) / 2, 1e-14);
  EXPECT_NEAR(r.pair.log_lambda, std::log((1 + e) / 2), 1e-14);
  for (Index x = 0; x < 2; ++x) {
    EXPECT_NEAR(r.twisted(x, 0), 1 / (1 + e), 1e-14);
    EXPECT_NEAR(r.twisted(x, 1), e / (1 + e), 1e-14);
  }
}

TEST(PerronFrobenius, RandomEigenpairResidual) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const Index d = 3 + static_cast<Index>(rng() % 10);
    const Matrix p0 = testing::random_pmf_rows(rng, d, d);
    const Vector u = testing::random_utility(rng, d, -3, 3);
    const PerronFrobeniusResult r = perron_frobenius_baseline(StochasticMatrix(p0), u, 2.0, 0);
    const Matrix w = (2.0 * u).array().exp().matrix().asDiagonal() * p0;
    const Vector resid = w * r.pair.v - r.pair.lambda * r.pair.v;
    EXPECT_LT(resid.cwiseAbs().maxCoeff() / (r.pair.lambda * r.pair.v.maxCoeff()), 1e-10);
    EXPECT_EQ(r.pair.v(0), 1.0);
    EXPECT_GT(r.pair.v.minCoeff(), 0.0);
    EXPECT_LT((r.twisted.matrix().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  }
}

TEST(PerronFrobenius, Errors) {
  Matrix flip(2, 2);
  flip << 0, 1, 1, 0;
  EXPECT_THROW(perron_frobenius_baseline(StochasticMatrix(flip), Vector::Zero(2), 1.0, 0),
               ChainStructureError);
  std::mt19937_64 rng(41);
  const Matrix p0 = testing::random_pmf_rows(rng, 5, 5);
  PowerIterationOptions opts;
  opts.max_iterations = 1;
  EXPECT_THROW(perron_frobenius_baseline(StochasticMatrix(p0), testing::random_utility(rng, 5),
                                         1.0, 0, opts),
               ConvergenceError);
}

}  // namespace
}  // namespace klmdp
