#include <gtest/gtest.h>

#include <random>

#include "klmdp/state_space.hpp"
#include "test_support.hpp"

namespace klmdp {
namespace {

TEST(ProductStateSpace, FlattenLayoutIsRowMajor) {
  const ProductStateSpace s(3, 2);
  EXPECT_EQ(s.size(), 6);
  EXPECT_EQ(s.flatten(0, 0), 0);
  EXPECT_EQ(s.flatten(2, 1), 5);
  EXPECT_EQ(s.flatten(1, 0), 2);
}

TEST(ProductStateSpace, FlattenUnflattenAreInverse) {
  for (Index du = 1; du <= 5; ++du) {
    for (Index dn = 1; dn <= 4; ++dn) {
      const ProductStateSpace s(du, dn);
      for (Index x = 0; x < s.size(); ++x) {
        const auto [u, n] = s.unflatten(x);
        EXPECT_EQ(s.flatten(u, n), x);
      }
    }
  }
}

TEST(ProductStateSpace, RejectsBadIndices) {
  const ProductStateSpace s(3, 2);
  EXPECT_THROW(s.flatten(3, 0), DomainError);
  EXPECT_THROW(s.flatten(0, 2), DomainError);
  EXPECT_THROW(s.flatten(-1, 0), DomainError);
  EXPECT_THROW(s.unflatten(6), DomainError);
  EXPECT_THROW(ProductStateSpace(0, 2), DomainError);
}

TEST(StochasticMatrix, ValidatesRows) {
  Matrix m(2, 2);
  m << 0.5, 0.5, 0.2, 0.8;
  EXPECT_NO_THROW(StochasticMatrix{m});
  m(1, 1) = 0.9;
  EXPECT_THROW(StochasticMatrix{m}, DomainError);
  m << 1.5, -0.5, 0.2, 0.8;
  EXPECT_THROW(StochasticMatrix{m}, DomainError);
  m << 0.0, 0.0, 1.0, 1.0;
  EXPECT_THROW(StochasticMatrix::normalized(m), DomainError);
}

TEST(ValueFunction, PinsBasepoint) {
  Vector v(3);
  v << 1.0, 4.0, -2.0;
  const ValueFunction h(v, 1);
  EXPECT_EQ(h[1], 0.0);
  EXPECT_DOUBLE_EQ(h[0], -3.0);
  EXPECT_DOUBLE_EQ(h[2], -6.0);
  EXPECT_THROW(ValueFunction(v, 3), DomainError);
}

TEST(InducedTransition, DeterministicFactor) {
  Matrix r(4, 2), q(4, 2);
  r << 1.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  q.setConstant(0.5);
  const FactoredKernel k(ProductStateSpace(2, 2), StochasticMatrix(r),
                         StochasticMatrix(q));
  const Matrix p = induced_transition(k).matrix();
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(p(0, 3), 0.0);
}

TEST(InducedTransition, DegenerateProductIsIdentity) {
  const FactoredKernel k(ProductStateSpace(1, 1),
                         StochasticMatrix(Matrix::Ones(1, 1)),
                         StochasticMatrix(Matrix::Ones(1, 1)));
  EXPECT_EQ(induced_transition(k).matrix(), Matrix::Ones(1, 1));
}

TEST(InducedTransition, OuterProductRow) {
  Matrix r(4, 2), q(4, 2);
  r.rowwise() = Eigen::RowVector2d(0.3, 0.7);
  q.rowwise() = Eigen::RowVector2d(0.4, 0.6);
  const FactoredKernel k(ProductStateSpace(2, 2), StochasticMatrix(r),
                         StochasticMatrix(q));
  const Matrix p = induced_transition(k).matrix();
  EXPECT_NEAR(p(0, 0), 0.12, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.18, 1e-15);
  EXPECT_NEAR(p(0, 2), 0.28, 1e-15);
  EXPECT_NEAR(p(0, 3), 0.42, 1e-15);
}

TEST(InducedTransition, RandomKernelsMarginalizeToTheirFactors) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const Index du = 1 + static_cast<Index>(rng() % 5);
    const Index dn = 1 + static_cast<Index>(rng() % 4);
    const FactoredKernel k = testing::random_model(rng, du, dn);
    const Matrix p = induced_transition(k).matrix();
    const ProductStateSpace& s = k.space();
    for (Index x = 0; x < s.size(); ++x) {
      EXPECT_NEAR(p.row(x).sum(), 1.0, 1e-12);
      for (Index u = 0; u < du; ++u) {
        double m = 0.0;
        for (Index n = 0; n < dn; ++n) m += p(x, s.flatten(u, n));
        EXPECT_NEAR(m, k.rule()(x, u), 1e-14);
      }
      for (Index n = 0; n < dn; ++n) {
        double m = 0.0;
        for (Index u = 0; u < du; ++u) m += p(x, s.flatten(u, n));
        EXPECT_NEAR(m, k.nature()(x, n), 1e-14);
      }
    }
    const Vector v = testing::random_utility(rng, s.size());
    EXPECT_LT((apply_transition(k, v) - p * v).lpNorm<Eigen::Infinity>(), 1e-13);
  }
}

}  // namespace
}  // namespace klmdp
