#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace linflow;
using testutil::Mx;

TEST(PrincipalRoot, IdentityAnyPower) {
  for (int p : {1, 2, 3, 7}) {
    EXPECT_LE((principal_root(Mx(Mx::Identity(4, 4)), p) - Mx::Identity(4, 4)).norm(), 1e-14);
  }
}

TEST(PrincipalRoot, CubeRootOfEight) {
  Mx A = 8 * Mx::Identity(3, 3);
  EXPECT_LE((principal_root(A, 3) - 2 * Mx::Identity(3, 3)).norm(), 1e-13);
}

TEST(PrincipalRoot, FifthPowerReconstructs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Mx B = testutil::uniform(5, 5, rng);
    const Mx A = B * B.transpose();
    const Mx R = principal_root(A, 5);
    Mx R5 = R * R * R * R * R;
    EXPECT_LE((R5 - A).norm(), 1e-8 * A.norm());
    EXPECT_LE((R - R.transpose()).norm(), 1e-12);
    EXPECT_GE(symmetric_eigen_desc(R).values.minCoeff(), -1e-12);
  }
}

TEST(PrincipalRoot, ClampsRoundingNegatives) {
  Mx A = Mx::Zero(2, 2);
  A(0, 0) = 1;
  A(1, 1) = -1e-14;
  const Mx R = principal_root(A, 2);
  EXPECT_NEAR(R(0, 0), 1.0, 1e-15);
  EXPECT_EQ(R(1, 1), 0.0);
}

TEST(PrincipalRoot, RejectsAsymmetric) {
  Mx A(2, 2);
  A << 1, 1, 0, 1;
  EXPECT_THROW(principal_root(A, 2), PreconditionError);
  EXPECT_THROW(principal_root(Mx(Mx::Identity(2, 2)), 0), ParameterError);
}

TEST(Svd, CanonicalAndReconstructs) {
  std::mt19937_64 rng(11);
  const Mx W = testutil::random_rank(5, 4, 2, rng);
  const auto f = full_svd(W);
  EXPECT_EQ(f.rank, 2);
  EXPECT_EQ(f.sigma(2), 0.0);
  EXPECT_LE((f.U.transpose() * f.U - Mx::Identity(5, 5)).norm(), 1e-12);
  EXPECT_LE((f.V.transpose() * f.V - Mx::Identity(4, 4)).norm(), 1e-12);
  const auto r = f.reduced();
  EXPECT_LE((r.reconstruct() - W).norm(), 1e-12 * W.norm());
  for (Index i = 0; i < r.rank(); ++i) {
    Index first = 0;
    while (std::abs(r.U(first, i)) <= 1e-12) ++first;
    EXPECT_GT(r.U(first, i), 0);
  }
  // -W flips V only under the convention
  const auto g = reduced_svd(Mx(-W));
  EXPECT_LE((g.U - r.U).norm(), 1e-10);
  EXPECT_LE((g.V + r.V).norm(), 1e-10);
}

TEST(Svd, NumericalRankThreshold) {
  Vec<double> s(3);
  s << 2.0, 1.5e-9, 0.5e-9;
  EXPECT_EQ(numerical_rank(s), 1);  // cutoff 2e-9
  s << 0.5, 2e-9, 0.5e-9;
  EXPECT_EQ(numerical_rank(s), 2);  // cutoff 1e-9 (max(sigma_max, 1) = 1)
  EXPECT_EQ(numerical_rank(Vec<double>()), 0);
}

// Integrals of polynomials up to degree 2n-1 are exact.
TEST(GaussLegendre, ExactForPolynomials) {
  for (Index n : {8, 16, 64}) {
    const auto rule = gauss_legendre<double>(n);
    EXPECT_NEAR(rule.weights.sum(), 2.0, 1e-13);
    for (int p = 0; p < 2 * n && p < 30; ++p) {
      double q = 0;
      for (Index i = 0; i < n; ++i) q += rule.weights(i) * std::pow(rule.nodes(i), p);
      const double exact = p % 2 == 1 ? 0.0 : 2.0 / (p + 1);
      EXPECT_NEAR(q, exact, 1e-13) << "n=" << n << " p=" << p;
    }
  }
}

TEST(GaussLegendre, Transcendental) {
  const auto rule = gauss_legendre<double>(20);
  double q = 0;
  for (Index i = 0; i < 20; ++i) q += rule.weights(i) * std::exp(rule.nodes(i));
  EXPECT_NEAR(q, std::exp(1.0) - std::exp(-1.0), 1e-14);
}

TEST(Combinatorics, BinomialAndSubsets) {
  EXPECT_EQ(binomial(5, 2), 10.0);
  EXPECT_EQ(binomial(40, 20), 137846528820.0);
  EXPECT_EQ(binomial(3, 4), 0.0);
  const auto s = k_subsets(4, 2);
  ASSERT_EQ(s.size(), 6u);
  EXPECT_EQ(s.front(), (std::vector<Index>{0, 1}));
  EXPECT_EQ(s[1], (std::vector<Index>{0, 2}));
  EXPECT_EQ(s.back(), (std::vector<Index>{2, 3}));
  EXPECT_EQ(k_subsets(3, 0).size(), 1u);
  EXPECT_TRUE(k_subsets(2, 3).empty());
  for (Index n = 0; n <= 7; ++n)
    for (Index k = 0; k <= n; ++k) EXPECT_EQ(double(k_subsets(n, k).size()), binomial(n, k));
}
