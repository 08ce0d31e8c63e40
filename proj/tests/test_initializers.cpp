#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace linflow;
using testutil::Mx;

TEST(GridDims, HalfWidthTwoLayers) {
  EXPECT_EQ(grid_dims(20, 10, 2).dims(), (std::vector<Index>{20, 10, 20}));
}

TEST(GridDims, EqualWidths) {
  EXPECT_EQ(grid_dims(7, 7, 4).dims(), (std::vector<Index>{7, 7, 7, 7, 7}));
}

TEST(GridDims, FiveLayerRamp) {
  // 2 + 18 (j-1)/4 = 2, 6.5, 11, 15.5, 20; halves round away from zero
  EXPECT_EQ(grid_dims(20, 2, 5).dims(), (std::vector<Index>{20, 2, 7, 11, 16, 20}));
}

TEST(GridDims, Errors) {
  EXPECT_THROW(grid_dims(4, 5, 2), ParameterError);
  EXPECT_THROW(grid_dims(4, 0, 2), ParameterError);
  EXPECT_THROW(grid_dims(4, 2, 1), ParameterError);
}

TEST(BalancedFromProduct, ScalarCubeRoot) {
  const auto w = balanced_from_product(Mx(Mx::Constant(1, 1, 8.0)), NetworkShape({1, 1, 1, 1}));
  for (Index j = 0; j < 3; ++j) EXPECT_NEAR(w[j](0, 0), 2.0, 1e-14);
}

TEST(BalancedFromProduct, ZeroTarget) {
  const auto w = balanced_from_product(Mx(Mx::Zero(3, 2)), NetworkShape({2, 4, 3}));
  EXPECT_EQ(w.norm(), 0.0);
}

TEST(BalancedFromProduct, RoundTripRandom) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Mx W0 = testutil::random_rank(4, 4, 2, rng);
    const auto w = balanced_from_product(W0, NetworkShape({4, 3, 3, 4}));
    EXPECT_LE((product(w).W - W0).norm(), 1e-10 * W0.norm());
    EXPECT_LE(balancedness_residual(w), 1e-10);
  }
  const Mx W1 = testutil::random_rank(5, 3, 3, rng);
  const auto w = balanced_from_product(W1, NetworkShape({3, 4, 6, 3, 5}));
  EXPECT_LE((product(w).W - W1).norm(), 1e-10 * W1.norm());
  EXPECT_LE(balancedness_residual(w), 1e-10);
}

TEST(BalancedFromProduct, Infeasible) {
  std::mt19937_64 rng(22);
  const Mx W0 = testutil::random_rank(4, 4, 3, rng);
  EXPECT_THROW(balanced_from_product(W0, NetworkShape({4, 2, 4})), InfeasibleError);
  EXPECT_THROW(balanced_from_product(W0, NetworkShape({3, 3, 4})), ShapeError);
}

TEST(OrthogonalBalanced, BalancedWithUnitSingularValues) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const NetworkShape s({6, 2, 4, 5, 6});
    const auto w = orthogonal_balanced<double>(s, rng);
    EXPECT_LE(balancedness_residual(w), 1e-12);
    const auto f = full_svd(product(w).W);
    EXPECT_EQ(f.rank, 2);
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(f.sigma(i), 1.0, 1e-12);
    for (Index j = 0; j < s.layers(); ++j) {
      const auto fj = full_svd(w[j]);
      EXPECT_EQ(fj.rank, 2);
      for (Index i = 0; i < 2; ++i) EXPECT_NEAR(fj.sigma(i), 1.0, 1e-12);
    }
  }
}

TEST(OrthogonalBalanced, DeterministicPerSeed) {
  const NetworkShape s({5, 2, 5});
  Rng a(42), b(42), c(43);
  const auto wa = orthogonal_balanced<double>(s, a);
  const auto wb = orthogonal_balanced<double>(s, b);
  const auto wc = orthogonal_balanced<double>(s, c);
  for (Index j = 0; j < 2; ++j) EXPECT_EQ(wa[j], wb[j]);
  EXPECT_GT((wa[1] - wc[1]).norm(), 1e-3);
  EXPECT_THROW(orthogonal_balanced<double>(NetworkShape({5, 3, 2, 5}), a), ParameterError);
}

TEST(HaarOrthogonal, Orthogonal) {
  Rng rng(5);
  const Mx Q = haar_orthogonal<double>(7, rng);
  EXPECT_LE((Q.transpose() * Q - Mx::Identity(7, 7)).norm(), 1e-13);
}

TEST(Gaussian, DeterministicAndUnbalanced) {
  const NetworkShape s({4, 3, 4});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng a(seed), b(seed);
    const auto wa = gaussian<double>(s, a);
    const auto wb = gaussian<double>(s, b);
    EXPECT_EQ(wa[0], wb[0]);
    EXPECT_EQ(wa[1], wb[1]);
    EXPECT_GT(balancedness_residual(wa), 1e-6);
  }
}

TEST(Gaussian, EntryVariance) {
  const NetworkShape s({100, 100, 25});
  Rng rng(9);
  const auto w = gaussian<double>(s, rng);  // fan-in rule: 1/sqrt(100) and 1/sqrt(100)
  const double v0 = w[0].squaredNorm() / double(w[0].size());
  EXPECT_NEAR(v0, 0.01, 0.002);
  Rng rng2(9);
  const auto wf = gaussian<double>(s, rng2, StdRule::InvSqrtFanOut);
  EXPECT_NEAR(wf[1].squaredNorm() / double(wf[1].size()), 1.0 / 25, 0.2 / 25);
  Rng rng3(9);
  const auto wx = gaussian<double>(s, rng3, StdRule::Fixed, 0.5);
  EXPECT_NEAR(wx[0].squaredNorm() / double(wx[0].size()), 0.25, 0.05);
}

TEST(Pathological, StartOnTopEigenvectors) {
  Mx X(3, 3);
  X << 3, 0, 0, 0, 1, 0, 0, 0, 2;
  const auto w = pathological_autoencoder(X, 1);
  const Mx W = product(w).W;
  Mx expect = Mx::Zero(3, 3);
  expect(0, 0) = -1;
  EXPECT_LE((W - expect).norm(), 1e-14);
  EXPECT_EQ(balancedness_residual(w), 0.0);
}

TEST(Pathological, NegativeDiagonalOnTopR) {
  std::mt19937_64 rng(31);
  const Mx X = testutil::uniform(5, 15, rng);
  const auto w = pathological_autoencoder(X, 3);
  const Mx W = product(w).W;
  const auto eig = symmetric_eigen_desc(Mx(X * X.transpose()));
  for (Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(eig.vectors.col(i).dot(W * eig.vectors.col(i)), -1.0, 1e-12);
  }
  EXPECT_LE(balancedness_residual(w), 1e-12);
  EXPECT_THROW(pathological_autoencoder(X, 6), ParameterError);
}

TEST(MakeInitial, Dispatch) {
  InitSpec<double> spec;
  spec.kind = InitKind::OrthogonalBalanced;
  spec.seed = 4;
  const NetworkShape s({4, 2, 4});
  Rng rng(4);
  const auto direct = orthogonal_balanced<double>(s, rng);
  const auto via = make_initial(spec, s);
  EXPECT_EQ(direct[0], via[0]);
  spec.kind = InitKind::BalancedFromProduct;
  spec.target = Mx::Identity(4, 4).leftCols(4).topRows(4) * 0.0;
  EXPECT_EQ(make_initial(spec, s).norm(), 0.0);
  spec.kind = InitKind::PathologicalAutoencoder;
  EXPECT_THROW(make_initial(spec, NetworkShape({4, 2, 2, 4}), Mx(Mx::Identity(4, 4))), ParameterError);
}
