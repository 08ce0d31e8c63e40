#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace linflow;
using testutil::Mx;

TEST(ComputeQ, IdentityInputGivesY) {
  std::mt19937_64 rng(1);
  const Mx Y = testutil::uniform(3, 4, rng);
  const auto qd = compute_Q(DataSet<double>(Mx::Identity(4, 4), Y));
  EXPECT_LE((qd.Q - Y).norm(), 1e-13);
  EXPECT_LE((qd.svd.reconstruct() - qd.Q).norm(), 1e-10);
}

TEST(ComputeQ, AutoencoderIsGramRoot) {
  std::mt19937_64 rng(2);
  const Mx X = testutil::uniform(4, 12, rng);
  const auto data = DataSet<double>::autoencoder(X);
  const auto qd = compute_Q(data);
  EXPECT_LE((qd.Q - data.gram_sqrt()).norm(), 1e-10 * qd.Q.norm());
  const auto eig = symmetric_eigen_desc(data.gram());
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(qd.svd.sigma(i), std::sqrt(eig.values(i)), 1e-10);
}

// Q Q^T = Y X^T (X X^T)^{-1} X Y^T needs only a linear solve, and Q^T Q can be
// rebuilt from an inverse square root computed separately.
TEST(ComputeQ, TwoPathOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = testutil::random_data(4, 3, rng);
    const auto qd = compute_Q(data);
    const Mx G = data.gram();
    const Mx QQt = data.yxt() * G.ldlt().solve(Mx(data.yxt().transpose()));
    EXPECT_LE((qd.Q * qd.Q.transpose() - QQt).norm(), 1e-10 * (1 + QQt.norm()));
    const Mx Gm = psd_power(G, -0.5);
    const Mx QtQ = Gm * data.yxt().transpose() * data.yxt() * Gm;
    EXPECT_LE((qd.Q.transpose() * qd.Q - QtQ).norm(), 1e-10 * (1 + QtQ.norm()));
  }
}

TEST(Enumerate, Diag41Fixture) {
  const auto data = testutil::diag41();
  const auto pts = enumerate_critical_points(data, 1);
  ASSERT_EQ(pts.size(), 2u);
  Mx e11 = Mx::Zero(2, 2), e22 = Mx::Zero(2, 2);
  e11(0, 0) = 1;
  e22(1, 1) = 1;
  EXPECT_LE((pts[0].W - e11).norm(), 1e-12);
  EXPECT_LE((pts[1].W - e22).norm(), 1e-12);
  EXPECT_NEAR(pts[0].loss, 0.5, 1e-10);
  EXPECT_NEAR(pts[1].loss, 2.0, 1e-10);
  EXPECT_NEAR(loss_L1(pts[0].W, data), 0.5, 1e-10);
  EXPECT_NEAR(loss_L1(pts[1].W, data), 2.0, 1e-10);
  EXPECT_EQ(pts[0].kind, CriticalKind::GlobalMinOnMk);
  EXPECT_EQ(pts[1].kind, CriticalKind::StrictSaddle);
  ASSERT_TRUE(pts[1].certificate);
  EXPECT_NEAR(pts[1].certificate->second_derivative, -2.0, 1e-12);
  EXPECT_NEAR(saddle_curve_check(*pts[1].certificate, data), -2.0, 1e-4);
  EXPECT_FALSE(pts[0].certificate);
}

TEST(Enumerate, ZeroAndOverflowAndTooLarge) {
  const auto data = testutil::diag41();
  const auto zero = enumerate_critical_points(data, 0);
  ASSERT_EQ(zero.size(), 1u);
  EXPECT_EQ(zero[0].kind, CriticalKind::Zero);
  EXPECT_EQ(zero[0].W.norm(), 0.0);
  EXPECT_THROW(enumerate_critical_points(data, 3), ParameterError);

  // rank-one Y: q = 1 so k = 2 has no critical points
  Mx X = Mx::Identity(2, 2);
  Mx Y = Mx::Zero(2, 2);
  Y(0, 0) = 1;
  EXPECT_TRUE(enumerate_critical_points(DataSet<double>(X, Y), 2).empty());

  QDecomposition<double> big;
  big.Q = Mx::Zero(40, 40);
  big.q = 40;
  EXPECT_THROW(enumerate_critical_points(big, 20), SizeError);
}

TEST(Enumerate, CriticalityLossAndMinimality) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = testutil::random_data(4, 3, rng);
    const auto qd = compute_Q(data);
    for (Index k = 0; k <= 3; ++k) {
      const auto pts = enumerate_critical_points(qd, k);
      EXPECT_EQ(double(pts.size()), binomial(qd.q, k));
      double best = 1e300;
      const CriticalPoint<double>* arg = nullptr;
      for (const auto& cp : pts) {
        EXPECT_NEAR(cp.loss, loss_L1(cp.W, data), 1e-10 * (1 + cp.loss));
        if (k > 0) {
          EXPECT_LE(tangent_project(cp.W, grad_L1(cp.W, data)).norm(), 1e-10 * (1 + data.gram().norm()));
          for (int N : {2, 3}) EXPECT_LE(riemannian_gradient(cp.W, data, N).norm(), 1e-10 * (1 + data.gram().norm()));
        }
        if (cp.loss < best) {
          best = cp.loss;
          arg = &cp;
        }
      }
      ASSERT_NE(arg, nullptr);
      std::vector<Index> top(static_cast<std::size_t>(k));
      for (Index i = 0; i < k; ++i) top[std::size_t(i)] = i;
      EXPECT_EQ(arg->J, top);
      if (k == qd.q) {
        for (const auto& cp : pts) EXPECT_NE(cp.kind, CriticalKind::StrictSaddle);
      }
    }
  }
}

TEST(Classify, CertificatesAreDescentDirections) {
  std::mt19937_64 rng(5);
  int saddles = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = testutil::random_data(4, 4, rng);
    for (Index k = 1; k <= 3; ++k) {
      for (const auto& cp : enumerate_critical_points(data, k)) {
        if (cp.kind != CriticalKind::StrictSaddle) {
          EXPECT_FALSE(cp.certificate);
          continue;
        }
        ++saddles;
        ASSERT_TRUE(cp.certificate);
        const auto& c = *cp.certificate;
        EXPECT_LT(c.second_derivative, 0.0);
        EXPECT_TRUE(std::find(cp.J.begin(), cp.J.end(), c.j0) != cp.J.end());
        EXPECT_TRUE(std::find(cp.J.begin(), cp.J.end(), c.j1) == cp.J.end());
        EXPECT_GT(c.sigma(c.j1), c.sigma(c.j0));
        EXPECT_LE((c.curve(0) - cp.W).norm(), 1e-12 * (1 + cp.W.norm()));
        EXPECT_NEAR(saddle_curve_check(c, data), c.second_derivative, 1e-4 * (1 + std::abs(c.second_derivative)));
      }
    }
  }
  EXPECT_GT(saddles, 0);
}

TEST(Classify, CertificateChoice) {
  // sigma(Q) = (4, 3, 2, 1) via X = I, Y = diag
  Mx Y = Mx::Zero(4, 4);
  Y.diagonal() << 4, 3, 2, 1;
  const auto qd = compute_Q(DataSet<double>(Mx::Identity(4, 4), Y));
  const auto cp = make_critical_point(qd, {0, 2, 3});
  ASSERT_TRUE(cp.certificate);
  EXPECT_EQ(cp.certificate->j0, 3);  // the only member below the k-th largest value, 2
  EXPECT_EQ(cp.certificate->j1, 1);  // largest sigma outside J
  EXPECT_NEAR(cp.certificate->second_derivative, 2 * 1 * (1 - 3), 1e-12);
}

TEST(Classify, TiesFlagAmbiguity) {
  Mx Y = Mx::Zero(3, 3);
  Y.diagonal() << 2, 2, 1;
  const auto qd = compute_Q(DataSet<double>(Mx::Identity(3, 3), Y));
  const auto pts = enumerate_critical_points(qd, 1);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_TRUE(pts[0].ambiguous);
  EXPECT_TRUE(pts[1].ambiguous);
  EXPECT_EQ(pts[0].kind, CriticalKind::GlobalMinOnMk);
  EXPECT_EQ(pts[1].kind, CriticalKind::GlobalMinOnMk);
  EXPECT_EQ(pts[2].kind, CriticalKind::StrictSaddle);
  const auto two = enumerate_critical_points(qd, 2);
  EXPECT_FALSE(two[0].ambiguous);  // {0, 1} holds both tied values
}

TEST(Lift, Diag41Example) {
  const auto data = testutil::diag41();
  const auto qd = compute_Q(data);
  const auto cp = enumerate_critical_points(qd, 1)[0];
  const auto w = lift_critical_point(cp, qd, NetworkShape({2, 1, 2}));
  Mx W1(1, 2), W2(2, 1);
  W1 << 0.5, 0;
  W2 << 2, 0;
  EXPECT_LE((w[0] - W1).norm(), 1e-12);
  EXPECT_LE((w[1] - W2).norm(), 1e-12);
  EXPECT_LE((product(w).W - cp.W).norm(), 1e-12);
}

TEST(Lift, RoundTripAndStationary) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = testutil::random_data(4, 3, rng);
    const auto qd = compute_Q(data);
    for (Index k = 0; k <= 2; ++k) {
      for (const auto& cp : enumerate_critical_points(qd, k)) {
        const auto w = lift_critical_point(cp, qd, NetworkShape({4, 2, 5, 3}));
        EXPECT_LE((product(w).W - cp.W).norm(), 1e-10 * (1 + cp.W.norm()));
        for (Index j = 1; j <= 3; ++j) EXPECT_LE(grad_LN_layer(j, w, data).norm(), 1e-10 * (1 + data.gram().norm()));
        if (k == 0) {
          EXPECT_EQ(w.norm(), 0.0);
        }
      }
    }
  }
}

TEST(Lift, Infeasible) {
  std::mt19937_64 rng(7);
  const auto data = testutil::random_data(3, 3, rng);
  const auto qd = compute_Q(data);
  const auto cp = enumerate_critical_points(qd, 2)[0];
  EXPECT_THROW(lift_critical_point(cp, qd, NetworkShape({3, 1, 3})), InfeasibleError);
  EXPECT_THROW(lift_critical_point(cp, qd, NetworkShape({2, 2, 3})), ShapeError);
}

TEST(Pca, Diag41AndProperties) {
  const auto pca = pca_solution(testutil::diag41().X(), 1);
  Mx e11 = Mx::Zero(2, 2);
  e11(0, 0) = 1;
  EXPECT_LE((pca.projector - e11).norm(), 1e-12);
  EXPECT_FALSE(pca.ambiguous);

  std::mt19937_64 rng(8);
  const Mx X = testutil::uniform(6, 18, rng);
  const auto p = pca_solution(X, 3);
  EXPECT_LE((p.projector * p.projector - p.projector).norm(), 1e-12);
  EXPECT_LE((p.projector - p.projector.transpose()).norm(), 1e-12);
  const double tail = p.eigenvalues.tail(3).sum();
  EXPECT_NEAR((X - p.projector * X).norm(), std::sqrt(tail), 1e-8);
  EXPECT_TRUE(pca_solution(Mx(Mx::Identity(3, 3)), 1).ambiguous);
}

TEST(AutoencoderEquilibria, ResidualsAndStability) {
  std::mt19937_64 rng(9);
  const Mx X = testutil::uniform(4, 12, rng);
  const auto pca = pca_solution(X, 2);
  for (Index k = 0; k <= 2; ++k) {
    const auto eq = autoencoder_equilibria(X, 2, k);
    EXPECT_EQ(double(eq.points.size()), binomial(4, k));
    EXPECT_FALSE(eq.ambiguous);
    for (const auto& e : eq.points) {
      EXPECT_LE(e.residual, 1e-10 * (1 + X.squaredNorm()));
      EXPECT_LE((e.W2 * e.W1 - e.W).norm(), 1e-12);
      const bool top = k == 2 && e.J == std::vector<Index>{0, 1};
      EXPECT_EQ(e.unstable, !top);
      if (top) {
        EXPECT_LE((e.W - pca.projector).norm(), 1e-12);
      }
    }
  }
  const auto zero = autoencoder_equilibria(X, 2, 0);
  ASSERT_EQ(zero.points.size(), 1u);
  EXPECT_EQ(zero.points[0].W.norm(), 0.0);
  EXPECT_THROW(autoencoder_equilibria(X, 2, 3), ParameterError);
  EXPECT_TRUE(autoencoder_equilibria(Mx(Mx::Identity(3, 3)), 1, 1).ambiguous);
}
