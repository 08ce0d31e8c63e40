#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace linflow;
using testutil::Mx;

namespace {

IntegratorConfig config(double h, double T, long every = 10) {
  IntegratorConfig c;
  c.h = h;
  c.t_max = T;
  c.snapshot_every = every;
  c.grad_stop_tol = 0;
  return c;
}

// Trajectory holding the same state at every snapshot.
template <typename State>
Trajectory<double, State> constant_traj(const State& s, double loss, int n = 5) {
  Trajectory<double, State> t;
  for (int i = 0; i < n; ++i) {
    t.times.push_back(0.1 * i);
    t.states.push_back(s);
    SnapshotDiagnostics<double> d;
    d.loss = loss;
    d.rank_estimate = ProductState<double>::of(Mx(Mx::Zero(1, 1))).rank_estimate;
    t.diagnostics.push_back(d);
  }
  return t;
}

Mx scalar(double v) { return Mx::Constant(1, 1, v); }

}  // namespace

TEST(Report, PassedIffWithinThreshold) {
  std::mt19937_64 rng(1);
  const auto w = testutil::random_tuple(NetworkShape({3, 2, 3}), rng);
  const auto r = check_conserved(constant_traj(w, 1.0));
  EXPECT_EQ(r.max_violation, 0.0);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.passed, r.max_violation <= r.threshold);
  EXPECT_EQ(check_monotone_loss(constant_traj(w, 1.0)).max_violation, 0.0);
}

TEST(Conserved, DetectsDrift) {
  std::mt19937_64 rng(2);
  auto traj = constant_traj(testutil::random_tuple(NetworkShape({3, 2, 3}), rng), 1.0);
  traj.states[3][1] *= 1.1;
  const auto r = check_conserved(traj);
  EXPECT_FALSE(r.passed);
  EXPECT_DOUBLE_EQ(r.worst_time, traj.times[3]);
}

TEST(Conserved, BalancedRunAndOrderStudy) {
  std::mt19937_64 rng(3);
  const Mx X = testutil::uniform(4, 12, rng);
  const auto data = DataSet<double>::autoencoder(X);
  Rng r(3);
  const auto w0 = orthogonal_balanced<double>(NetworkShape({4, 2, 4}), r);
  EXPECT_TRUE(check_conserved(integrate_full(w0, data, config(1e-3, 3.0, 100))).passed);
  // a Gaussian start has nonzero D_j, so the drift is a real RK4 error
  Rng r2(5);
  const auto wg = gaussian<double>(NetworkShape({4, 3, 4}), r2, StdRule::Fixed, 1.0);
  const double e1 = check_conserved(integrate_full(wg, data, config(0.02, 2.0))).max_violation;
  const double e2 = check_conserved(integrate_full(wg, data, config(0.01, 2.0))).max_violation;
  EXPECT_GE(std::log2(e1 / e2), 3.5) << e1 << " " << e2;
}

TEST(MonotoneLoss, FlagsIncreaseAndPassesOnRuns) {
  auto traj = constant_traj(scalar(0), 1.0);
  traj.diagnostics[2].loss = 1.5;
  const auto r = check_monotone_loss(traj);
  EXPECT_NEAR(r.max_violation, 0.25, 1e-15);
  EXPECT_FALSE(r.passed);

  // the pathological start still decreases the loss while W shrinks
  std::mt19937_64 rng(4);
  const Mx X = testutil::uniform(3, 9, rng);
  const auto w0 = pathological_autoencoder(X, 1);
  const auto tr = integrate_full(w0, DataSet<double>::autoencoder(X), config(1e-3, 3.0, 50));
  EXPECT_TRUE(check_monotone_loss(tr).passed);
}

TEST(RankConstant, ZeroAndBalancedStarts) {
  const auto z = check_rank_constant(constant_traj(Mx(Mx::Zero(2, 2)), 0.0));
  EXPECT_TRUE(z.passed);
  EXPECT_EQ(z.max_violation, 0.0);

  std::mt19937_64 rng(5);
  const Mx X = testutil::uniform(5, 15, rng) / 2.0;
  Rng r(6);
  const auto w0 = orthogonal_balanced<double>(NetworkShape({5, 2, 3, 5}), r);
  const auto tr = integrate_product(product(w0), DataSet<double>::autoencoder(X), 3, config(1e-3, 2.0, 100));
  const auto rep = check_rank_constant(tr);
  EXPECT_TRUE(rep.passed);
  EXPECT_NE(rep.detail.find("initial rank 2"), std::string::npos);
}

TEST(RankConstant, PathologicalSingularValueDecays) {
  // d = 1, lambda = 1: the singular value alpha(t)^2 never reaches 0
  const auto data = DataSet<double>::autoencoder(scalar(1));
  const auto tr = integrate_product(Mx(scalar(-1)), data, 2, config(1e-3, 3.0, 100));
  EXPECT_TRUE(check_rank_constant(tr).passed);
  const double a = pathological_alpha(1.0, 3.0);
  EXPECT_NEAR(std::abs(tr.final_state()(0, 0)), a * a, 1e-6);
}

TEST(Compare, GridMismatch) {
  const auto a = constant_traj(scalar(1), 0, 4);
  const auto b = constant_traj(scalar(1), 0, 5);
  auto id = [](const Mx& m) { return m; };
  EXPECT_THROW(compare_trajectories(a, b, id), ComparisonError);
  auto c = constant_traj(scalar(1), 0, 4);
  c.times[2] += 1e-3;
  EXPECT_THROW(compare_trajectories(a, c, id), ComparisonError);
  auto d = constant_traj(scalar(3), 0, 4);
  EXPECT_DOUBLE_EQ(compare_trajectories(a, d, id), 2.0);
}

TEST(ClosedForm, ScalarRegressionAndOrder) {
  const auto data = DataSet<double>::autoencoder(scalar(1));
  WeightTuple<double> w0(NetworkShape({1, 1, 1}), {scalar(1), scalar(-1)});
  const auto tr = integrate_full(w0, data, config(1e-3, 3.0, 10));
  const auto rep = closed_form_regression(tr, data);
  EXPECT_TRUE(rep.passed) << rep.max_violation;
  EXPECT_EQ(pathological_alpha(1.0, 0.0), 1.0);
  const double e1 = closed_form_regression(integrate_full(w0, data, config(0.1, 3.0, 1)), data).max_violation;
  const double e2 = closed_form_regression(integrate_full(w0, data, config(0.05, 3.0, 1)), data).max_violation;
  EXPECT_GE(std::log2(e1 / e2), 3.5) << e1 << " " << e2;
}

TEST(ClosedForm, HigherDimensionalPathologicalStart) {
  std::mt19937_64 rng(7);
  const Mx X = testutil::uniform(4, 12, rng);
  const auto data = DataSet<double>::autoencoder(X);
  const auto w0 = pathological_autoencoder(X, 1);
  EXPECT_TRUE(closed_form_regression(integrate_full(w0, data, config(1e-3, 2.0, 20)), data).passed);
}

TEST(ClosedForm, WrongSetup) {
  std::mt19937_64 rng(8);
  const Mx X = testutil::uniform(3, 9, rng);
  const auto data = DataSet<double>::autoencoder(X);
  const auto w0 = testutil::random_tuple(NetworkShape({3, 1, 3}), rng);
  EXPECT_THROW(closed_form_regression(integrate_full(w0, data, config(1e-2, 0.1)), data), PreconditionError);
  const auto w2 = testutil::random_tuple(NetworkShape({3, 2, 3}), rng);
  EXPECT_THROW(closed_form_regression(integrate_full(w2, data, config(1e-2, 0.1)), data), PreconditionError);
  EXPECT_THROW(closed_form_regression(FullTrajectory<double>{}, data), PreconditionError);
}

TEST(Reports, Reproducible) {
  std::mt19937_64 rng(9);
  const auto data = testutil::random_data(3, 3, rng);
  const auto w0 = testutil::random_tuple(NetworkShape({3, 2, 3}), rng);
  const auto a = check_conserved(integrate_full(w0, data, config(1e-2, 1.0)));
  const auto b = check_conserved(integrate_full(w0, data, config(1e-2, 1.0)));
  EXPECT_EQ(a.max_violation, b.max_violation);
  EXPECT_EQ(a.worst_time, b.worst_time);
}
