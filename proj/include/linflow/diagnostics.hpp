#ifndef LINFLOW_DIAGNOSTICS_HPP
#define LINFLOW_DIAGNOSTICS_HPP

// Invariant monitors over integrated trajectories.

#include "linflow/core.hpp"
#include "linflow/integrator.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace linflow {

struct InvariantReport {
  std::string name;
  double max_violation = 0;
  double threshold = 0;
  bool passed = true;
  double worst_time = 0;
  /// free-form supplementary information
  std::string detail;
};

struct DiagnosticThresholds {
  double conserved_drift = 1e-6;
  double loss_increment = 1e-9;  // relative to (1 + loss)
  double trajectory_deviation = 1e-6;
  double closed_form = 1e-6;
};

namespace detail {

inline InvariantReport finish(std::string name, double violation, double threshold, double when,
                              std::string extra = {}) {
  return {std::move(name), violation, threshold, violation <= threshold, when, std::move(extra)};
}

}  // namespace detail

/// Drift of the conserved quantities along a layer-wise flow: every
/// D_j = W_{j+1}^T W_{j+1} - W_j W_j^T and every ||W_j||^2 - ||W_i||^2.
template <typename Scalar>
InvariantReport check_conserved(const FullTrajectory<Scalar>& traj, double threshold = 1e-6) {
  if (traj.size() == 0) return detail::finish("conserved", 0, threshold, 0);
  const auto& w0 = traj.states.front();
  const auto D0 = conserved_differences(w0);
  const Index N = w0.size();
  auto norm_diffs = [N](const WeightTuple<Scalar>& w) {
    Mat<Scalar> M(N, N);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < N; ++j) M(i, j) = w[j].squaredNorm() - w[i].squaredNorm();
    return M;
  };
  const Mat<Scalar> n0 = norm_diffs(w0);
  double worst = 0, when = 0;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const auto D = conserved_differences(traj.states[s]);
    double v = double(detail::max_drift(D0, D));
    v = std::max(v, double((norm_diffs(traj.states[s]) - n0).cwiseAbs().maxCoeff()));
    if (v > worst) {
      worst = v;
      when = double(traj.times[s]);
    }
  }
  return detail::finish("conserved", worst, threshold, when);
}

/// Largest relative loss increase (L_{s+1} - L_s) / (1 + L_s) between snapshots.
template <typename Scalar, typename State>
InvariantReport check_monotone_loss(const Trajectory<Scalar, State>& traj, double threshold = 1e-9) {
  double worst = 0, when = 0;
  for (std::size_t s = 1; s < traj.size(); ++s) {
    const double prev = double(traj.diagnostics[s - 1].loss);
    const double inc = (double(traj.diagnostics[s].loss) - prev) / (1.0 + prev);
    if (inc > worst) {
      worst = inc;
      when = double(traj.times[s]);
    }
  }
  return detail::finish("monotone_loss", worst, threshold, when);
}

/// Rank of the state must stay at its initial value. Singular values that
/// sit within a factor 1e3 of the rank cutoff are listed in `detail`.
template <typename Scalar>
InvariantReport check_rank_constant(const MatrixTrajectory<Scalar>& traj) {
  if (traj.size() == 0) return detail::finish("rank_constant", 0, 0, 0);
  const Index r0 = traj.diagnostics.front().rank_estimate;
  double worst = 0, when = 0;
  long near = 0;
  Scalar smallest = std::numeric_limits<Scalar>::infinity();
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const Index r = traj.diagnostics[s].rank_estimate;
    const double v = double(std::abs(r - r0));
    if (v > worst) {
      worst = v;
      when = double(traj.times[s]);
    }
    Eigen::JacobiSVD<Mat<Scalar>> svd(traj.states[s]);
    const Vec<Scalar>& sv = svd.singularValues();
    if (sv.size() == 0) continue;
    const Scalar cut = rank_cutoff(sv.maxCoeff());
    for (Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > cut) {
        smallest = std::min(smallest, sv(i));
        if (sv(i) < Scalar(1e3) * cut) ++near;
      }
    }
  }
  std::string extra = "initial rank " + std::to_string(r0) + "; smallest nonzero singular value " +
                      std::to_string(double(smallest)) + "; near-threshold values " + std::to_string(near);
  return detail::finish("rank_constant", worst, 0.0, when, std::move(extra));
}

/// max_t ||map_a(a_t) - map_b(b_t)||_F over two trajectories on the same time grid.
template <typename Scalar, typename StateA, typename StateB, typename MapA, typename MapB>
Scalar compare_trajectories(const Trajectory<Scalar, StateA>& a, MapA&& map_a,
                            const Trajectory<Scalar, StateB>& b, MapB&& map_b) {
  if (a.size() != b.size()) throw ComparisonError("compare_trajectories: snapshot counts differ");
  Scalar worst = 0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const Scalar ta = a.times[s], tb = b.times[s];
    if (std::abs(ta - tb) > Scalar(1e-12) * std::max(Scalar(1), std::abs(ta))) {
      throw ComparisonError("compare_trajectories: time grids differ");
    }
    const Mat<Scalar> ma = map_a(a.states[s]);
    const Mat<Scalar> mb = map_b(b.states[s]);
    if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) {
      throw ComparisonError("compare_trajectories: mapped states have different shapes");
    }
    worst = std::max(worst, (ma - mb).norm());
  }
  return worst;
}

template <typename Scalar, typename State, typename Map>
Scalar compare_trajectories(const Trajectory<Scalar, State>& a, const Trajectory<Scalar, State>& b, Map&& map) {
  return compare_trajectories(a, map, b, map);
}

enum class ClosedFormFamily { PathologicalScalar };

/// alpha_1(t) = 1/sqrt(2 e^{2 lambda_1 t} - 1): the exact solution of the
/// two-layer autoencoder flow from W_1(0) = u_1^T, W_2(0) = -u_1.
template <typename Scalar>
Scalar pathological_alpha(Scalar lambda1, Scalar t) {
  return Scalar(1) / std::sqrt(Scalar(2) * std::exp(Scalar(2) * lambda1 * t) - Scalar(1));
}

/// Compares a two-layer run started at W_1 = u_1^T, W_2 = -u_1 (u_1 the top
/// eigenvector of X X^T, eigenvalue lambda_1) with the exact solution
/// W_1(t) = alpha_1(t) u_1^T, W_2(t) = -alpha_1(t) u_1.
template <typename Scalar>
InvariantReport closed_form_regression(const FullTrajectory<Scalar>& traj, const DataSet<Scalar>& data,
                                       ClosedFormFamily family = ClosedFormFamily::PathologicalScalar,
                                       double threshold = 1e-6) {
  (void)family;
  if (traj.size() == 0) throw PreconditionError("closed_form_regression: empty trajectory");
  const auto& w0 = traj.states.front();
  if (w0.size() != 2 || w0.shape().dim(1) != 1 || data.dx() != data.dy()) {
    throw PreconditionError("closed_form_regression: needs a two-layer autoencoder with one hidden unit");
  }
  const Scalar lambda1 = data.gram_eigen().values(0);
  Vec<Scalar> u1 = data.gram_eigen().vectors.col(0);
  if (w0[0].row(0).dot(u1) < 0) u1 = -u1;  // eigenvector sign is arbitrary
  if ((w0[0] - u1.transpose()).norm() > Scalar(1e-10) || (w0[1] + u1).norm() > Scalar(1e-10)) {
    throw PreconditionError("closed_form_regression: start is not W_1 = u_1^T, W_2 = -u_1");
  }
  double worst = 0, when = 0;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const Scalar a = pathological_alpha(lambda1, traj.times[s]);
    const double v = double(std::max((traj.states[s][0] - a * u1.transpose()).cwiseAbs().maxCoeff(),
                                     (traj.states[s][1] + a * u1).cwiseAbs().maxCoeff()));
    if (v > worst) {
      worst = v;
      when = double(traj.times[s]);
    }
  }
  return detail::finish("closed_form_regression", worst, threshold, when,
                        "lambda_1 = " + std::to_string(double(lambda1)));
}

}  // namespace linflow

#endif  // LINFLOW_DIAGNOSTICS_HPP
