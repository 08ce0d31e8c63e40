#ifndef LINFLOW_INTEGRATOR_HPP
#define LINFLOW_INTEGRATOR_HPP

// Fixed-step classical Runge-Kutta (RK4) integration of the gradient flows of
// deep linear networks and of the related autoencoder / PCA flows.

#include "linflow/core.hpp"
#include "linflow/geometry.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace linflow {

struct IntegratorConfig {
  double h = 1e-3;
  double t_max = 50.0;
  long snapshot_every = 100;
  double grad_stop_tol = 1e-10;
  long max_steps = 100'000'000;

  void validate() const {
    if (!(h > 0.0)) throw ParameterError("IntegratorConfig: h must be > 0");
    if (!(t_max > 0.0)) throw ParameterError("IntegratorConfig: t_max must be > 0");
    if (!(grad_stop_tol >= 0.0)) throw ParameterError("IntegratorConfig: grad_stop_tol must be >= 0");
    if (snapshot_every < 1) throw ParameterError("IntegratorConfig: snapshot_every must be >= 1");
    if (max_steps < 1) throw ParameterError("IntegratorConfig: max_steps must be >= 1");
  }

  long steps() const { return std::min(max_steps, long(std::llround(t_max / h))); }
};

/// Per-snapshot measurements. Quantities that do not apply to a flow are NaN.
template <typename Scalar>
struct SnapshotDiagnostics {
  Scalar loss = 0;
  Scalar rhs_norm = 0;
  Scalar balance_residual = std::numeric_limits<Scalar>::quiet_NaN();
  Index rank_estimate = 0;
  Scalar conserved_drift = std::numeric_limits<Scalar>::quiet_NaN();
};

template <typename Scalar, typename State>
struct Trajectory {
  std::vector<Scalar> times;
  std::vector<State> states;
  std::vector<SnapshotDiagnostics<Scalar>> diagnostics;
  /// Total RK4 steps taken.
  long steps = 0;
  /// True when the run ended because the right-hand side fell below grad_stop_tol.
  bool converged = false;

  std::size_t size() const { return times.size(); }
  const State& final_state() const { return states.back(); }
  const SnapshotDiagnostics<Scalar>& final_diagnostics() const { return diagnostics.back(); }
};

template <typename Scalar>
using FullTrajectory = Trajectory<Scalar, WeightTuple<Scalar>>;
template <typename Scalar>
using MatrixTrajectory = Trajectory<Scalar, Mat<Scalar>>;

inline constexpr double kDivergenceNorm = 1e12;

namespace detail {

template <typename Scalar>
Scalar state_norm(const Mat<Scalar>& m) { return m.norm(); }
template <typename Scalar>
Scalar state_norm(const WeightTuple<Scalar>& w) { return w.norm(); }
template <typename Scalar>
bool state_finite(const Mat<Scalar>& m) { return m.allFinite(); }
template <typename Scalar>
bool state_finite(const WeightTuple<Scalar>& w) { return w.all_finite(); }

}  // namespace detail

/// Generic RK4 driver. `rhs(x)` returns dx/dt; `observe(x, rhs(x))` returns
/// the snapshot diagnostics. Snapshots are taken at step 0, every
/// `snapshot_every` steps, and at the final step.
template <typename Scalar, typename State, typename Rhs, typename Observe>
Trajectory<Scalar, State> rk4_integrate(State x, Rhs&& rhs, Observe&& observe,
                                        const IntegratorConfig& cfg) {
  cfg.validate();
  const Scalar h = Scalar(cfg.h);
  const long total = cfg.steps();
  Trajectory<Scalar, State> traj;
  long last_snap = -1;
  auto snap = [&](long n, const State& s, const State& k) {
    if (n == last_snap) return;
    traj.times.push_back(Scalar(n) * h);
    traj.states.push_back(s);
    auto d = observe(s, k);
    d.rhs_norm = detail::state_norm(k);
    traj.diagnostics.push_back(d);
    last_snap = n;
  };

  for (long n = 0;; ++n) {
    const State k1 = rhs(x);
    const Scalar rn = detail::state_norm(k1);
    const bool stop_tol = rn < Scalar(cfg.grad_stop_tol);
    if (n % cfg.snapshot_every == 0 || stop_tol || n == total) snap(n, x, k1);
    if (stop_tol || n == total) {
      traj.steps = n;
      traj.converged = stop_tol;
      break;
    }
    const State k2 = rhs(State(x + (h / 2) * k1));
    const State k3 = rhs(State(x + (h / 2) * k2));
    const State k4 = rhs(State(x + h * k3));
    x = State(x + (h / 6) * State(k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4));
    if (!detail::state_finite(x) || detail::state_norm(x) > Scalar(kDivergenceNorm)) {
      throw DivergenceError("flow diverged at step " + std::to_string(n + 1) + " (t = " +
                                std::to_string(double(n + 1) * cfg.h) + ")",
                            n + 1, double(n + 1) * cfg.h);
    }
  }
  return traj;
}

namespace detail {

template <typename Scalar>
Scalar max_drift(const std::vector<Mat<Scalar>>& D0, const std::vector<Mat<Scalar>>& D) {
  Scalar m = 0;
  for (std::size_t j = 0; j < D.size(); ++j) m = std::max(m, (D[j] - D0[j]).norm());
  return m;
}

template <typename Scalar>
Scalar reconstruction_loss(const Mat<Scalar>& W, const Mat<Scalar>& C) {
  // 1/2 ||X - W X||_F^2 = 1/2 tr((I - W) C (I - W)^T)
  const Mat<Scalar> R = Mat<Scalar>::Identity(W.rows(), W.cols()) - W;
  return Scalar(0.5) * (R * C * R.transpose()).trace();
}

template <typename Scalar>
void require_orthonormal_columns(const Mat<Scalar>& V, const char* what) {
  const Index r = V.cols();
  if ((V.transpose() * V - Mat<Scalar>::Identity(r, r)).norm() > Scalar(1e-10)) {
    throw PreconditionError(std::string(what) + ": initial V must satisfy V^T V = I");
  }
}

template <typename Scalar>
Index matrix_rank(const Mat<Scalar>& M) {
  return ProductState<Scalar>::of(M).rank_estimate;
}

}  // namespace detail

/// Layer-wise gradient flow dW_j/dt = -grad_{W_j} L^N for all j simultaneously.
/// Diagnostics: loss_LN, balancedness residual, rank of the product, and the
/// drift max_j ||D_j(t) - D_j(0)||_F of the conserved differences.
template <typename Scalar>
FullTrajectory<Scalar> integrate_full(const WeightTuple<Scalar>& w0, const DataSet<Scalar>& data,
                                      const IntegratorConfig& cfg) {
  detail::require_shape(detail::product_matrix(w0), data.dy(), data.dx(), "integrate_full");
  const auto D0 = conserved_differences(w0);
  auto rhs = [&](const WeightTuple<Scalar>& w) { return Scalar(-1) * grad_LN(w, data); };
  auto observe = [&](const WeightTuple<Scalar>& w, const WeightTuple<Scalar>&) {
    SnapshotDiagnostics<Scalar> d;
    const auto P = product(w);
    d.loss = loss_L1(P.W, data);
    d.rank_estimate = P.rank_estimate;
    const auto D = conserved_differences(w);
    Scalar bal = 0;
    for (const auto& Dj : D) bal = std::max(bal, Dj.norm());
    d.balance_residual = bal;
    d.conserved_drift = detail::max_drift(D0, D);
    return d;
  };
  return rk4_integrate<Scalar>(w0, rhs, observe, cfg);
}

/// Right-hand side of the product flow: -A_W(grad L^1(W)). With k >= 0 the
/// fractional powers are taken of the rank-k truncation of W.
template <typename Scalar>
Mat<Scalar> product_flow_rhs(const Mat<Scalar>& W, const DataSet<Scalar>& data, int N, Index k = -1) {
  auto f = full_svd(W);
  if (k >= 0) f = truncate(std::move(f), k);
  return -apply_A_W(f, grad_L1(W, data), N);
}

/// Product flow dW/dt = -sum_j (WW^T)^{(N-j)/N} grad L^1(W) (W^TW)^{(j-1)/N},
/// which is what W = W_N ... W_1 follows when the layers start balanced.
///
/// The exact flow keeps rank(W) = rank(W0). The field grows like
/// sigma^{2(N-1)/N} off the rank-k0 manifold, so RK4 stage points that leave
/// it by O(h^2) would seed spurious singular values that then grow; the powers
/// are therefore evaluated on the rank-k0 truncation of each stage point.
template <typename Scalar>
MatrixTrajectory<Scalar> integrate_product(const Mat<Scalar>& W0, const DataSet<Scalar>& data, int N,
                                           const IntegratorConfig& cfg) {
  if (N < 1) throw ParameterError("integrate_product: N must be >= 1");
  detail::require_shape(W0, data.dy(), data.dx(), "integrate_product");
  const Index k0 = detail::matrix_rank(W0);
  auto rhs = [&](const Mat<Scalar>& W) { return product_flow_rhs(W, data, N, k0); };
  auto observe = [&](const Mat<Scalar>& W, const Mat<Scalar>&) {
    SnapshotDiagnostics<Scalar> d;
    d.loss = loss_L1(W, data);
    d.rank_estimate = detail::matrix_rank(W);
    return d;
  };
  return rk4_integrate<Scalar>(W0, rhs, observe, cfg);
}

template <typename Scalar>
MatrixTrajectory<Scalar> integrate_product(const ProductState<Scalar>& W0, const DataSet<Scalar>& data,
                                           int N, const IntegratorConfig& cfg) {
  return integrate_product(W0.W, data, N, cfg);
}

namespace detail {

template <typename Scalar>
SnapshotDiagnostics<Scalar> observe_frame(const Mat<Scalar>& V, const Mat<Scalar>& C) {
  SnapshotDiagnostics<Scalar> d;
  d.loss = reconstruction_loss<Scalar>(V * V.transpose(), C);
  d.rank_estimate = matrix_rank(V);
  // orthonormality defect ||V^T V - I||_F, the invariant of these flows
  d.conserved_drift = (V.transpose() * V - Mat<Scalar>::Identity(V.cols(), V.cols())).norm();
  return d;
}

}  // namespace detail

/// Oja's flow dV/dt = (I - V V^T) X X^T V on d x r frames with V^T V = I.
/// `conserved_drift` holds ||V^T V - I||_F.
template <typename Scalar>
MatrixTrajectory<Scalar> integrate_oja(const Mat<Scalar>& V0, const Mat<Scalar>& X,
                                       const IntegratorConfig& cfg) {
  detail::require_shape(V0, X.rows(), V0.cols(), "integrate_oja");
  detail::require_orthonormal_columns(V0, "integrate_oja");
  const Mat<Scalar> C = X * X.transpose();
  auto rhs = [&](const Mat<Scalar>& V) {
    const Mat<Scalar> CV = C * V;
    return Mat<Scalar>(CV - V * (V.transpose() * CV));
  };
  auto observe = [&](const Mat<Scalar>& V, const Mat<Scalar>&) { return detail::observe_frame(V, C); };
  return rk4_integrate<Scalar>(V0, rhs, observe, cfg);
}

/// Gradient flow of the symmetric autoencoder W = V V^T:
/// dV/dt = (I - V V^T) X X^T V + X X^T (I - V V^T) V.
template <typename Scalar>
MatrixTrajectory<Scalar> integrate_symmetric_autoencoder(const Mat<Scalar>& V0, const Mat<Scalar>& X,
                                                         const IntegratorConfig& cfg) {
  detail::require_shape(V0, X.rows(), V0.cols(), "integrate_symmetric_autoencoder");
  detail::require_orthonormal_columns(V0, "integrate_symmetric_autoencoder");
  const Mat<Scalar> C = X * X.transpose();
  const Index d = X.rows();
  auto rhs = [&](const Mat<Scalar>& V) {
    const Mat<Scalar> P = Mat<Scalar>::Identity(d, d) - V * V.transpose();
    return Mat<Scalar>(P * C * V + C * P * V);
  };
  auto observe = [&](const Mat<Scalar>& V, const Mat<Scalar>&) { return detail::observe_frame(V, C); };
  return rk4_integrate<Scalar>(V0, rhs, observe, cfg);
}

/// Right-hand side of the two-layer autoencoder flow (Y = X):
///   dW1/dt = -W2^T W2 W1 C + W2^T C,   dW2/dt = -W2 W1 C W1^T + C W1^T,  C = X X^T.
template <typename Scalar>
WeightTuple<Scalar> two_layer_rhs(const WeightTuple<Scalar>& w, const Mat<Scalar>& C) {
  const Mat<Scalar>& W1 = w[0];
  const Mat<Scalar>& W2 = w[1];
  const Mat<Scalar> W1C = W1 * C;
  Mat<Scalar> d1 = -W2.transpose() * (W2 * W1C) + W2.transpose() * C;
  Mat<Scalar> d2 = -W2 * (W1C * W1.transpose()) + W1C.transpose();
  return WeightTuple<Scalar>(w.shape(), {std::move(d1), std::move(d2)});
}

template <typename Scalar>
FullTrajectory<Scalar> integrate_two_layer_autoencoder(const Mat<Scalar>& W1_0, const Mat<Scalar>& W2_0,
                                                       const Mat<Scalar>& X, const IntegratorConfig& cfg) {
  const Index d = X.rows();
  const Index r = W1_0.rows();
  detail::require_shape(W1_0, r, d, "integrate_two_layer_autoencoder W1");
  detail::require_shape(W2_0, d, r, "integrate_two_layer_autoencoder W2");
  const Mat<Scalar> C = X * X.transpose();
  const WeightTuple<Scalar> w0(NetworkShape({d, r, d}), {W1_0, W2_0});
  const auto D0 = conserved_differences(w0);
  auto rhs = [&](const WeightTuple<Scalar>& w) { return two_layer_rhs(w, C); };
  auto observe = [&](const WeightTuple<Scalar>& w, const WeightTuple<Scalar>&) {
    SnapshotDiagnostics<Scalar> dg;
    const Mat<Scalar> W = w[1] * w[0];
    dg.loss = detail::reconstruction_loss<Scalar>(W, C);
    dg.rank_estimate = detail::matrix_rank(W);
    const auto D = conserved_differences(w);
    dg.balance_residual = D[0].norm();
    dg.conserved_drift = detail::max_drift(D0, D);
    return dg;
  };
  return rk4_integrate<Scalar>(w0, rhs, observe, cfg);
}

/// Stack (W1, W2) into V = [W1^T; W2] (2d x r).
template <typename Scalar>
Mat<Scalar> stack_layers(const Mat<Scalar>& W1, const Mat<Scalar>& W2) {
  detail::require_shape(W2, W1.cols(), W1.rows(), "stack_layers");
  Mat<Scalar> V(2 * W1.cols(), W1.rows());
  V << W1.transpose(), W2;
  return V;
}

/// Inverse of stack_layers.
template <typename Scalar>
WeightTuple<Scalar> unstack_layers(const Mat<Scalar>& V) {
  if (V.rows() % 2 != 0) throw ShapeError("unstack_layers: V must have an even row count");
  const Index d = V.rows() / 2;
  const Index r = V.cols();
  return WeightTuple<Scalar>(NetworkShape({d, r, d}),
                             {Mat<Scalar>(V.topRows(d).transpose()), Mat<Scalar>(V.bottomRows(d))});
}

/// Riccati form of the two-layer autoencoder flow on V = [W1^T; W2]:
///   dV/dt = (I + [-C 0; 0 0] V V^T [0 0; C^{-1} 0] + [0 0; 0 -I] V V^T [0 I; 0 0]) [0 C; C 0] V.
template <typename Scalar>
MatrixTrajectory<Scalar> integrate_riccati(const Mat<Scalar>& V0, const Mat<Scalar>& C,
                                           const IntegratorConfig& cfg) {
  const Index d = C.rows();
  if (C.cols() != d) throw ShapeError("integrate_riccati: C must be square");
  detail::require_shape(V0, 2 * d, V0.cols(), "integrate_riccati");
  if ((C - C.transpose()).norm() > Scalar(1e-10) * std::max(Scalar(1), C.norm())) {
    throw ParameterError("integrate_riccati: C must be symmetric");
  }
  Eigen::LLT<Mat<Scalar>> llt(C);
  if (llt.info() != Eigen::Success) throw ParameterError("integrate_riccati: C must be positive definite");
  const Mat<Scalar> Cinv = llt.solve(Mat<Scalar>::Identity(d, d));

  const Index n = 2 * d;
  Mat<Scalar> L1 = Mat<Scalar>::Zero(n, n);  // [-C 0; 0 0]
  L1.topLeftCorner(d, d) = -C;
  Mat<Scalar> R1 = Mat<Scalar>::Zero(n, n);  // [0 0; C^{-1} 0]
  R1.bottomLeftCorner(d, d) = Cinv;
  Mat<Scalar> L2 = Mat<Scalar>::Zero(n, n);  // [0 0; 0 -I]
  L2.bottomRightCorner(d, d) = -Mat<Scalar>::Identity(d, d);
  Mat<Scalar> R2 = Mat<Scalar>::Zero(n, n);  // [0 I; 0 0]
  R2.topRightCorner(d, d) = Mat<Scalar>::Identity(d, d);
  Mat<Scalar> K = Mat<Scalar>::Zero(n, n);  // [0 C; C 0]
  K.topRightCorner(d, d) = C;
  K.bottomLeftCorner(d, d) = C;
  const Mat<Scalar> I = Mat<Scalar>::Identity(n, n);

  const Mat<Scalar> D0 = [&] {
    const auto w = unstack_layers(V0);
    return Mat<Scalar>(w[1].transpose() * w[1] - w[0] * w[0].transpose());
  }();
  auto rhs = [&](const Mat<Scalar>& V) {
    const Mat<Scalar> VVt = V * V.transpose();
    return Mat<Scalar>((I + L1 * VVt * R1 + L2 * VVt * R2) * K * V);
  };
  auto observe = [&](const Mat<Scalar>& V, const Mat<Scalar>&) {
    SnapshotDiagnostics<Scalar> dg;
    const auto w = unstack_layers(V);
    const Mat<Scalar> W = w[1] * w[0];
    dg.loss = detail::reconstruction_loss<Scalar>(W, C);
    dg.rank_estimate = detail::matrix_rank(W);
    const Mat<Scalar> D = w[1].transpose() * w[1] - w[0] * w[0].transpose();
    dg.balance_residual = D.norm();
    dg.conserved_drift = (D - D0).norm();
    return dg;
  };
  return rk4_integrate<Scalar>(V0, rhs, observe, cfg);
}

}  // namespace linflow

#endif  // LINFLOW_INTEGRATOR_HPP
