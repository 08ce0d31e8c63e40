#ifndef LINFLOW_LANDSCAPE_HPP
#define LINFLOW_LANDSCAPE_HPP

// Closed-form description of the critical points of L^1 on the fixed-rank
// manifolds M_k, their classification into global minimizers and strict
// saddles, and lifts of those points to critical layer tuples of L^N.
//
// Everything is parameterized by Q = Y X^T (X X^T)^{-1/2} and its SVD
// Q = sum_i sigma_i u_i v_i^T. The critical points on M_k are
//   W_J = sum_{j in J} sigma_j u_j v_j^T (X X^T)^{-1/2},  |J| = k,
// with loss 1/2 (tr(Y Y^T) - sum_{j in J} sigma_j^2).

#include "linflow/core.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace linflow {

inline constexpr double kMaxCriticalPoints = 1e6;
inline constexpr double kTieTol = 1e-9;

template <typename Scalar>
struct QDecomposition {
  Mat<Scalar> Q;
  SvdFactors<Scalar> svd;
  /// rank of Q
  Index q = 0;
  /// (X X^T)^{-1/2}, kept to materialize critical points
  Mat<Scalar> gram_inv_sqrt;
  /// tr(Y Y^T)
  Scalar trace_yy = 0;
};

template <typename Scalar>
QDecomposition<Scalar> compute_Q(const DataSet<Scalar>& data) {
  QDecomposition<Scalar> out;
  out.Q = data.yxt() * data.gram_inv_sqrt();
  out.svd = reduced_svd(out.Q);
  out.q = out.svd.rank();
  out.gram_inv_sqrt = data.gram_inv_sqrt();
  out.trace_yy = data.Y().squaredNorm();
  return out;
}

enum class CriticalKind { GlobalMinOnMk, StrictSaddle, Zero };

inline const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::GlobalMinOnMk:
      return "GlobalMinOnMk";
    case CriticalKind::StrictSaddle:
      return "StrictSaddle";
    case CriticalKind::Zero:
      return "Zero";
  }
  return "?";
}

/// Descent certificate for a strict saddle. Along
///   u(t) = t u_{j1} + sqrt(1 - t^2) u_{j0},  v(t) = t v_{j1} + sqrt(1 - t^2) v_{j0},
///   gamma(t) = (sigma_{j0} u(t) v(t)^T + sum_{j in J, j != j0} sigma_j u_j v_j^T) (X X^T)^{-1/2}
/// the loss has second derivative 2 sigma_{j0} (sigma_{j0} - sigma_{j1}) < 0 at t = 0.
template <typename Scalar>
struct SaddleCertificate {
  Index j0 = 0;
  Index j1 = 0;
  Scalar second_derivative = 0;

  std::vector<Index> J;
  Vec<Scalar> sigma;
  Mat<Scalar> U, V, gram_inv_sqrt;

  Mat<Scalar> curve(Scalar t) const {
    const Scalar c = std::sqrt(Scalar(1) - t * t);
    Mat<Scalar> M = Mat<Scalar>::Zero(U.rows(), V.rows());
    for (Index j : J) {
      if (j == j0) {
        const Vec<Scalar> u = t * U.col(j1) + c * U.col(j0);
        const Vec<Scalar> v = t * V.col(j1) + c * V.col(j0);
        M += sigma(j0) * u * v.transpose();
      } else {
        M += sigma(j) * U.col(j) * V.col(j).transpose();
      }
    }
    return M * gram_inv_sqrt;
  }
};

template <typename Scalar>
struct CriticalPoint {
  /// zero-based indices into the singular values of Q, ascending
  std::vector<Index> J;
  Index k = 0;
  Mat<Scalar> W;
  Scalar loss = 0;
  CriticalKind kind = CriticalKind::Zero;
  /// Set when tied singular values of Q make the classification non-canonical.
  bool ambiguous = false;
  std::optional<SaddleCertificate<Scalar>> certificate;
};

namespace detail {

template <typename Scalar>
bool tied(Scalar a, Scalar b) {
  return std::abs(a - b) <= Scalar(kTieTol) * std::max({Scalar(1), std::abs(a), std::abs(b)});
}

}  // namespace detail

/// Classify a critical point: Zero iff k = 0, GlobalMinOnMk iff J picks the k
/// largest singular values of Q, StrictSaddle otherwise (with certificate).
/// Certificate choice: smallest j0 in J with sigma_{j0} < sigma_k, then the
/// j1 outside J with the largest sigma_{j1}.
template <typename Scalar>
CriticalKind classify(CriticalPoint<Scalar>& cp, const QDecomposition<Scalar>& qd) {
  cp.certificate.reset();
  cp.ambiguous = false;
  if (cp.k == 0) {
    cp.kind = CriticalKind::Zero;
    return cp.kind;
  }
  const Vec<Scalar>& s = qd.svd.sigma;
  const Scalar sk = s(cp.k - 1);
  std::vector<bool> in_J(std::size_t(qd.q), false);
  for (Index j : cp.J) in_J[std::size_t(j)] = true;

  for (Index i = 0; i + 1 < qd.q; ++i) {
    if (detail::tied(s(i), s(i + 1))) {
      // a tie only matters if it straddles membership in J
      if (in_J[std::size_t(i)] != in_J[std::size_t(i + 1)]) cp.ambiguous = true;
    }
  }

  std::optional<Index> j0;
  for (Index j : cp.J) {
    if (s(j) < sk && !detail::tied(s(j), sk)) {
      j0 = j;
      break;
    }
  }
  if (!j0) {
    cp.kind = CriticalKind::GlobalMinOnMk;
    return cp.kind;
  }
  Index j1 = -1;
  for (Index j = 0; j < qd.q; ++j) {
    if (!in_J[std::size_t(j)]) {
      j1 = j;  // singular values are descending, so the first one is the largest
      break;
    }
  }
  SaddleCertificate<Scalar> cert;
  cert.j0 = *j0;
  cert.j1 = j1;
  cert.second_derivative = Scalar(2) * s(*j0) * (s(*j0) - s(j1));
  cert.J = cp.J;
  cert.sigma = s;
  cert.U = qd.svd.U;
  cert.V = qd.svd.V;
  cert.gram_inv_sqrt = qd.gram_inv_sqrt;
  cp.certificate = std::move(cert);
  cp.kind = CriticalKind::StrictSaddle;
  return cp.kind;
}

template <typename Scalar>
CriticalPoint<Scalar> make_critical_point(const QDecomposition<Scalar>& qd, std::vector<Index> J) {
  CriticalPoint<Scalar> cp;
  cp.k = Index(J.size());
  Mat<Scalar> M = Mat<Scalar>::Zero(qd.Q.rows(), qd.Q.cols());
  Scalar captured = 0;
  for (Index j : J) {
    if (j < 0 || j >= qd.q) throw ParameterError("make_critical_point: index outside 0..q-1");
    const Scalar s = qd.svd.sigma(j);
    M += s * qd.svd.U.col(j) * qd.svd.V.col(j).transpose();
    captured += s * s;
  }
  cp.W = M * qd.gram_inv_sqrt;
  cp.loss = Scalar(0.5) * (qd.trace_yy - captured);
  cp.J = std::move(J);
  classify(cp, qd);
  return cp;
}

/// Every critical point of L^1 on M_k, one per k-subset J of {0, ..., q-1},
/// in lexicographic order of J. Empty when k > q.
template <typename Scalar>
std::vector<CriticalPoint<Scalar>> enumerate_critical_points(const QDecomposition<Scalar>& qd, Index k) {
  const Index n = std::min(qd.Q.rows(), qd.Q.cols());
  if (k < 0 || k > n) throw ParameterError("enumerate_critical_points: need 0 <= k <= min(d_x, d_y)");
  if (k > qd.q) return {};
  if (binomial(qd.q, k) > kMaxCriticalPoints) {
    throw SizeError("enumerate_critical_points: more than 1e6 index sets");
  }
  std::vector<CriticalPoint<Scalar>> out;
  for (auto& J : k_subsets(qd.q, k)) out.push_back(make_critical_point(qd, std::move(J)));
  return out;
}

template <typename Scalar>
std::vector<CriticalPoint<Scalar>> enumerate_critical_points(const DataSet<Scalar>& data, Index k) {
  return enumerate_critical_points(compute_Q(data), k);
}

/// Global minimizer of L^1 on M_k (J = top-k), or nullopt if k > q.
template <typename Scalar>
std::optional<CriticalPoint<Scalar>> global_minimizer(const QDecomposition<Scalar>& qd, Index k) {
  if (k > qd.q) return std::nullopt;
  std::vector<Index> J;
  for (Index i = 0; i < k; ++i) J.push_back(i);
  return make_critical_point(qd, std::move(J));
}

/// Central second difference of t -> L^1(gamma(t)) at t = 0.
template <typename Scalar>
Scalar saddle_curve_check(const SaddleCertificate<Scalar>& cert, const DataSet<Scalar>& data,
                          Scalar step = Scalar(1e-3)) {
  const Scalar fp = loss_L1(cert.curve(step), data);
  const Scalar f0 = loss_L1(cert.curve(Scalar(0)), data);
  const Scalar fm = loss_L1(cert.curve(-step), data);
  return (fp - Scalar(2) * f0 + fm) / (step * step);
}

/// Critical layer tuple with product cp.W:
///   W_1 = sum_i e_i v_{j_i}^T (X X^T)^{-1/2},  W_l = sum_i e_i e_i^T,  W_N = sum_i sigma_{j_i} u_{j_i} e_i^T.
template <typename Scalar>
WeightTuple<Scalar> lift_critical_point(const CriticalPoint<Scalar>& cp, const QDecomposition<Scalar>& qd,
                                        const NetworkShape& shape) {
  if (shape.input_dim() != qd.Q.cols() || shape.output_dim() != qd.Q.rows()) {
    throw ShapeError("lift_critical_point: shape does not match data dimensions");
  }
  if (cp.k > shape.min_width()) throw InfeasibleError("lift_critical_point: k exceeds the narrowest layer");
  const Index N = shape.layers();
  std::vector<Mat<Scalar>> layers;
  for (Index l = 1; l <= N; ++l) layers.push_back(Mat<Scalar>::Zero(shape.dim(l), shape.dim(l - 1)));
  for (Index i = 0; i < cp.k; ++i) {
    const Index j = cp.J[std::size_t(i)];
    layers[0].row(i) = qd.svd.V.col(j).transpose() * qd.gram_inv_sqrt;
    for (Index l = 2; l < N; ++l) layers[std::size_t(l - 1)](i, i) = 1;
    layers[std::size_t(N - 1)].col(i) += qd.svd.sigma(j) * qd.svd.U.col(j);
  }
  return WeightTuple<Scalar>(shape, std::move(layers));
}

/// Optimal rank-r reconstruction for PCA: projector U_r U_r^T onto the top-r
/// eigenvectors of X X^T. `ambiguous` flags lambda_r - lambda_{r+1} < 1e-10.
template <typename Scalar>
struct PcaSolution {
  Mat<Scalar> projector;
  Mat<Scalar> basis;
  Vec<Scalar> eigenvalues;
  bool ambiguous = false;
};

template <typename Scalar>
PcaSolution<Scalar> pca_solution(const Mat<Scalar>& X, Index r) {
  const Index d = X.rows();
  if (r < 0 || r > d) throw ParameterError("pca_solution: need 0 <= r <= d");
  const auto eig = symmetric_eigen_desc(Mat<Scalar>(X * X.transpose()));
  PcaSolution<Scalar> out;
  out.basis = eig.vectors.leftCols(r);
  out.projector = out.basis * out.basis.transpose();
  out.eigenvalues = eig.values;
  if (r > 0 && r < d) out.ambiguous = eig.values(r - 1) - eig.values(r) < Scalar(1e-10);
  return out;
}

/// Equilibrium of the two-layer autoencoder flow:
/// W_2 = U V^T, W_1 = V U^T, W = U U^T with U a set of k eigenvectors of X X^T.
template <typename Scalar>
struct AutoencoderEquilibrium {
  std::vector<Index> J;
  Mat<Scalar> U;
  Mat<Scalar> W;
  Mat<Scalar> W1, W2;
  /// Only the top-r eigenvector set (k = r) is stable; every other
  /// equilibrium has loss-decreasing directions arbitrarily close by.
  bool unstable = true;
  Scalar residual = 0;
};

template <typename Scalar>
struct AutoencoderEquilibria {
  std::vector<AutoencoderEquilibrium<Scalar>> points;
  bool ambiguous = false;
};

template <typename Scalar>
AutoencoderEquilibria<Scalar> autoencoder_equilibria(const Mat<Scalar>& X, Index r, Index k) {
  const Index d = X.rows();
  if (r < 1 || r > d) throw ParameterError("autoencoder_equilibria: need 1 <= r <= d");
  if (k < 0 || k > r) throw ParameterError("autoencoder_equilibria: need 0 <= k <= r");
  const Mat<Scalar> C = X * X.transpose();
  Eigen::LLT<Mat<Scalar>> llt(C);
  if (llt.info() != Eigen::Success) throw PreconditionError("autoencoder_equilibria: X X^T is singular");
  if (binomial(d, k) > kMaxCriticalPoints) throw SizeError("autoencoder_equilibria: too many subsets");
  const auto eig = symmetric_eigen_desc(C);

  AutoencoderEquilibria<Scalar> out;
  for (Index i = 0; i + 1 < d; ++i) {
    if (detail::tied(eig.values(i), eig.values(i + 1))) out.ambiguous = true;
  }
  const Mat<Scalar> Vk = Mat<Scalar>::Identity(r, k);
  for (auto& J : k_subsets(d, k)) {
    AutoencoderEquilibrium<Scalar> e;
    e.U = Mat<Scalar>(d, k);
    for (Index i = 0; i < k; ++i) e.U.col(i) = eig.vectors.col(J[std::size_t(i)]);
    e.W = e.U * e.U.transpose();
    e.W2 = e.U * Vk.transpose();
    e.W1 = Vk * e.U.transpose();
    bool top = k == r;
    for (Index i = 0; i < k && top; ++i) top = J[std::size_t(i)] == i;
    e.unstable = !top;
    const Mat<Scalar> r1 = -e.W2.transpose() * e.W2 * e.W1 * C + e.W2.transpose() * C;
    const Mat<Scalar> r2 = -e.W2 * e.W1 * C * e.W1.transpose() + C * e.W1.transpose();
    e.residual = std::sqrt(r1.squaredNorm() + r2.squaredNorm());
    e.J = std::move(J);
    out.points.push_back(std::move(e));
  }
  return out;
}

}  // namespace linflow

#endif  // LINFLOW_LANDSCAPE_HPP
