#ifndef LINFLOW_GEOMETRY_HPP
#define LINFLOW_GEOMETRY_HPP

// Riemannian structure on the manifold M_k of rank-k matrices induced by the
// product flow of an N-layer linear network:
//
//   A_W(Z) = sum_{j=1}^N (W W^T)^{(N-j)/N} Z (W^T W)^{(j-1)/N}
//   g_W(Z1, Z2) = < A_W^{-1}(Z1), Z2 >_F     for tangent Z1, Z2.
//
// The metric is available through three independent routes: the resolvent
// integral (numerical quadrature), a linear solve of A_W in tangent
// coordinates, and the closed form that exists for N = 2.

#include "linflow/core.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace linflow {

namespace detail {

// (W W^T)^alpha in the left singular basis; alpha = 0 gives the identity.
template <typename Scalar>
Mat<Scalar> left_gram_power(const FullSvd<Scalar>& f, Scalar alpha) {
  const Index n = f.U.rows();
  Vec<Scalar> p(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar s2 = f.left(i) * f.left(i);
    p(i) = alpha == Scalar(0) ? Scalar(1) : std::pow(s2, alpha);
  }
  return f.U * p.asDiagonal() * f.U.transpose();
}

template <typename Scalar>
Mat<Scalar> right_gram_power(const FullSvd<Scalar>& f, Scalar alpha) {
  const Index n = f.V.rows();
  Vec<Scalar> p(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar s2 = f.right(i) * f.right(i);
    p(i) = alpha == Scalar(0) ? Scalar(1) : std::pow(s2, alpha);
  }
  return f.V * p.asDiagonal() * f.V.transpose();
}

inline void require_layers(int N) {
  if (N < 1) throw ParameterError("layer count N must be >= 1");
}

}  // namespace detail

/// A_W(Z) given a precomputed SVD of W. Fractional powers of W W^T and
/// W^T W come from the singular values (numerically zero ones are exact 0).
template <typename Scalar>
Mat<Scalar> apply_A_W(const FullSvd<Scalar>& f, const Mat<Scalar>& Z, int N) {
  detail::require_layers(N);
  detail::require_shape(Z, f.U.rows(), f.V.rows(), "apply_A_W");
  Mat<Scalar> out = Mat<Scalar>::Zero(Z.rows(), Z.cols());
  for (int j = 1; j <= N; ++j) {
    const Scalar a = Scalar(N - j) / Scalar(N);
    const Scalar b = Scalar(j - 1) / Scalar(N);
    out.noalias() += detail::left_gram_power(f, a) * Z * detail::right_gram_power(f, b);
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> apply_A_W(const Mat<Scalar>& W, const Mat<Scalar>& Z, int N) {
  detail::require_shape(Z, W.rows(), W.cols(), "apply_A_W");
  return apply_A_W(full_svd(W), Z, N);
}

/// Orthogonal projection onto T_W(M_k):
/// P_W(Z) = Q_U Z + Z Q_V - Q_U Z Q_V with Q_U = U U^T, Q_V = V V^T from the
/// reduced SVD. At W = 0 the tangent space is {0} and the result is zero;
/// use tangent_project_checked to turn that case into an error.
template <typename Scalar>
Mat<Scalar> tangent_project(const Mat<Scalar>& W, const Mat<Scalar>& Z) {
  detail::require_shape(Z, W.rows(), W.cols(), "tangent_project");
  const auto f = reduced_svd(W);
  if (f.rank() == 0) return Mat<Scalar>::Zero(Z.rows(), Z.cols());
  const Mat<Scalar> UtZ = f.U.transpose() * Z;
  const Mat<Scalar> ZV = Z * f.V;
  return f.U * UtZ + ZV * f.V.transpose() - f.U * (UtZ * f.V) * f.V.transpose();
}

template <typename Scalar>
Mat<Scalar> tangent_project_checked(const Mat<Scalar>& W, const Mat<Scalar>& Z) {
  if (full_svd(W).rank == 0) {
    throw DegenerateRankError("tangent_project: W has numerical rank 0");
  }
  return tangent_project(W, Z);
}

/// Distance of Z from the tangent space at W.
template <typename Scalar>
Scalar tangent_residual(const Mat<Scalar>& W, const Mat<Scalar>& Z) {
  return (Z - tangent_project(W, Z)).norm();
}

namespace detail {

template <typename Scalar>
void require_tangent(const Mat<Scalar>& W, const Mat<Scalar>& Z, const char* what) {
  const Scalar res = tangent_residual(W, Z);
  if (res > Scalar(1e-8) * std::max(Scalar(1), Z.norm())) {
    throw PreconditionError(std::string(what) + ": argument is not tangent (residual " +
                            std::to_string(double(res)) + ")");
  }
}

// Tangent coordinates in the full SVD basis: entry (i, j) of U^T Z V is a
// free coordinate iff i < k or j < k. Their count is k (d_x + d_y - k).
inline std::vector<std::pair<Index, Index>> tangent_coordinates(Index rows, Index cols, Index k) {
  std::vector<std::pair<Index, Index>> out;
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      if (i < k || j < k) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace detail

/// Solve A_W(X) = Z for X in T_W(M_k), given tangent Z.
///
/// The restriction of A_W to the tangent space is assembled as a dense matrix
/// by applying A_W to each element u_i v_j^T of the orthonormal tangent basis,
/// then solved by Cholesky (the restriction is symmetric positive definite).
template <typename Scalar>
Mat<Scalar> inverse_A_W_solve(const Mat<Scalar>& W, const Mat<Scalar>& Z, int N) {
  detail::require_layers(N);
  detail::require_shape(Z, W.rows(), W.cols(), "inverse_A_W_solve");
  const auto f = full_svd(W);
  if (f.rank == 0) throw DegenerateRankError("inverse_A_W_solve: W has numerical rank 0");
  detail::require_tangent(W, Z, "inverse_A_W_solve");

  const auto coords = detail::tangent_coordinates(W.rows(), W.cols(), f.rank);
  const Index n = Index(coords.size());
  Mat<Scalar> M(n, n);
  for (Index c = 0; c < n; ++c) {
    const auto [i, j] = coords[std::size_t(c)];
    const Mat<Scalar> E = f.U.col(i) * f.V.col(j).transpose();
    const Mat<Scalar> AE = f.U.transpose() * apply_A_W(f, E, N) * f.V;
    for (Index r = 0; r < n; ++r) {
      M(r, c) = AE(coords[std::size_t(r)].first, coords[std::size_t(r)].second);
    }
  }
  const Mat<Scalar> Zhat = f.U.transpose() * Z * f.V;
  Vec<Scalar> rhs(n);
  for (Index r = 0; r < n; ++r) rhs(r) = Zhat(coords[std::size_t(r)].first, coords[std::size_t(r)].second);

  const Mat<Scalar> Msym = Scalar(0.5) * (M + M.transpose());
  Eigen::LLT<Mat<Scalar>> llt(Msym);
  if (llt.info() != Eigen::Success) {
    throw PreconditionError("inverse_A_W_solve: restricted operator is not positive definite");
  }
  const Vec<Scalar> x = llt.solve(rhs);
  Mat<Scalar> Xhat = Mat<Scalar>::Zero(W.rows(), W.cols());
  for (Index r = 0; r < n; ++r) Xhat(coords[std::size_t(r)].first, coords[std::size_t(r)].second) = x(r);
  return f.U * Xhat * f.V.transpose();
}

/// g_W(Z1, Z2) through the tangent-space linear solve.
template <typename Scalar>
Scalar metric_g_solve(const Mat<Scalar>& W, const Mat<Scalar>& Z1, const Mat<Scalar>& Z2, int N) {
  detail::require_shape(Z2, W.rows(), W.cols(), "metric_g_solve");
  return inverse_A_W_solve(W, Z1, N).cwiseProduct(Z2).sum();
}

enum class QuadratureScheme { GaussLegendreSplit };

/// Controls the resolvent-integral evaluation of the metric. The half-line
/// is split at the squared singular values involved in each mode pair (and at
/// `split_point` when it is positive); each piece gets an `n_nodes`-point
/// Gauss-Legendre rule after a smoothing change of variables. Convergence is
/// judged by comparison against a rule with twice the nodes.
struct QuadratureConfig {
  QuadratureScheme scheme = QuadratureScheme::GaussLegendreSplit;
  int n_nodes = 64;
  double split_point = 0.0;
  double rel_tol = 1e-10;

  void validate() const {
    if (n_nodes < 8) throw ParameterError("QuadratureConfig: n_nodes must be >= 8");
    if (!(rel_tol > 0.0 && rel_tol <= 1e-2)) {
      throw ParameterError("QuadratureConfig: rel_tol must lie in (0, 1e-2]");
    }
  }
};

namespace detail {

// Integral of t^{1/N} / ((t + a2)(t + b2)) over [0, inf) for a2, b2 >= 0,
// not both zero, using the given Gauss-Legendre rule on each piece:
//   [0, c0]        t = c0 u^N           (removes the t^{1/N - 1} endpoint)
//   [c_i, c_{i+1}] t = exp(x), panels of width <= 2 in x
//   [c_last, inf)  t = c_last w^{-N}    (maps the algebraic tail to a polynomial)
template <typename Scalar>
Scalar resolvent_integral(Scalar a2, Scalar b2, int N, Scalar split, const GaussRule<Scalar>& rule) {
  std::vector<Scalar> cuts;
  for (Scalar c : {a2, b2, split}) {
    if (c > Scalar(0)) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](Scalar x, Scalar y) { return std::abs(x - y) <= Scalar(1e-14) * y; }),
             cuts.end());
  const Scalar inv_n = Scalar(1) / Scalar(N);
  auto integrand = [&](Scalar t) { return std::pow(t, inv_n) / ((t + a2) * (t + b2)); };

  // Gauss-Legendre on [lo, hi] of g.
  auto gl = [&](Scalar lo, Scalar hi, auto&& g) {
    const Scalar half = Scalar(0.5) * (hi - lo);
    const Scalar mid = Scalar(0.5) * (hi + lo);
    Scalar s = 0;
    for (Index i = 0; i < rule.nodes.size(); ++i) s += rule.weights(i) * g(mid + half * rule.nodes(i));
    return half * s;
  };

  Scalar total = 0;
  const Scalar c0 = cuts.front();
  total += gl(Scalar(0), Scalar(1), [&](Scalar u) {
    const Scalar un1 = std::pow(u, Scalar(N - 1));
    const Scalar t = c0 * un1 * u;
    return integrand(t) * c0 * Scalar(N) * un1;
  });
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const Scalar x0 = std::log(cuts[p]);
    const Scalar x1 = std::log(cuts[p + 1]);
    const int panels = std::max(1, int(std::ceil((x1 - x0) / Scalar(2))));
    const Scalar wdt = (x1 - x0) / Scalar(panels);
    for (int q = 0; q < panels; ++q) {
      total += gl(x0 + q * wdt, x0 + (q + 1) * wdt, [&](Scalar x) {
        const Scalar t = std::exp(x);
        return integrand(t) * t;
      });
    }
  }
  const Scalar c1 = cuts.back();
  total += gl(Scalar(0), Scalar(1), [&](Scalar w) {
    const Scalar wN = std::pow(w, Scalar(N));
    return std::pow(c1, Scalar(1) + inv_n) * Scalar(N) * std::pow(w, Scalar(N - 2)) /
           ((c1 + a2 * wN) * (c1 + b2 * wN));
  });
  return total;
}

// Checks that the modes with zero singular value on both sides carry no
// weight (tangent inputs), as required by every metric formula.
template <typename Scalar>
void require_no_null_block(const FullSvd<Scalar>& f, const Mat<Scalar>& Z1h,
                           const Mat<Scalar>& Z2h, const char* what) {
  const Scalar scale = std::max({Scalar(1), Z1h.norm(), Z2h.norm()});
  for (Index j = f.rank; j < Z1h.cols(); ++j) {
    for (Index i = f.rank; i < Z1h.rows(); ++i) {
      if (std::abs(Z1h(i, j)) > Scalar(1e-8) * scale || std::abs(Z2h(i, j)) > Scalar(1e-8) * scale) {
        throw PreconditionError(std::string(what) +
                                ": input has a component with zero singular values on both sides");
      }
    }
  }
}

}  // namespace detail

/// g_W(Z1, Z2) = sin(pi/N)/pi * int_0^inf tr((tI + WW^T)^{-1} Z1 (tI + W^TW)^{-1} Z2^T) t^{1/N} dt.
///
/// In the SVD basis of W the trace separates into scalar integrals, one per
/// pair of distinct singular values, each evaluated by quadrature.
/// Throws AccuracyError when the estimated error exceeds qcfg.rel_tol.
template <typename Scalar>
Scalar metric_g_quadrature(const Mat<Scalar>& W, const Mat<Scalar>& Z1, const Mat<Scalar>& Z2, int N,
                           const QuadratureConfig& qcfg = {}) {
  if (N < 2) throw ParameterError("metric_g_quadrature: N must be >= 2");
  qcfg.validate();
  detail::require_shape(Z1, W.rows(), W.cols(), "metric_g_quadrature");
  detail::require_shape(Z2, W.rows(), W.cols(), "metric_g_quadrature");
  const auto f = full_svd(W);
  if (f.rank == 0) throw DegenerateRankError("metric_g_quadrature: W has numerical rank 0");
  const Mat<Scalar> Z1h = f.U.transpose() * Z1 * f.V;
  const Mat<Scalar> Z2h = f.U.transpose() * Z2 * f.V;
  detail::require_no_null_block(f, Z1h, Z2h, "metric_g_quadrature");

  const auto coarse = gauss_legendre<Scalar>(qcfg.n_nodes);
  const auto fine = gauss_legendre<Scalar>(2 * qcfg.n_nodes);
  const Index k = f.rank;
  // distinct levels: sigma_1..sigma_k and 0 (index k)
  Vec<Scalar> level(k + 1);
  for (Index i = 0; i < k; ++i) level(i) = f.sigma(i) * f.sigma(i);
  level(k) = 0;
  Mat<Scalar> weight = Mat<Scalar>::Zero(k + 1, k + 1);
  Mat<Scalar> err = Mat<Scalar>::Zero(k + 1, k + 1);
  const Scalar pre = std::sin(std::numbers::pi_v<Scalar> / Scalar(N)) / std::numbers::pi_v<Scalar>;
  const Scalar split = Scalar(qcfg.split_point);
  for (Index p = 0; p <= k; ++p) {
    for (Index q = p; q <= k; ++q) {
      if (p == k && q == k) continue;
      const Scalar hi = detail::resolvent_integral(level(p), level(q), N, split, fine);
      const Scalar lo = detail::resolvent_integral(level(p), level(q), N, split, coarse);
      weight(p, q) = weight(q, p) = pre * hi;
      err(p, q) = err(q, p) = pre * std::abs(hi - lo);
    }
  }

  Scalar g = 0, scale = 0, est = 0;
  for (Index j = 0; j < Z1h.cols(); ++j) {
    const Index q = std::min(j, k);
    for (Index i = 0; i < Z1h.rows(); ++i) {
      const Index p = std::min(i, k);
      if (p == k && q == k) continue;
      const Scalar prod = Z1h(i, j) * Z2h(i, j);
      g += prod * weight(p, q);
      scale += std::abs(prod) * weight(p, q);
      est += std::abs(prod) * err(p, q);
    }
  }
  if (est > Scalar(qcfg.rel_tol) * scale) {
    const double achieved = scale > 0 ? double(est / scale) : double(est);
    throw AccuracyError("metric_g_quadrature: quadrature did not reach rel_tol (achieved " +
                            std::to_string(achieved) + ")",
                        achieved);
  }
  return g;
}

/// N = 2 closed form: int_0^inf tr(e^{-t(WW^T)^{1/2}} Z1 e^{-t(W^TW)^{1/2}} Z2^T) dt,
/// which in the SVD basis weights entry (i, j) by 1/(sigma_i + sigma_j).
template <typename Scalar>
Scalar metric_g_N2(const Mat<Scalar>& W, const Mat<Scalar>& Z1, const Mat<Scalar>& Z2) {
  detail::require_shape(Z1, W.rows(), W.cols(), "metric_g_N2");
  detail::require_shape(Z2, W.rows(), W.cols(), "metric_g_N2");
  const auto f = full_svd(W);
  if (f.rank == 0) throw DegenerateRankError("metric_g_N2: W has numerical rank 0");
  const Mat<Scalar> Z1h = f.U.transpose() * Z1 * f.V;
  const Mat<Scalar> Z2h = f.U.transpose() * Z2 * f.V;
  detail::require_no_null_block(f, Z1h, Z2h, "metric_g_N2");
  Scalar g = 0;
  for (Index j = 0; j < Z1h.cols(); ++j) {
    for (Index i = 0; i < Z1h.rows(); ++i) {
      const Scalar s = f.left(i) + f.right(j);
      if (s > Scalar(0)) g += Z1h(i, j) * Z2h(i, j) / s;
    }
  }
  return g;
}

/// Riemannian gradient of L^1 for the metric g: A_W(grad L^1(W)).
/// The product flow is dW/dt = -riemannian_gradient(W).
template <typename Scalar>
Mat<Scalar> riemannian_gradient(const Mat<Scalar>& W, const DataSet<Scalar>& data, int N) {
  return apply_A_W(W, grad_L1(W, data), N);
}

}  // namespace linflow

#endif  // LINFLOW_GEOMETRY_HPP
