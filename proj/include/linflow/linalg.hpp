#ifndef LINFLOW_LINALG_HPP
#define LINFLOW_LINALG_HPP

#include "linflow/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace linflow {

/// Relative threshold below which a singular value counts as zero.
inline constexpr double kRankTol = 1e-9;

/// sigma counts as nonzero iff sigma > kRankTol * max(sigma_max, 1).
template <typename Scalar>
Scalar rank_cutoff(Scalar sigma_max) {
  return Scalar(kRankTol) * std::max(sigma_max, Scalar(1));
}

template <typename Derived>
Index numerical_rank(const Eigen::MatrixBase<Derived>& sigma) {
  using Scalar = typename Derived::Scalar;
  if (sigma.size() == 0) return 0;
  const Scalar cut = rank_cutoff<Scalar>(sigma.maxCoeff());
  Index k = 0;
  for (Index i = 0; i < sigma.size(); ++i) k += sigma(i) > cut ? 1 : 0;
  return k;
}

/// Reduced SVD W = U diag(sigma) V^T keeping only the numerically nonzero
/// singular values (descending).
template <typename Scalar>
struct SvdFactors {
  Mat<Scalar> U;
  Vec<Scalar> sigma;
  Mat<Scalar> V;

  Index rank() const { return sigma.size(); }
  Mat<Scalar> reconstruct() const {
    return U * sigma.asDiagonal() * V.transpose();
  }
};

/// Full SVD with square orthogonal U (rows x rows) and V (cols x cols).
/// `sigma` has min(rows, cols) entries, descending, with numerically zero
/// values set to exactly 0; `rank` counts the nonzero ones.
template <typename Scalar>
struct FullSvd {
  Mat<Scalar> U;
  Vec<Scalar> sigma;
  Mat<Scalar> V;
  Index rank = 0;

  /// Singular value attached to row-space index i of U (0 beyond min dim).
  Scalar left(Index i) const { return i < sigma.size() ? sigma(i) : Scalar(0); }
  Scalar right(Index j) const { return j < sigma.size() ? sigma(j) : Scalar(0); }

  SvdFactors<Scalar> reduced() const {
    return {U.leftCols(rank), sigma.head(rank), V.leftCols(rank)};
  }
};

namespace detail {

// Sign convention: the first component of each left singular vector with
// magnitude above 1e-12 is positive. Keeps factorizations reproducible.
template <typename Scalar>
void canonicalize_signs(Mat<Scalar>& U, Mat<Scalar>& V, Index count) {
  for (Index i = 0; i < count; ++i) {
    for (Index r = 0; r < U.rows(); ++r) {
      if (std::abs(U(r, i)) > Scalar(1e-12)) {
        if (U(r, i) < 0) {
          U.col(i) *= Scalar(-1);
          V.col(i) *= Scalar(-1);
        }
        break;
      }
    }
  }
}

}  // namespace detail

template <typename Derived>
FullSvd<typename Derived::Scalar> full_svd(const Eigen::MatrixBase<Derived>& W) {
  using Scalar = typename Derived::Scalar;
  Eigen::JacobiSVD<Mat<Scalar>> svd(W.eval(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  FullSvd<Scalar> out{svd.matrixU(), svd.singularValues(), svd.matrixV(), 0};
  out.rank = numerical_rank(out.sigma);
  for (Index i = out.rank; i < out.sigma.size(); ++i) out.sigma(i) = 0;
  detail::canonicalize_signs(out.U, out.V, std::min(out.U.cols(), out.V.cols()));
  return out;
}

/// Zero all but the k largest singular values.
template <typename Scalar>
FullSvd<Scalar> truncate(FullSvd<Scalar> f, Index k) {
  for (Index i = k; i < f.sigma.size(); ++i) f.sigma(i) = 0;
  f.rank = std::min(f.rank, k);
  return f;
}

template <typename Derived>
SvdFactors<typename Derived::Scalar> reduced_svd(const Eigen::MatrixBase<Derived>& W) {
  return full_svd(W).reduced();
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending
/// order.
template <typename Scalar>
struct SymmetricEigen {
  Vec<Scalar> values;
  Mat<Scalar> vectors;
};

template <typename Derived>
SymmetricEigen<typename Derived::Scalar> symmetric_eigen_desc(
    const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(A.eval());
  const Index n = A.rows();
  SymmetricEigen<Scalar> out{es.eigenvalues().reverse(), es.eigenvectors().rowwise().reverse()};
  // sign-normalize eigenvectors the same way as singular vectors
  for (Index i = 0; i < n; ++i) {
    for (Index r = 0; r < n; ++r) {
      if (std::abs(out.vectors(r, i)) > Scalar(1e-12)) {
        if (out.vectors(r, i) < 0) out.vectors.col(i) *= Scalar(-1);
        break;
      }
    }
  }
  return out;
}

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& A, const char* what) {
  using Scalar = typename Derived::Scalar;
  if (A.rows() != A.cols()) throw ShapeError(std::string(what) + ": matrix is not square");
  const Scalar scale = std::max(Scalar(1), A.norm());
  if ((A - A.transpose()).norm() > Scalar(1e-10) * scale) {
    throw PreconditionError(std::string(what) + ": matrix is not symmetric");
  }
}

/// A^alpha for symmetric PSD A and real alpha >= 0, via eigendecomposition.
/// Eigenvalues within -1e-10 * max(1, |A|) of zero are clamped to zero.
template <typename Derived>
Mat<typename Derived::Scalar> psd_power(const Eigen::MatrixBase<Derived>& A,
                                        typename Derived::Scalar alpha) {
  using Scalar = typename Derived::Scalar;
  require_symmetric(A, "psd_power");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(A.eval());
  const Vec<Scalar>& lam = es.eigenvalues();
  const Scalar scale = std::max(Scalar(1), lam.cwiseAbs().maxCoeff());
  Vec<Scalar> p(lam.size());
  for (Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < Scalar(-1e-10) * scale) {
      throw PreconditionError("psd_power: matrix has a negative eigenvalue");
    }
    const Scalar l = std::max(lam(i), Scalar(0));
    p(i) = alpha == Scalar(0) ? Scalar(1) : std::pow(l, alpha);
  }
  return es.eigenvectors() * p.asDiagonal() * es.eigenvectors().transpose();
}

/// Principal p-th root of a symmetric positive semidefinite matrix.
template <typename Derived>
Mat<typename Derived::Scalar> principal_root(const Eigen::MatrixBase<Derived>& A, int p) {
  using Scalar = typename Derived::Scalar;
  if (p < 1) throw ParameterError("principal_root: p must be >= 1");
  return psd_power(A, Scalar(1) / Scalar(p));
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
template <typename Scalar>
struct GaussRule {
  Vec<Scalar> nodes;
  Vec<Scalar> weights;
};

template <typename Scalar>
GaussRule<Scalar> gauss_legendre(Index n) {
  if (n < 1) throw ParameterError("gauss_legendre: need at least one node");
  Mat<Scalar> J = Mat<Scalar>::Zero(n, n);
  for (Index i = 1; i < n; ++i) {
    const Scalar b = Scalar(i) / std::sqrt(Scalar(4 * i * i - 1));
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(J);
  GaussRule<Scalar> rule{es.eigenvalues(), Vec<Scalar>(n)};
  for (Index i = 0; i < n; ++i) {
    const Scalar v0 = es.eigenvectors()(0, i);
    rule.weights(i) = Scalar(2) * v0 * v0;
  }
  return rule;
}

/// Number of k-subsets of an n-set (as double, so large values do not wrap).
inline double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) c = c * double(n - k + i) / double(i);
  return std::round(c);
}

/// All k-subsets of {0, ..., n-1} in lexicographic order.
inline std::vector<std::vector<Index>> k_subsets(Index n, Index k) {
  std::vector<std::vector<Index>> out;
  if (k < 0 || k > n) return out;
  std::vector<Index> idx(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) idx[std::size_t(i)] = i;
  while (true) {
    out.push_back(idx);
    Index i = k - 1;
    while (i >= 0 && idx[std::size_t(i)] == n - k + i) --i;
    if (i < 0) break;
    ++idx[std::size_t(i)];
    for (Index j = i + 1; j < k; ++j) idx[std::size_t(j)] = idx[std::size_t(j - 1)] + 1;
  }
  return out;
}

}  // namespace linflow

#endif  // LINFLOW_LINALG_HPP
