#ifndef LINFLOW_INITIALIZERS_HPP
#define LINFLOW_INITIALIZERS_HPP

#include "linflow/core.hpp"
#include "linflow/linalg.hpp"
#include "linflow/model.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace linflow {

using Rng = std::mt19937_64;

enum class InitKind { BalancedFromProduct, OrthogonalBalanced, Gaussian, PathologicalAutoencoder };

/// How the per-layer standard deviation of Gaussian layers is chosen.
enum class StdRule {
  InvSqrtFanIn,   // 1/sqrt(d_{j-1})
  InvSqrtFanOut,  // 1/sqrt(d_j)
  Fixed,
};

/// Serializable description of an initial condition. `seed` fully determines
/// the random draws; `target` is only read by BalancedFromProduct.
template <typename Scalar>
struct InitSpec {
  InitKind kind = InitKind::OrthogonalBalanced;
  std::uint64_t seed = 0;
  StdRule std_rule = StdRule::InvSqrtFanIn;
  Scalar fixed_std = 1;
  Mat<Scalar> target;
};

/// Widths d_0 = d, d_j = round(r + (d - r)(j - 1)/(N - 1)) for j = 1..N.
/// Half-way cases round away from zero.
inline NetworkShape grid_dims(Index d, Index r, Index N) {
  if (N < 2) throw ParameterError("grid_dims: N must be >= 2");
  if (r < 1 || r > d) throw ParameterError("grid_dims: need 1 <= r <= d");
  std::vector<Index> dims{d};
  for (Index j = 1; j <= N; ++j) {
    const double v = double(r) + double(d - r) * double(j - 1) / double(N - 1);
    dims.push_back(Index(std::llround(v)));
  }
  return NetworkShape(std::move(dims));
}

template <typename Scalar>
Mat<Scalar> gaussian_matrix(Index rows, Index cols, Scalar stddev, Rng& rng) {
  std::normal_distribution<Scalar> dist(Scalar(0), stddev);
  Mat<Scalar> M(rows, cols);
  // column-major fill order is part of the reproducibility contract
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) M(r, c) = dist(rng);
  }
  return M;
}

/// Haar-distributed orthogonal n x n matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
template <typename Scalar>
Mat<Scalar> haar_orthogonal(Index n, Rng& rng) {
  Mat<Scalar> G = gaussian_matrix<Scalar>(n, n, Scalar(1), rng);
  Eigen::HouseholderQR<Mat<Scalar>> qr(G);
  Mat<Scalar> Q = qr.householderQ() * Mat<Scalar>::Identity(n, n);
  const Mat<Scalar>& R = qr.matrixQR();
  for (Index i = 0; i < n; ++i) {
    if (R(i, i) < 0) Q.col(i) *= Scalar(-1);
  }
  return Q;
}

/// Balanced factorization of W0: with W0 = U S V^T and l = rank(W0),
/// W_1 = S(sigma^{1/N}) V^T, interior W_j = S(sigma^{1/N}), W_N = U S(sigma^{1/N}),
/// where S(.) places the values on the leading diagonal of a rectangular
/// block of the required size.
template <typename Scalar>
WeightTuple<Scalar> balanced_from_product(const Mat<Scalar>& W0, const NetworkShape& shape) {
  detail::require_shape(W0, shape.output_dim(), shape.input_dim(), "balanced_from_product");
  const auto f = reduced_svd(W0);
  const Index l = f.rank();
  if (l > shape.min_width()) {
    throw InfeasibleError("balanced_from_product: rank of target exceeds the narrowest layer");
  }
  const Index N = shape.layers();
  const Vec<Scalar> root = f.sigma.array().pow(Scalar(1) / Scalar(N)).matrix();

  std::vector<Mat<Scalar>> layers;
  for (Index j = 1; j <= N; ++j) {
    Mat<Scalar> Wj = Mat<Scalar>::Zero(shape.dim(j), shape.dim(j - 1));
    if (j == 1) {
      Wj.topRows(l) = root.asDiagonal() * f.V.transpose();
    } else if (j == N) {
      Wj.leftCols(l) = f.U * root.asDiagonal();
    } else {
      Wj.topLeftCorner(l, l) = root.asDiagonal();
    }
    layers.push_back(std::move(Wj));
  }
  return WeightTuple<Scalar>(shape, std::move(layers));
}

/// W_j(0) = V_j I_{d_j, d_1} U_{j-1}^T with Haar-random orthogonal V_j
/// (d_j x d_j), U_j the first d_1 columns of V_j, and U_0 = I_{d_0, d_1}.
template <typename Scalar>
WeightTuple<Scalar> orthogonal_balanced(const NetworkShape& shape, Rng& rng) {
  const Index r = shape.dim(1);
  if (r != shape.min_width()) {
    throw ParameterError("orthogonal_balanced: d_1 must be the smallest width");
  }
  Mat<Scalar> U_prev = Mat<Scalar>::Identity(shape.dim(0), r);
  std::vector<Mat<Scalar>> layers;
  for (Index j = 1; j <= shape.layers(); ++j) {
    const Mat<Scalar> V = haar_orthogonal<Scalar>(shape.dim(j), rng);
    Mat<Scalar> U = V.leftCols(r);
    layers.push_back(U * U_prev.transpose());
    U_prev = std::move(U);
  }
  return WeightTuple<Scalar>(shape, std::move(layers));
}

template <typename Scalar>
Scalar layer_std(const NetworkShape& shape, Index j, StdRule rule, Scalar fixed) {
  switch (rule) {
    case StdRule::InvSqrtFanIn:
      return Scalar(1) / std::sqrt(Scalar(shape.dim(j - 1)));
    case StdRule::InvSqrtFanOut:
      return Scalar(1) / std::sqrt(Scalar(shape.dim(j)));
    case StdRule::Fixed:
      return fixed;
  }
  return fixed;
}

/// Independent N(0, sigma_j^2) entries per layer.
template <typename Scalar>
WeightTuple<Scalar> gaussian(const NetworkShape& shape, Rng& rng,
                             StdRule rule = StdRule::InvSqrtFanIn, Scalar fixed_std = 1) {
  std::vector<Mat<Scalar>> layers;
  for (Index j = 1; j <= shape.layers(); ++j) {
    layers.push_back(gaussian_matrix<Scalar>(shape.dim(j), shape.dim(j - 1),
                                             layer_std(shape, j, rule, fixed_std), rng));
  }
  return WeightTuple<Scalar>(shape, std::move(layers));
}

/// Two-layer autoencoder start W_1 = V_r^T, W_2 = -V_r, where V_r holds the
/// top-r eigenvectors of X X^T. Balanced, with u_i^T W(0) u_i = -1 for i <= r.
template <typename Scalar>
WeightTuple<Scalar> pathological_autoencoder(const Mat<Scalar>& X, Index r) {
  const Index d = X.rows();
  if (r < 1 || r > d) throw ParameterError("pathological_autoencoder: need 1 <= r <= d");
  const auto eig = symmetric_eigen_desc(Mat<Scalar>(X * X.transpose()));
  const Mat<Scalar> Vr = eig.vectors.leftCols(r);
  return WeightTuple<Scalar>(NetworkShape({d, r, d}), {Vr.transpose(), Mat<Scalar>(-Vr)});
}

/// Dispatch on an InitSpec. `X` is needed by PathologicalAutoencoder only.
template <typename Scalar>
WeightTuple<Scalar> make_initial(const InitSpec<Scalar>& spec, const NetworkShape& shape,
                                 const Mat<Scalar>& X = Mat<Scalar>()) {
  Rng rng(spec.seed);
  switch (spec.kind) {
    case InitKind::BalancedFromProduct:
      return balanced_from_product(spec.target, shape);
    case InitKind::OrthogonalBalanced:
      return orthogonal_balanced<Scalar>(shape, rng);
    case InitKind::Gaussian:
      return gaussian<Scalar>(shape, rng, spec.std_rule, spec.fixed_std);
    case InitKind::PathologicalAutoencoder:
      if (shape.layers() != 2) throw ParameterError("pathological start needs N = 2");
      return pathological_autoencoder(X, shape.dim(1));
  }
  throw ParameterError("make_initial: unknown init kind");
}

}  // namespace linflow

#endif  // LINFLOW_INITIALIZERS_HPP
