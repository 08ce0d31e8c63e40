#ifndef LINFLOW_MODEL_HPP
#define LINFLOW_MODEL_HPP

// Deep linear networks: layer tuples, data, the two loss functionals and
// their gradients, and the balancedness quantities conserved by the flow.

#include "linflow/core.hpp"
#include "linflow/linalg.hpp"

#include <algorithm>
#include <vector>

namespace linflow {

/// Layer widths d_0, ..., d_N of a network with N >= 2 layers.
class NetworkShape {
 public:
  NetworkShape() = default;
  explicit NetworkShape(std::vector<Index> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 3) throw ParameterError("NetworkShape: need N >= 2 layers (3 widths)");
    for (Index d : dims_) {
      if (d < 1) throw ParameterError("NetworkShape: every width must be >= 1");
    }
  }

  /// Number of layers N.
  Index layers() const { return Index(dims_.size()) - 1; }
  Index dim(Index j) const { return dims_.at(std::size_t(j)); }
  Index input_dim() const { return dims_.front(); }
  Index output_dim() const { return dims_.back(); }
  /// r = min over all widths.
  Index min_width() const { return *std::min_element(dims_.begin(), dims_.end()); }
  const std::vector<Index>& dims() const { return dims_; }

  bool operator==(const NetworkShape& o) const { return dims_ == o.dims_; }

 private:
  std::vector<Index> dims_;
};

/// Layers W_1, ..., W_N, stored zero-based: layer(j-1) is d_j x d_{j-1}.
template <typename Scalar>
class WeightTuple {
 public:
  WeightTuple() = default;
  WeightTuple(NetworkShape shape, std::vector<Mat<Scalar>> layers)
      : shape_(std::move(shape)), layers_(std::move(layers)) {
    if (Index(layers_.size()) != shape_.layers()) {
      throw ShapeError("WeightTuple: layer count does not match shape");
    }
    for (Index j = 0; j < shape_.layers(); ++j) {
      detail::require_shape(layers_[std::size_t(j)], shape_.dim(j + 1), shape_.dim(j),
                            "WeightTuple layer");
    }
  }

  static WeightTuple zeros(const NetworkShape& shape) {
    std::vector<Mat<Scalar>> ls;
    for (Index j = 0; j < shape.layers(); ++j) {
      ls.push_back(Mat<Scalar>::Zero(shape.dim(j + 1), shape.dim(j)));
    }
    return WeightTuple(shape, std::move(ls));
  }

  const NetworkShape& shape() const { return shape_; }
  Index size() const { return Index(layers_.size()); }
  const Mat<Scalar>& operator[](Index j) const { return layers_[std::size_t(j)]; }
  Mat<Scalar>& operator[](Index j) { return layers_[std::size_t(j)]; }
  const std::vector<Mat<Scalar>>& layers() const { return layers_; }

  WeightTuple& operator+=(const WeightTuple& o) {
    for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j] += o.layers_[j];
    return *this;
  }
  WeightTuple& operator*=(Scalar a) {
    for (auto& l : layers_) l *= a;
    return *this;
  }
  friend WeightTuple operator+(WeightTuple a, const WeightTuple& b) { return a += b; }
  friend WeightTuple operator-(WeightTuple a, const WeightTuple& b) {
    for (std::size_t j = 0; j < a.layers_.size(); ++j) a.layers_[j] -= b.layers_[j];
    return a;
  }
  friend WeightTuple operator*(Scalar s, WeightTuple a) { return a *= s; }

  /// Frobenius norm of the stacked layers.
  Scalar norm() const {
    Scalar s = 0;
    for (const auto& l : layers_) s += l.squaredNorm();
    return std::sqrt(s);
  }
  bool all_finite() const {
    return std::all_of(layers_.begin(), layers_.end(),
                       [](const Mat<Scalar>& l) { return l.allFinite(); });
  }

 private:
  NetworkShape shape_;
  std::vector<Mat<Scalar>> layers_;
};

/// Training data X (d_x x m), Y (d_y x m) with cached Gram quantities.
template <typename Scalar>
class DataSet {
 public:
  DataSet() = default;
  DataSet(Mat<Scalar> X, Mat<Scalar> Y) : X_(std::move(X)), Y_(std::move(Y)) {
    if (X_.cols() != Y_.cols()) throw ShapeError("DataSet: X and Y need the same sample count");
    gram_ = X_ * X_.transpose();
    gram_ = Scalar(0.5) * (gram_ + gram_.transpose()).eval();
    eig_ = symmetric_eigen_desc(gram_);
    const Scalar lmax = eig_.values(0);
    const Scalar lmin = eig_.values(eig_.values.size() - 1);
    if (!(lmin > Scalar(1e-10) * lmax)) {
      throw PreconditionError("DataSet: X X^T is not of full rank");
    }
    const Mat<Scalar>& E = eig_.vectors;
    gram_sqrt_ = E * eig_.values.cwiseSqrt().asDiagonal() * E.transpose();
    gram_inv_sqrt_ = E * eig_.values.cwiseSqrt().cwiseInverse().asDiagonal() * E.transpose();
    yxt_ = Y_ * X_.transpose();
  }

  /// Autoencoder data: Y = X.
  static DataSet autoencoder(const Mat<Scalar>& X) { return DataSet(X, X); }

  const Mat<Scalar>& X() const { return X_; }
  const Mat<Scalar>& Y() const { return Y_; }
  Index dx() const { return X_.rows(); }
  Index dy() const { return Y_.rows(); }
  /// X X^T
  const Mat<Scalar>& gram() const { return gram_; }
  const Mat<Scalar>& gram_sqrt() const { return gram_sqrt_; }
  const Mat<Scalar>& gram_inv_sqrt() const { return gram_inv_sqrt_; }
  /// Y X^T
  const Mat<Scalar>& yxt() const { return yxt_; }
  /// Eigenvalues of X X^T, descending, with matching orthonormal eigenvectors.
  const SymmetricEigen<Scalar>& gram_eigen() const { return eig_; }

 private:
  Mat<Scalar> X_, Y_, gram_, gram_sqrt_, gram_inv_sqrt_, yxt_;
  SymmetricEigen<Scalar> eig_;
};

/// End-to-end matrix W = W_N ... W_1 with its numerical rank.
template <typename Scalar>
struct ProductState {
  Mat<Scalar> W;
  Index rank_estimate = 0;

  static ProductState of(Mat<Scalar> W) {
    ProductState s{std::move(W), 0};
    if (s.W.size() > 0) {
      Eigen::JacobiSVD<Mat<Scalar>> svd(s.W);
      s.rank_estimate = numerical_rank(svd.singularValues());
    }
    return s;
  }
};

template <typename Scalar>
ProductState<Scalar> product(const WeightTuple<Scalar>& w) {
  Mat<Scalar> W = w[0];
  for (Index j = 1; j < w.size(); ++j) W = (w[j] * W).eval();
  return ProductState<Scalar>::of(std::move(W));
}

namespace detail {

template <typename Scalar>
void require_compatible(const Mat<Scalar>& W, const DataSet<Scalar>& data) {
  require_shape(W, data.dy(), data.dx(), "product matrix vs data");
}

template <typename Scalar>
Mat<Scalar> product_matrix(const WeightTuple<Scalar>& w) {
  Mat<Scalar> W = w[0];
  for (Index j = 1; j < w.size(); ++j) W = (w[j] * W).eval();
  return W;
}

}  // namespace detail

/// L^1(W) = 1/2 ||Y - W X||_F^2
template <typename Scalar>
Scalar loss_L1(const Mat<Scalar>& W, const DataSet<Scalar>& data) {
  detail::require_compatible(W, data);
  return Scalar(0.5) * (data.Y() - W * data.X()).squaredNorm();
}

template <typename Scalar>
Scalar loss_L1(const ProductState<Scalar>& W, const DataSet<Scalar>& data) {
  return loss_L1(W.W, data);
}

/// L^N(W_1, ..., W_N) = L^1(W_N ... W_1)
template <typename Scalar>
Scalar loss_LN(const WeightTuple<Scalar>& w, const DataSet<Scalar>& data) {
  return loss_L1(detail::product_matrix(w), data);
}

/// grad L^1(W) = W X X^T - Y X^T
template <typename Scalar>
Mat<Scalar> grad_L1(const Mat<Scalar>& W, const DataSet<Scalar>& data) {
  detail::require_compatible(W, data);
  return W * data.gram() - data.yxt();
}

/// Gradient of L^N with respect to layer j (one-based, 1 <= j <= N):
/// W_{j+1}^T ... W_N^T grad L^1(W) W_1^T ... W_{j-1}^T.
template <typename Scalar>
Mat<Scalar> grad_LN_layer(Index j, const WeightTuple<Scalar>& w, const DataSet<Scalar>& data) {
  const Index N = w.size();
  if (j < 1 || j > N) throw ParameterError("grad_LN_layer: layer index out of range");
  Mat<Scalar> G = grad_L1(detail::product_matrix(w), data);
  for (Index i = N; i > j; --i) G = (w[i - 1].transpose() * G).eval();
  for (Index i = 1; i < j; ++i) G = (G * w[i - 1].transpose()).eval();
  return G;
}

/// All layer gradients at once, sharing prefix/suffix products.
template <typename Scalar>
WeightTuple<Scalar> grad_LN(const WeightTuple<Scalar>& w, const DataSet<Scalar>& data) {
  const Index N = w.size();
  // prefix[j] = W_j ... W_1 (prefix[0] = identity, implicit)
  std::vector<Mat<Scalar>> prefix(static_cast<std::size_t>(N) + 1);
  prefix[1] = w[0];
  for (Index j = 2; j <= N; ++j) prefix[std::size_t(j)] = w[j - 1] * prefix[std::size_t(j - 1)];
  const Mat<Scalar> G = grad_L1(prefix[std::size_t(N)], data);

  std::vector<Mat<Scalar>> grads;
  grads.resize(std::size_t(N));
  // left = W_{j+1}^T ... W_N^T G, built from j = N downwards
  Mat<Scalar> left = G;
  for (Index j = N; j >= 1; --j) {
    grads[std::size_t(j - 1)] = j == 1 ? left : Mat<Scalar>(left * prefix[std::size_t(j - 1)].transpose());
    if (j > 1) left = (w[j - 1].transpose() * left).eval();
  }
  return WeightTuple<Scalar>(w.shape(), std::move(grads));
}

/// D_j = W_{j+1}^T W_{j+1} - W_j W_j^T for j = 1, ..., N-1.
template <typename Scalar>
std::vector<Mat<Scalar>> conserved_differences(const WeightTuple<Scalar>& w) {
  std::vector<Mat<Scalar>> out;
  for (Index j = 0; j + 1 < w.size(); ++j) {
    out.push_back(w[j + 1].transpose() * w[j + 1] - w[j] * w[j].transpose());
  }
  return out;
}

/// max_j ||D_j||_F; zero exactly for balanced tuples.
template <typename Scalar>
Scalar balancedness_residual(const WeightTuple<Scalar>& w) {
  Scalar r = 0;
  for (const auto& D : conserved_differences(w)) r = std::max(r, D.norm());
  return r;
}

}  // namespace linflow

#endif  // LINFLOW_MODEL_HPP
