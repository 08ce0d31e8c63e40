#ifndef LINFLOW_CORE_HPP
#define LINFLOW_CORE_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace linflow {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Error hierarchy. Every failure the library reports is one of these, so
// callers can catch linflow::Error to separate library errors from bugs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix dimensions do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An input violates a mathematical precondition (symmetry, full rank, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The requested object does not exist for the given rank budget.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Tangent-space machinery invoked at a rank-zero point.
class DegenerateRankError : public Error {
 public:
  using Error::Error;
};

/// A quadrature failed to reach its requested relative tolerance.
class AccuracyError : public Error {
 public:
  AccuracyError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

/// A flow produced a non-finite or exploding state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step, double time)
      : Error(what), step_(step), time_(time) {}
  long step() const { return step_; }
  double time() const { return time_; }

 private:
  long step_;
  double time_;
};

/// Combinatorial enumeration would exceed the configured limit.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Two trajectories cannot be compared (different time grids).
class ComparisonError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string dims_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Derived>
void require_shape(const Eigen::MatrixBase<Derived>& m, Index rows, Index cols,
                   const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + dims_str(rows, cols) +
                     ", got " + dims_str(m.rows(), m.cols()));
  }
}

}  // namespace detail

}  // namespace linflow

#endif  // LINFLOW_CORE_HPP
