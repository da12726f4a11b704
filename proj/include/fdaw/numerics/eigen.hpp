#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "fdaw/error.hpp"

namespace fdaw {

template <typename Scalar>
struct SymEigen {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;                // descending
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;  // columns, orthonormal
};

// Flip each column so that its entry of largest magnitude is positive
// (earliest index on ties).
template <typename Derived>
void canonicalize_signs(Eigen::MatrixBase<Derived>& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index arg = 0;
    auto best = std::abs(vectors(0, k));
    for (Eigen::Index i = 1; i < vectors.rows(); ++i) {
      const auto m = std::abs(vectors(i, k));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (vectors(arg, k) < 0) vectors.col(k) *= -1;
  }
}

// Eigen-decomposition of a symmetric matrix. The input is symmetrized as
// (A + A^T)/2 first. Eigenvalues are returned in descending order.
template <typename Derived>
SymEigen<typename Derived::Scalar> sym_eigen(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols()) fail("sym_eigen: matrix is not square");
  if (!a.allFinite()) fail("sym_eigen: non-finite entries");

  const Matrix sym = (a + a.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numerical, "sym_eigen: solver did not converge");

  SymEigen<Scalar> out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  canonicalize_signs(out.vectors);
  return out;
}

}  // namespace fdaw
