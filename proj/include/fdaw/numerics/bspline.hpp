#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/error.hpp"

namespace fdaw {

// B-spline basis of a given degree on [a, b]. Boundary knots are extended
// outward with the spacing of the adjacent interior interval (P-spline
// convention), so for uniform knots the coefficients of a linear function
// are themselves linear in the basis index and a second-difference penalty
// leaves linear fits untouched. Partition of unity holds on [a, b].
template <typename Scalar = double>
class SplineBasis {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SplineBasis() = default;

  SplineBasis(Scalar a, Scalar b, std::vector<Scalar> interior_knots, int degree = 3)
      : a_(a), b_(b), degree_(degree), interior_(std::move(interior_knots)) {
    if (!(b > a)) fail("SplineBasis: empty domain");
    if (degree < 0) fail("SplineBasis: negative degree");
    for (std::size_t k = 0; k < interior_.size(); ++k) {
      if (!(interior_[k] > a && interior_[k] < b)) fail("SplineBasis: interior knot outside (a, b)");
      if (k > 0 && !(interior_[k] > interior_[k - 1])) fail("SplineBasis: knots must be strictly increasing");
    }
    const Scalar h_left = interior_.empty() ? b - a : interior_.front() - a;
    const Scalar h_right = interior_.empty() ? b - a : b - interior_.back();
    knots_.reserve(interior_.size() + 2 * degree + 2);
    for (int k = degree; k >= 1; --k) knots_.push_back(a - Scalar(k) * h_left);
    knots_.push_back(a);
    knots_.insert(knots_.end(), interior_.begin(), interior_.end());
    knots_.push_back(b);
    for (int k = 1; k <= degree; ++k) knots_.push_back(b + Scalar(k) * h_right);
  }

  // Equally spaced interior knots giving exactly n_basis functions.
  static SplineBasis uniform(Scalar a, Scalar b, int n_basis, int degree = 3) {
    const int n_interior = n_basis - degree - 1;
    if (n_interior < 0) fail("SplineBasis: n_basis must exceed degree");
    std::vector<Scalar> knots(n_interior);
    for (int k = 0; k < n_interior; ++k) knots[k] = a + (b - a) * Scalar(k + 1) / Scalar(n_interior + 1);
    return SplineBasis(a, b, std::move(knots), degree);
  }

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(interior_.size()) + degree_ + 1; }
  Scalar lower() const { return a_; }
  Scalar upper() const { return b_; }
  const std::vector<Scalar>& interior_knots() const { return interior_; }

  // Writes the degree+1 possibly-nonzero basis values at x into `values` and
  // returns the index of the first one.
  int nonzero(Scalar x, Scalar* values) const {
    const Scalar tol = Scalar(1e-10) * (b_ - a_);
    if (!(x >= a_ - tol && x <= b_ + tol)) fail("SplineBasis: point outside domain [" + num(a_) + ", " + num(b_) + "]");
    x = std::clamp(x, a_, b_);
    // knots_[span] <= x < knots_[span + 1], with x == b assigned to the last interval
    const int first = degree_;
    const int last = degree_ + static_cast<int>(interior_.size());
    const auto it = std::upper_bound(knots_.begin() + first, knots_.begin() + last + 1, x);
    const int span = std::min(static_cast<int>(it - knots_.begin()) - 1, last);

    std::vector<Scalar> left(degree_ + 1), right(degree_ + 1);
    values[0] = Scalar(1);
    for (int j = 1; j <= degree_; ++j) {
      left[j] = x - knots_[span + 1 - j];
      right[j] = knots_[span + j] - x;
      Scalar saved = 0;
      for (int r = 0; r < j; ++r) {
        const Scalar temp = values[r] / (right[r + 1] + left[j - r]);
        values[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      values[j] = saved;
    }
    return span - degree_;
  }

  Vector evaluate(Scalar x) const {
    Vector row = Vector::Zero(size());
    std::vector<Scalar> v(degree_ + 1);
    const int first = nonzero(x, v.data());
    for (int j = 0; j <= degree_; ++j) row[first + j] = v[j];
    return row;
  }

  // |points| x size() design matrix.
  Matrix design(const Eigen::Ref<const Vector>& points) const {
    Matrix out = Matrix::Zero(points.size(), size());
    std::vector<Scalar> v(degree_ + 1);
    for (Eigen::Index i = 0; i < points.size(); ++i) {
      const int first = nonzero(points[i], v.data());
      for (int j = 0; j <= degree_; ++j) out(i, first + j) = v[j];
    }
    return out;
  }

 private:
  static std::string num(Scalar v) { return std::to_string(static_cast<double>(v)); }

  Scalar a_{0}, b_{1};
  int degree_{3};
  std::vector<Scalar> interior_;
  std::vector<Scalar> knots_;
};

// Default basis size for a grid of D points: min(35, ceil(D/4) + 4).
inline int default_basis_size(Eigen::Index n_points) {
  return std::min<int>(35, static_cast<int>((n_points + 3) / 4) + 4);
}

// (n - order) x n difference operator.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> difference_matrix(int n, int order) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix d = Matrix::Identity(n, n);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    if (rows <= 0) return Matrix::Zero(0, n);
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  return d;
}

template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> difference_penalty(int n, int order) {
  const auto d = difference_matrix<Scalar>(n, order);
  return d.transpose() * d;
}

}  // namespace fdaw
