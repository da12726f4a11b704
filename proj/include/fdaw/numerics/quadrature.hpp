#pragma once

#include <Eigen/Dense>

#include "fdaw/error.hpp"

namespace fdaw {

// Trapezoid-rule weights for strictly increasing abscissae.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> quadrature_weights(
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& points) {
  const Eigen::Index n = points.size();
  if (n < 2) fail("quadrature_weights: need at least 2 points");
  for (Eigen::Index k = 1; k < n; ++k)
    if (!(points[k] > points[k - 1])) fail("quadrature_weights: points must be strictly increasing");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w(n);
  w[0] = (points[1] - points[0]) / Scalar(2);
  w[n - 1] = (points[n - 1] - points[n - 2]) / Scalar(2);
  for (Eigen::Index k = 1; k + 1 < n; ++k) w[k] = (points[k + 1] - points[k - 1]) / Scalar(2);
  return w;
}

inline Eigen::VectorXd quadrature_weights(const Eigen::VectorXd& points) {
  return quadrature_weights<double>(points);
}

// n equi-spaced points on [a, b], both endpoints included.
inline Eigen::VectorXd equispaced(double a, double b, Eigen::Index n) {
  return Eigen::VectorXd::LinSpaced(n, a, b);
}

}  // namespace fdaw
