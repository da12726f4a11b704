#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/error.hpp"

namespace fdaw {

// Band depth (J = 2) and modified band depth over all unordered pairs of rows,
// containment inclusive. A curve is counted inside any band it helps form.

namespace detail {

// For each pair (i1 < i2) calls visit(i1, i2, j, inside_count) for every j,
// where inside_count is the number of columns with y_j inside the band.
template <typename Derived, typename Visit>
void for_each_band(const Eigen::MatrixBase<Derived>& y, Visit&& visit) {
  const Eigen::Index n = y.rows(), d = y.cols();
  for (Eigen::Index i1 = 0; i1 < n; ++i1)
    for (Eigen::Index i2 = i1 + 1; i2 < n; ++i2) {
      const auto lo = y.row(i1).cwiseMin(y.row(i2)).eval();
      const auto hi = y.row(i1).cwiseMax(y.row(i2)).eval();
      for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index inside = 0;
        for (Eigen::Index t = 0; t < d; ++t) inside += (y(j, t) >= lo[t] && y(j, t) <= hi[t]);
        visit(j, inside, d);
      }
    }
}

inline void check_depth_input(Eigen::Index n, Eigen::Index d) {
  if (n < 3) fail("depth needs at least 3 curves");
  if (d < 1) fail("depth needs at least one grid point");
}

}  // namespace detail

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> band_depth(const Eigen::MatrixBase<Derived>& y, int j = 2) {
  using Scalar = typename Derived::Scalar;
  if (j != 2) fail("band depth supports J = 2 only");
  detail::check_depth_input(y.rows(), y.cols());
  std::vector<long long> hits(y.rows(), 0);
  detail::for_each_band(y, [&](Eigen::Index row, Eigen::Index inside, Eigen::Index d) { hits[row] += inside == d; });
  const Scalar pairs = static_cast<Scalar>(y.rows() * (y.rows() - 1) / 2);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(y.rows());
  for (Eigen::Index i = 0; i < y.rows(); ++i) out[i] = static_cast<Scalar>(hits[i]) / pairs;
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> modified_band_depth(const Eigen::MatrixBase<Derived>& y) {
  using Scalar = typename Derived::Scalar;
  detail::check_depth_input(y.rows(), y.cols());
  // integer counts keep the result exact up to the final division
  std::vector<long long> inside_total(y.rows(), 0);
  detail::for_each_band(y, [&](Eigen::Index row, Eigen::Index inside, Eigen::Index) { inside_total[row] += inside; });
  const Scalar denom = static_cast<Scalar>(y.rows() * (y.rows() - 1) / 2) * static_cast<Scalar>(y.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(y.rows());
  for (Eigen::Index i = 0; i < y.rows(); ++i) out[i] = static_cast<Scalar>(inside_total[i]) / denom;
  return out;
}

struct DepthResult {
  Eigen::VectorXd depths;
  std::vector<Eigen::Index> order;  // deepest first, ties by index
  Eigen::Index median_index{0};
  std::vector<Eigen::Index> outlier_indices;
  double threshold{0};
};

// Type-7 sample quantile (linear interpolation between order statistics).
inline double sample_quantile(std::vector<double> v, double p) {
  if (v.empty()) fail("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Outliers: depth < max(0, Q1 - factor * IQR).
inline DepthResult depth_order(const Eigen::VectorXd& depths, double factor = 1.5) {
  DepthResult out;
  out.depths = depths;
  const auto n = static_cast<std::size_t>(depths.size());
  if (n == 0) return out;
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), Eigen::Index{0});
  std::stable_sort(out.order.begin(), out.order.end(), [&](Eigen::Index a, Eigen::Index b) { return depths[a] > depths[b]; });
  out.median_index = out.order.front();
  const std::vector<double> v(depths.data(), depths.data() + n);
  const double q1 = sample_quantile(v, 0.25), q3 = sample_quantile(v, 0.75);
  out.threshold = std::max(0.0, q1 - factor * (q3 - q1));
  for (std::size_t i = 0; i < n; ++i)
    if (depths[static_cast<Eigen::Index>(i)] < out.threshold) out.outlier_indices.push_back(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace fdaw
