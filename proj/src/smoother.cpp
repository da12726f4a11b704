#include "fdaw/numerics/smoother.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "fdaw/error.hpp"

namespace fdaw {

Eigen::VectorXd gcv_lambda_grid() {
  constexpr int n = 50;
  Eigen::VectorXd grid(n);
  for (int k = 0; k < n; ++k) grid[k] = std::pow(10.0, -8.0 + 12.0 * k / (n - 1));
  return grid;
}

PenalizedSolution penalized_least_squares(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double yty,
                                          double n_obs, const Eigen::MatrixXd& penalty,
                                          std::optional<double> lambda) {
  const Eigen::Index p = gram.rows();
  if (lambda && !(*lambda >= 0)) fail("smoothing parameter must be non-negative");

  // Pencil gram u = theta (gram + scale * penalty) u. With U'(gram + scale P)U = I,
  // (gram + lambda P)^{-1} = U diag(1 / (theta + (lambda/scale)(1 - theta))) U'.
  const double penalty_trace = penalty.trace();
  const double scale = penalty_trace > 0 ? gram.trace() / penalty_trace : 1.0;
  Eigen::MatrixXd pencil = gram + scale * penalty;
  if (Eigen::LLT<Eigen::MatrixXd>(pencil).info() != Eigen::Success) {
    const double ridge = 1e-10 * std::max(pencil.trace() / static_cast<double>(p), 1e-300);
    spdlog::warn("penalized fit: data do not identify the penalty null space; adding ridge {}", ridge);
    pencil.diagonal().array() += ridge;
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(gram, pencil, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) fail(ErrorKind::numerical, "penalized fit: generalized eigen-solver failed");
  // Penalty null-space directions have theta = 1 exactly; rounding would let
  // large lambda leak into them.
  Eigen::VectorXd theta = ges.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
  for (auto& th : theta)
    if (1.0 - th < 1e-10) th = 1.0;
  const Eigen::MatrixXd& u = ges.eigenvectors();
  const Eigen::VectorXd z = u.transpose() * rhs;
  const Eigen::VectorXd z2 = z.cwiseAbs2();

  auto gains = [&](double lam) {
    const double mu = lam / scale;
    return (theta.array() + mu * (1.0 - theta.array())).inverse().matrix().eval();
  };
  auto gcv_at = [&](double lam) {
    const Eigen::VectorXd g = gains(lam);
    const double edf = (theta.array() * g.array()).sum();
    const double rss =
        std::max(0.0, yty - 2.0 * (g.array() * z2.array()).sum() + (g.array().square() * theta.array() * z2.array()).sum());
    const double denom = n_obs - edf;
    if (!(denom > 1e-8 * n_obs)) return std::numeric_limits<double>::max();
    return n_obs * rss / (denom * denom);
  };

  PenalizedSolution out;
  if (lambda) {
    out.lambda = *lambda;
    if (out.lambda == 0.0 && theta.minCoeff() < 1e-12)
      fail(ErrorKind::numerical, "singular system at lambda = 0; use a positive smoothing parameter or auto");
  } else {
    const Eigen::VectorXd grid = gcv_lambda_grid();
    out.gcv_scores.resize(grid.size());
    Eigen::Index best = 0;
    for (Eigen::Index k = 0; k < grid.size(); ++k) {
      out.gcv_scores[k] = gcv_at(grid[k]);
      if (out.gcv_scores[k] < out.gcv_scores[best]) best = k;
    }
    out.lambda = grid[best];
  }
  const Eigen::VectorXd g = gains(out.lambda);
  out.edf = (theta.array() * g.array()).sum();
  out.coef = u * (g.array() * z.array()).matrix();
  return out;
}

SplineBasis<> default_basis(const Eigen::VectorXd& grid) {
  return SplineBasis<>::uniform(grid.minCoeff(), grid.maxCoeff(), default_basis_size(grid.size()));
}

Eigen::VectorXd SmoothFit1D::evaluate(const Eigen::VectorXd& points) const {
  return basis.design(points) * coef;
}

SmoothFit1D smooth_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Smoother1D& smoother) {
  if (x.size() != y.size() || x.size() != w.size()) fail("smooth_1d: x, y, w lengths differ");
  if (x.size() == 0) fail("smooth_1d: no observations");
  const auto& basis = smoother.basis;
  const int p = basis.size();
  const int deg = basis.degree();

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  double yty = 0;
  double n_obs = 0;
  std::vector<double> v(deg + 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(w[i] > 0)) continue;
    const int first = basis.nonzero(x[i], v.data());
    for (int a = 0; a <= deg; ++a) {
      rhs[first + a] += w[i] * v[a] * y[i];
      for (int b = 0; b <= deg; ++b) gram(first + a, first + b) += w[i] * v[a] * v[b];
    }
    yty += w[i] * y[i] * y[i];
    n_obs += 1;
  }
  if (smoother.lambda && *smoother.lambda == 0.0 && n_obs < p)
    fail(ErrorKind::numerical, "smooth_1d: fewer observations than basis functions; lambda must be positive");

  const auto sol = penalized_least_squares(gram, rhs, yty, n_obs, difference_penalty(p, smoother.penalty_order),
                                           smoother.lambda);
  return SmoothFit1D{basis, sol.coef, sol.lambda, sol.edf, sol.gcv_scores};
}

double SmoothFit2D::evaluate(double s, double t) const {
  return s_basis.evaluate(s).dot(coef * t_basis.evaluate(t));
}

Eigen::MatrixXd SmoothFit2D::evaluate_grid(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const {
  return s_basis.design(s) * coef * t_basis.design(t).transpose();
}

Eigen::Index gcv_scan(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double yty, double n_obs,
                      const Eigen::MatrixXd& penalty, const Eigen::MatrixXd& fixed_penalty) {
  const Eigen::VectorXd grid = gcv_lambda_grid();
  Eigen::Index best = 0;
  double best_score = std::numeric_limits<double>::max();
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram + fixed_penalty + grid[k] * penalty);
    const Eigen::VectorXd c = ldlt.solve(rhs);
    const double rss = std::max(0.0, yty - 2.0 * c.dot(rhs) + c.dot(gram * c));
    const double edf = ldlt.solve(gram).trace();
    const double denom = n_obs - edf;
    const double score = denom > 1e-8 * n_obs ? n_obs * rss / (denom * denom) : std::numeric_limits<double>::max();
    if (std::isfinite(score) && score < best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

std::pair<Eigen::Index, Eigen::VectorXd> cross_validate_lambda(const std::vector<Eigen::MatrixXd>& fold_gram,
                                                               const std::vector<Eigen::VectorXd>& fold_rhs,
                                                               const std::vector<double>& fold_yty,
                                                               const Eigen::MatrixXd& penalty,
                                                               const Eigen::MatrixXd& fixed_penalty) {
  if (fold_gram.size() < 2) fail("cross-validation needs at least 2 folds");
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(penalty.rows(), penalty.cols());
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(penalty.rows());
  for (std::size_t f = 0; f < fold_gram.size(); ++f) {
    gram += fold_gram[f];
    rhs += fold_rhs[f];
  }
  const Eigen::VectorXd grid = gcv_lambda_grid();
  const auto n_folds = static_cast<Eigen::Index>(fold_gram.size());
  Eigen::MatrixXd fold_err(grid.size(), n_folds);
  Eigen::VectorXd scores(grid.size());
  Eigen::Index best = 0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    for (Eigen::Index f = 0; f < n_folds; ++f) {
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram - fold_gram[f] + fixed_penalty + grid[k] * penalty);
      const Eigen::VectorXd c = ldlt.solve(rhs - fold_rhs[f]);
      fold_err(k, f) = fold_yty[f] - 2.0 * c.dot(fold_rhs[f]) + c.dot(fold_gram[f] * c);
    }
    const double err = fold_err.row(k).sum();
    scores[k] = std::isfinite(err) ? err : std::numeric_limits<double>::max();
    if (scores[k] < scores[best]) best = k;
  }
  // One-standard-error rule: the smoothest value within one standard error of
  // the minimum.
  const Eigen::RowVectorXd e = fold_err.row(best);
  const double mean = e.mean();
  const double sd = std::sqrt((e.array() - mean).square().sum() / static_cast<double>(n_folds - 1));
  const double bound = scores[best] + std::sqrt(static_cast<double>(n_folds)) * sd;
  Eigen::Index chosen = best;
  for (Eigen::Index k = best + 1; k < grid.size(); ++k)
    if (scores[k] <= bound) chosen = k;
  return {chosen, scores};
}

SmoothFit2D smooth_2d(const Eigen::VectorXd& s, const Eigen::VectorXd& t, const Eigen::VectorXd& values,
                      const std::vector<bool>& include, const Smoother2D& smoother) {
  if (s.size() != t.size() || s.size() != values.size() || static_cast<std::size_t>(s.size()) != include.size())
    fail("smooth_2d: node, value and mask lengths differ");
  const bool grouped = !smoother.cv_groups.empty() && !smoother.lambda && !smoother.axis_lambdas;
  if (!smoother.cv_groups.empty() && static_cast<std::size_t>(s.size()) != smoother.cv_groups.size())
    fail("smooth_2d: group labels and nodes differ in length");
  const auto& bs = smoother.s_basis;
  const auto& bt = smoother.t_basis;
  const int ps = bs.size(), pt = bt.size(), p = ps * pt;
  const int ds = bs.degree(), dt = bt.degree();

  int n_folds = 0;
  if (grouped) {
    std::set<int> labels(smoother.cv_groups.begin(), smoother.cv_groups.end());
    if (*labels.begin() < 0) fail("smooth_2d: negative group label");
    n_folds = static_cast<int>(std::min<std::size_t>(5, labels.size()));
    if (n_folds < 2) fail("smooth_2d: cross-validation needs at least 2 groups");
  }
  std::vector<Eigen::MatrixXd> fold_gram(n_folds, Eigen::MatrixXd::Zero(p, p));
  std::vector<Eigen::VectorXd> fold_rhs(n_folds, Eigen::VectorXd::Zero(p));
  std::vector<double> fold_yty(n_folds, 0.0);

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  double yty = 0;
  double n_obs = 0;
  std::vector<double> vs(ds + 1), vt(dt + 1);
  std::vector<int> idx((ds + 1) * (dt + 1));
  std::vector<double> val((ds + 1) * (dt + 1));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!include[i]) continue;
    const int fs = bs.nonzero(s[i], vs.data());
    const int ft = bt.nonzero(t[i], vt.data());
    int m = 0;
    for (int a = 0; a <= ds; ++a)
      for (int b = 0; b <= dt; ++b, ++m) {
        idx[m] = (fs + a) * pt + (ft + b);
        val[m] = vs[a] * vt[b];
      }
    Eigen::MatrixXd& g = grouped ? fold_gram[smoother.cv_groups[i] % n_folds] : gram;
    Eigen::VectorXd& r = grouped ? fold_rhs[smoother.cv_groups[i] % n_folds] : rhs;
    for (int a = 0; a < m; ++a) {
      r[idx[a]] += val[a] * values[i];
      for (int b = 0; b < m; ++b) g(idx[a], idx[b]) += val[a] * val[b];
    }
    if (grouped) fold_yty[smoother.cv_groups[i] % n_folds] += values[i] * values[i];
    yty += values[i] * values[i];
    n_obs += 1;
  }
  if (n_obs == 0) fail("smooth_2d: all nodes are masked out");
  if (n_obs < 10) fail("smooth_2d: fewer than 10 nodes included");
  for (int f = 0; f < n_folds; ++f) {
    gram += fold_gram[f];
    rhs += fold_rhs[f];
  }

  const Eigen::MatrixXd ps_pen = difference_penalty(ps, smoother.penalty_order);
  const Eigen::MatrixXd pt_pen = difference_penalty(pt, smoother.penalty_order);
  Eigen::MatrixXd s_penalty = Eigen::MatrixXd::Zero(p, p), t_penalty = Eigen::MatrixXd::Zero(p, p);
  for (int a = 0; a < ps; ++a)
    for (int b = 0; b < ps; ++b)
      if (ps_pen(a, b) != 0)
        for (int c = 0; c < pt; ++c) s_penalty(a * pt + c, b * pt + c) = ps_pen(a, b);
  for (int a = 0; a < ps; ++a)
    for (int c = 0; c < pt; ++c)
      for (int d = 0; d < pt; ++d)
        if (pt_pen(c, d) != 0) t_penalty(a * pt + c, a * pt + d) = pt_pen(c, d);

  std::optional<std::pair<double, double>> axis = smoother.axis_lambdas;
  std::optional<double> lambda = smoother.lambda;
  Eigen::VectorXd cv_scores;
  if (grouped) {
    // Held-out groups decide the T axis; within-node smoothness along s is
    // left to GCV, which the group CV cannot resolve.
    const Eigen::VectorXd grid = gcv_lambda_grid();
    const Eigen::MatrixXd none = Eigen::MatrixXd::Zero(p, p);
    // The group CV scans the grid relative to tr(gram) / tr(penalty), so its
    // range does not depend on how many nodes each group contributes.
    const double scale = gram.trace() / (s_penalty + t_penalty).trace();
    double ls = 0, lt = 0;
    if (smoother.fixed_s_lambda) {
      ls = *smoother.fixed_s_lambda;
      if (!(ls >= 0)) fail("smooth_2d: negative smoothing parameter");
      const auto t_scan = cross_validate_lambda(fold_gram, fold_rhs, fold_yty, scale * t_penalty, ls * s_penalty);
      lt = scale * grid[t_scan.first];
      cv_scores = t_scan.second;
    } else {
      const auto common = cross_validate_lambda(fold_gram, fold_rhs, fold_yty, scale * (s_penalty + t_penalty), none);
      ls = lt = scale * grid[common.first];
      cv_scores = common.second;
    }
    for (int pass = 0; smoother.separate_axes && !smoother.fixed_s_lambda && pass < 2; ++pass) {
      const auto t_scan = cross_validate_lambda(fold_gram, fold_rhs, fold_yty, scale * t_penalty, ls * s_penalty);
      lt = scale * grid[t_scan.first];
      cv_scores = t_scan.second;
      ls = grid[gcv_scan(gram, rhs, yty, n_obs, s_penalty, lt * t_penalty)];
    }
    axis = std::make_pair(ls, lt);
  }
  Eigen::MatrixXd penalty;
  if (axis) {
    const auto [ls, lt] = *axis;
    if (!(ls >= 0 && lt >= 0)) fail("smooth_2d: negative smoothing parameter");
    penalty = ls * s_penalty + lt * t_penalty;
    lambda = 1.0;
  } else {
    penalty = s_penalty + t_penalty;
  }

  auto sol = penalized_least_squares(gram, rhs, yty, n_obs, penalty, lambda);
  if (grouped) sol.gcv_scores = cv_scores;
  SmoothFit2D out{bs, bt, Eigen::MatrixXd(ps, pt), sol.lambda, sol.edf, sol.gcv_scores, axis};
  for (int a = 0; a < ps; ++a)
    for (int c = 0; c < pt; ++c) out.coef(a, c) = sol.coef[a * pt + c];
  return out;
}

SmoothFit2D smooth_grid_matrix(const Eigen::VectorXd& grid, const Eigen::MatrixXd& values,
                               const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& include,
                               std::optional<double> lambda) {
  const Eigen::Index d = grid.size();
  if (values.rows() != d || values.cols() != d || include.rows() != d || include.cols() != d)
    fail("smooth_grid_matrix: shape mismatch");
  Eigen::VectorXd s(d * d), t(d * d), v(d * d);
  std::vector<bool> mask(d * d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      const Eigen::Index k = a * d + b;
      s[k] = grid[a];
      t[k] = grid[b];
      v[k] = include(a, b) ? values(a, b) : 0.0;
      mask[k] = include(a, b);
    }
  const auto basis = default_basis(grid);
  return smooth_2d(s, t, v, mask, Smoother2D{.s_basis = basis, .t_basis = basis, .lambda = lambda});
}

}  // namespace fdaw
