#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/numerics/bspline.hpp"

namespace fdaw {

// Candidate smoothing parameters scanned by GCV: 50 log-spaced values in [1e-8, 1e4].
Eigen::VectorXd gcv_lambda_grid();

// Solution of min ||y - Bc||_W^2 + lambda c'Pc given the Gram matrix B'WB,
// the right-hand side B'Wy and y'Wy.
struct PenalizedSolution {
  Eigen::VectorXd coef;
  double lambda{0};
  double edf{0};
  Eigen::VectorXd gcv_scores;  // one per grid value; empty when lambda was fixed
};

PenalizedSolution penalized_least_squares(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double yty,
                                          double n_obs, const Eigen::MatrixXd& penalty,
                                          std::optional<double> lambda);

struct Smoother1D {
  SplineBasis<> basis;
  int penalty_order{2};
  std::optional<double> lambda;  // empty: choose by GCV
};

struct SmoothFit1D {
  SplineBasis<> basis;
  Eigen::VectorXd coef;
  double lambda{0};
  double edf{0};
  Eigen::VectorXd gcv_scores;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& points) const;
};

SmoothFit1D smooth_1d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                      const Smoother1D& smoother);

struct Smoother2D {
  SplineBasis<> s_basis;
  SplineBasis<> t_basis;
  int penalty_order{2};
  std::optional<double> lambda{};                           // common to both axes; empty: GCV
  std::optional<std::pair<double, double>> axis_lambdas{};  // explicit (s, t) pair, overrides lambda
  // Non-negative group label per node, for nodes correlated within a group.
  // When set and lambda is automatic, the t-axis parameter minimizes the
  // cross-validated error with whole groups held out (labels pooled into at
  // most 5 folds by modulo, grid relative to tr(gram) / tr(penalty)) and the
  // s-axis parameter is chosen by GCV (alternating twice from the best common
  // value).
  std::vector<int> cv_groups{};
  // With cv_groups: false picks one common parameter by the group CV alone.
  bool separate_axes{true};
  // With cv_groups: fixes the s-axis parameter and selects only the t axis.
  std::optional<double> fixed_s_lambda{};
};

struct SmoothFit2D {
  SplineBasis<> s_basis;
  SplineBasis<> t_basis;
  Eigen::MatrixXd coef;  // s_basis.size() x t_basis.size()
  double lambda{0};
  double edf{0};
  Eigen::VectorXd gcv_scores;
  std::optional<std::pair<double, double>> axis_lambdas;  // set when the axes were penalized separately

  double evaluate(double s, double t) const;
  // Surface on the tensor grid s x t.
  Eigen::MatrixXd evaluate_grid(const Eigen::VectorXd& s, const Eigen::VectorXd& t) const;
};

// Index of the grid lambda minimizing GCV for the penalty
// fixed_penalty + lambda * penalty (direct solves; no shared factorization).
Eigen::Index gcv_scan(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double yty, double n_obs,
                      const Eigen::MatrixXd& penalty, const Eigen::MatrixXd& fixed_penalty);

// Lambda on the GCV grid for fits with penalty fixed_penalty + lambda * penalty,
// given each fold's normal equations: the largest value whose summed held-out
// error is within one standard error of the minimum. Returns the index into
// the grid and all scores.
std::pair<Eigen::Index, Eigen::VectorXd> cross_validate_lambda(const std::vector<Eigen::MatrixXd>& fold_gram,
                                                               const std::vector<Eigen::VectorXd>& fold_rhs,
                                                               const std::vector<double>& fold_yty,
                                                               const Eigen::MatrixXd& penalty,
                                                               const Eigen::MatrixXd& fixed_penalty);

// Tensor-product penalized spline fit using only nodes with include[i] set.
SmoothFit2D smooth_2d(const Eigen::VectorXd& s, const Eigen::VectorXd& t, const Eigen::VectorXd& values,
                      const std::vector<bool>& include, const Smoother2D& smoother);

// Smooths a D x D matrix of values observed on grid x grid, using the cells
// flagged in `include`, with the default basis for the grid.
SmoothFit2D smooth_grid_matrix(const Eigen::VectorXd& grid, const Eigen::MatrixXd& values,
                               const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& include,
                               std::optional<double> lambda = std::nullopt);

// Default smoother for a grid of abscissae: cubic, min(35, ceil(D/4)+4) functions.
SplineBasis<> default_basis(const Eigen::VectorXd& grid);

}  // namespace fdaw
