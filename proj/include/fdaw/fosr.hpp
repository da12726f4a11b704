#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/data.hpp"
#include "fdaw/numerics/bspline.hpp"

namespace fdaw {

// One covariate as it enters the design: continuous terms give one column,
// categorical terms one dummy per non-reference level.
struct DesignTerm {
  std::string name;
  bool categorical{false};
  std::vector<std::string> levels;  // sorted; levels[0] is the reference
};

struct DesignCoding {
  std::vector<DesignTerm> terms;
  std::vector<std::string> columns;  // "(Intercept)", "x", "group:b", ...

  Eigen::Index n_columns() const { return static_cast<Eigen::Index>(columns.size()); }
  // Column index by name, or by number (0 = intercept). -1 if absent.
  Eigen::Index column_index(const std::string& key) const;
};

struct Design {
  Eigen::MatrixXd x;  // n x (p + 1)
  DesignCoding coding;
};

Design build_design(const FunctionalDataset& ds, const std::vector<std::string>& terms);

// Throws naming the columns involved when X has dependent columns.
void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& columns);

using CovariateValue = std::variant<double, std::string>;

// Design row for named covariate values; every term must be present.
Eigen::RowVectorXd design_row(const DesignCoding& coding, const std::map<std::string, CovariateValue>& x);

struct FosrOptions {
  std::optional<int> basis_size;  // default min(35, ceil(D/4) + 4)
  double pve{0.95};               // residual FPCA
  std::optional<double> lambda;   // same fixed value for every coefficient; empty: GCV
};

// Sigma_eps = Psi Lambda Psi' + sigma2 I on the grid.
struct ResidualCovModel {
  Eigen::MatrixXd psi;  // D x K
  Eigen::VectorXd lambda;
  double sigma2{0};
};

// Y_i(t) = sum_k x_ik beta_k(t) + eps_i(t), beta_k = B theta_k.
struct FosrFit {
  Grid grid;
  DesignCoding coding;
  Eigen::MatrixXd x;          // complete-case design
  Eigen::MatrixXd beta;       // D x (p + 1)
  Eigen::MatrixXd beta_se;    // D x (p + 1)
  Eigen::MatrixXd beta_ols;   // stage-1 estimate
  Eigen::VectorXd smoothing;  // per coefficient, stage-1 scale
  int basis_size{0};
  Eigen::MatrixXd observed;   // n x D
  Eigen::MatrixXd residuals;  // observed - x * beta'
  ResidualCovModel residual_cov;
  Eigen::VectorXd depths;  // modified band depth of the residual curves
  std::vector<std::string> subject_ids;
  std::vector<int> visit_indices;
  std::vector<Covariate> covariates;  // term columns of the kept rows
  std::size_t dropped_rows{0};
  std::vector<std::string> warnings;

  Eigen::Index n_coef() const { return beta.cols(); }
};

FosrFit fit_fosr(const FunctionalDataset& ds, const std::vector<std::string>& terms, const FosrOptions& opts = {});

// Penalized GLS for coefficient curves under a given residual covariance, with
// the penalty for coefficient k equal to penalties[k] * P. Returns beta (D x q)
// and writes pointwise sandwich standard errors to `se` when non-null.
Eigen::MatrixXd fosr_gls(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SplineBasis<>& basis,
                         const Eigen::VectorXd& grid, const Eigen::VectorXd& penalties, const ResidualCovModel& cov,
                         Eigen::MatrixXd* se = nullptr);

// Two-sided normal quantile z_{(1 + level) / 2}.
double band_multiplier(double level);

struct CoefBand {
  std::string term;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level{0.95};
};

// `term` is a column name or column number (0 = intercept).
CoefBand coef_with_bands(const FosrFit& fit, const std::string& term, double level = 0.95);

Eigen::VectorXd predict_mean(const FosrFit& fit, const std::map<std::string, CovariateValue>& x);

}  // namespace fdaw
