#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/data.hpp"
#include "fdaw/numerics/bspline.hpp"

namespace fdaw {

enum class DynamicsMethod { lme, fpca };

DynamicsMethod parse_dynamics_method(const std::string& name);
std::string to_string(DynamicsMethod m);

// Covariance model of one component's scores across longitudinal time.
struct ScoreDynamics {
  DynamicsMethod method{DynamicsMethod::lme};
  // lme: c(T) = (beta_0 + b_0) + (beta_1 + b_1) T; intercept-only when q = 1
  Eigen::VectorXd fixed;
  Eigen::MatrixXd re_cov;
  bool converged{true};
  int iterations{0};
  // fpca: c(T) = sum_l b_l phi_l(T), phi linear between the t_grid points
  Eigen::VectorXd t_grid;
  Eigen::MatrixXd phi;  // t_grid x L
  Eigen::VectorXd nu;   // var(b_l)
  double residual_var{0};
  // per subject (fit subject order): lme beta + b_i, fpca b_i
  Eigen::MatrixXd subject_coef;

  double G(double t, double t2) const;
  Eigen::MatrixXd G(const Eigen::VectorXd& ts) const;
  // Design row of c(T) in terms of subject_coef.
  Eigen::RowVectorXd basis_row(double t) const;
  double evaluate(Eigen::Index subject, double t) const;
};

// Random-line or FPCA-of-scores dynamics from raw scores grouped by subject.
ScoreDynamics fit_score_dynamics(const std::vector<Eigen::VectorXd>& times, const std::vector<Eigen::VectorXd>& scores,
                                 DynamicsMethod method, double t_min, double t_max, double pve = 0.95);

struct TvFpcaOptions {
  DynamicsMethod method{DynamicsMethod::lme};
  double pve{0.95};
  std::optional<int> npc;
  std::optional<double> mean_lambda;
  std::optional<double> cov_lambda;
};

// Mean surface mu(s, T) = m(s) + r(s, T): the smoothed cross-sectional mean
// plus a tensor spline of the remaining T dependence (absent when the visit
// times do not vary).
struct MeanSurface {
  bool varies_in_t{true};
  Eigen::VectorXd offset;  // m(s) on the grid
  SplineBasis<> s_basis;
  SplineBasis<> t_basis;
  Eigen::MatrixXd coef;  // s_basis x t_basis

  Eigen::VectorXd evaluate(const Eigen::VectorXd& grid, double t) const;
};

// Y_ij(s) = mu(s, T_ij) + sum_k c_ik(T_ij) psi_k(s) + eps_ij(s).
struct TvFpcaFit {
  Grid grid;
  double t_min{0};
  double t_max{0};
  MeanSurface mean;
  Eigen::VectorXd pointwise_mean;  // m(s)
  Eigen::MatrixXd marginal_sigma;  // D x D smoothed
  Eigen::MatrixXd psi;
  Eigen::VectorXd lambda;
  double sigma2{0};
  double pve_achieved{0};
  double total_variance{0};
  Eigen::MatrixXd raw_scores;  // curves x K, at T_ij
  std::vector<ScoreDynamics> dynamics;
  DynamicsMethod method{DynamicsMethod::lme};
  std::vector<std::string> subjects;
  std::vector<std::string> subject_ids;
  std::vector<int> visit_indices;
  Eigen::VectorXd visit_time;
  Eigen::MatrixXd observed;  // NaN where missing
  std::vector<std::string> warnings;

  Eigen::Index npc() const { return lambda.size(); }
  Eigen::Index subject_row(const std::string& id) const;  // -1 if absent
  std::vector<Eigen::Index> rows_of(const std::string& id) const;
};

// Missing cells replaced by FPCA fitted values; observed cells untouched.
FunctionalDataset impute_missing(const FunctionalDataset& ds);

TvFpcaFit fit_tvfpca(const FunctionalDataset& ds, const TvFpcaOptions& opts = {});

// Predicted c_ik(T) for a subject; k is 0-based.
Eigen::VectorXd predict_scores(const TvFpcaFit& fit, const std::string& subject, int k, const Eigen::VectorXd& t_query);

// mu(., T) + sum_k c_ik(T) psi_k.
Eigen::VectorXd predict_curve(const TvFpcaFit& fit, const std::string& subject, double t);

struct TrajectoryFrame {
  double t;
  Eigen::VectorXd curve;
};

std::vector<TrajectoryFrame> predict_trajectory(const TvFpcaFit& fit, const std::string& subject, int n_t = 21);

struct VisitTimeSummary {
  std::map<std::string, std::vector<double>> per_subject;
  Eigen::VectorXd edges;  // bins + 1
  std::vector<long> counts;
  std::vector<double> rug;
};

VisitTimeSummary visit_time_summary(const std::vector<std::string>& subject_ids, const Eigen::VectorXd& visit_time,
                                    int bins = 20);
VisitTimeSummary visit_time_summary(const FunctionalDataset& ds, int bins = 20);

}  // namespace fdaw
