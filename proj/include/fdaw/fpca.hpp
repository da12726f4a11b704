#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/data.hpp"
#include "fdaw/numerics/smoother.hpp"

namespace fdaw {

struct FpcaOptions {
  double pve{0.99};
  std::optional<int> npc;            // overrides pve when set
  std::optional<double> mean_lambda;  // empty: GCV
  std::optional<double> cov_lambda;   // empty: GCV
};

// Cross-sectional FPCA fit: Y_i(t) = mu(t) + sum_k c_ik psi_k(t) + eps_i(t).
struct FpcaFit {
  Grid grid;
  Eigen::VectorXd mu;
  Eigen::MatrixXd psi;     // D x K, orthonormal under grid.weights
  Eigen::VectorXd lambda;  // K, descending, positive
  double sigma2{0};
  Eigen::MatrixXd scores;  // n x K
  double pve_target{0.99};
  bool npc_override{false};
  double pve_achieved{0};
  double total_variance{0};  // sum of the positive eigenvalues before truncation
  Eigen::MatrixXd fitted;    // n x D
  Eigen::MatrixXd observed;  // n x D, NaN where missing
  std::vector<std::string> subject_ids;
  std::vector<int> visit_indices;
  std::vector<std::string> warnings;

  Eigen::Index npc() const { return lambda.size(); }
};

FpcaFit fit_fpca(const FunctionalDataset& ds, const FpcaOptions& opts = {});

// Smoothed pooled mean of all observed (t, y) points, fitted through the
// count-weighted pointwise means.
Eigen::VectorXd estimate_mean(const FunctionalDataset& ds, std::optional<double> lambda = std::nullopt);
SmoothFit1D fit_mean(const FunctionalDataset& ds, std::optional<double> lambda = std::nullopt);

struct RawCovariance {
  Eigen::MatrixXd values;  // entry average; 0 where count is 0
  Eigen::MatrixXd counts;  // number of curves observing both cells
};

// Pointwise-paired sample covariance of the rows of `ds` around `mu`.
RawCovariance raw_covariance(const FunctionalDataset& ds, const Eigen::VectorXd& mu);
RawCovariance raw_covariance(const Eigen::MatrixXd& centered, const Mask& observed);

// Smallest K whose cumulative share of the positive eigenvalues reaches pve.
int choose_npc(const Eigen::VectorXd& eigenvalues, double pve);

// max(0, weighted mean of raw_diag - smooth_diag).
double estimate_sigma2(const Eigen::VectorXd& raw_diag, const Eigen::VectorXd& smooth_diag, const Eigen::VectorXd& w);

// Eigen-decomposition of a covariance surface in the weighted inner product.
struct CovarianceComponents {
  Eigen::MatrixXd smoothed;   // D x D, symmetric
  Eigen::VectorXd positive;   // all positive eigenvalues, descending
  Eigen::MatrixXd psi;        // D x K retained eigenfunctions
  Eigen::VectorXd lambda;     // K retained eigenvalues
  double pve_achieved{0};
  double total_variance{0};
};

// Smooths `raw` over the cells flagged in `include`, symmetrizes, decomposes
// W^{1/2} S W^{1/2} and truncates by pve (or npc). Eigenvalues below
// zero_tol count as zero.
CovarianceComponents covariance_components(const Grid& grid, const Eigen::MatrixXd& raw, const Mask& include, double pve,
                                           std::optional<int> npc, double zero_tol,
                                           std::optional<double> lambda = std::nullopt,
                                           std::vector<std::string>* warnings = nullptr);

// Decomposes an already smooth symmetric surface (no smoothing step).
CovarianceComponents decompose_covariance(const Grid& grid, const Eigen::MatrixXd& surface, double pve,
                                          std::optional<int> npc, double zero_tol,
                                          std::vector<std::string>* warnings = nullptr);

// Best linear unbiased predictor of component scores for one curve:
// (B'B + sigma2 Lambda^{-1})^{-1} B' y, where B holds psi rows at observed cells.
Eigen::VectorXd blup_curve_scores(const Eigen::MatrixXd& basis_rows, const Eigen::VectorXd& centered,
                                  const Eigen::VectorXd& prior_variance, double sigma2, bool* ridged = nullptr);

// BLUP scores for every row of `centered` using the mask.
Eigen::MatrixXd estimate_scores(const Eigen::MatrixXd& centered, const Mask& observed, const Eigen::MatrixXd& psi,
                                const Eigen::VectorXd& lambda, double sigma2,
                                std::vector<std::string>* warnings = nullptr);

Eigen::MatrixXd estimate_scores(const FpcaFit& fit, const FunctionalDataset& ds);

// mu -/+ sqrt(lambda_k) psi_k; k is 1-based.
std::pair<Eigen::VectorXd, Eigen::VectorXd> component_band(const FpcaFit& fit, int k);

Eigen::VectorXd lincom_curve(const FpcaFit& fit, const Eigen::VectorXd& c);

struct ScreePoint {
  int k;
  double lambda;
  double cumulative_pve;
};

std::vector<ScreePoint> scree_data(const Eigen::VectorXd& lambda, double total_variance);
std::vector<ScreePoint> scree_data(const FpcaFit& fit);

// Observed values with NaN in unobserved cells.
Eigen::MatrixXd observed_with_nan(const FunctionalDataset& ds);

// Mean of Y^2 over observed cells; scale for the positivity threshold.
double mean_square(const FunctionalDataset& ds);

}  // namespace fdaw
