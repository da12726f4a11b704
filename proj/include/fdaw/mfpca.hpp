#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/data.hpp"

namespace fdaw {

struct MfpcaOptions {
  bool twoway{false};  // estimate visit means eta_j
  double pve1{0.99};
  double pve2{0.99};
  std::optional<int> npc1;
  std::optional<int> npc2;
  std::optional<double> mean_lambda;
  std::optional<double> cov_lambda;
};

struct MfpcaLevel {
  Eigen::MatrixXd psi;     // D x K
  Eigen::VectorXd lambda;  // K
  Eigen::MatrixXd scores;  // level 1: subjects x K; level 2: curves x K
  double pve_achieved{0};
  double total_variance{0};

  Eigen::Index npc() const { return lambda.size(); }
};

// Y_ij(t) = mu(t) + eta_j(t) + sum_k c1_ik psi1_k(t) + sum_k c2_ijk psi2_k(t) + eps_ij(t).
struct MfpcaFit {
  Grid grid;
  Eigen::VectorXd mu;
  bool twoway{false};
  std::vector<int> visit_labels;  // rows of visit_means, ascending
  Eigen::MatrixXd visit_means;    // visits x D; empty unless twoway
  MfpcaLevel level1;
  MfpcaLevel level2;
  double sigma2{0};
  std::vector<std::string> subjects;  // rows of level1.scores
  Eigen::MatrixXd fitted;             // curves x D
  Eigen::MatrixXd observed;           // NaN where missing
  std::vector<std::string> subject_ids;
  std::vector<int> visit_indices;
  std::vector<std::string> warnings;

  const MfpcaLevel& level(int l) const;
  // eta_j for a visit label; zero curve when twoway is off or the label is unknown.
  Eigen::VectorXd visit_mean(int visit) const;
  Eigen::Index subject_row(const std::string& id) const;  // -1 if absent
};

MfpcaFit fit_mfpca(const FunctionalDataset& ds, const MfpcaOptions& opts = {});

struct CovarianceSplit {
  Eigen::MatrixXd between;  // same-subject, distinct-visit products
  Eigen::MatrixXd within;   // total - between
  Eigen::MatrixXd total;    // same-curve products
  Eigen::MatrixXd between_counts;
  Eigen::MatrixXd total_counts;
};

// Entries without any contributing pair hold 0 and a zero count.
CovarianceSplit split_covariances(const Eigen::MatrixXd& centered, const Mask& observed,
                                  const std::vector<std::vector<Eigen::Index>>& rows_by_subject);
CovarianceSplit split_covariances(const FunctionalDataset& ds, const Eigen::VectorXd& mu,
                                  const Eigen::MatrixXd& visit_means = {}, const std::vector<int>& visit_labels = {});

struct MultilevelScores {
  Eigen::MatrixXd level1;  // subjects x K1
  Eigen::MatrixXd level2;  // curves x K2
};

// Joint BLUP per subject: level-1 scores shared by the subject's visits,
// level-2 scores specific to each visit.
MultilevelScores estimate_scores_ml(const Eigen::MatrixXd& centered, const Mask& observed,
                                    const std::vector<std::vector<Eigen::Index>>& rows_by_subject,
                                    const Eigen::MatrixXd& psi1, const Eigen::VectorXd& lambda1,
                                    const Eigen::MatrixXd& psi2, const Eigen::VectorXd& lambda2, double sigma2,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace fdaw
