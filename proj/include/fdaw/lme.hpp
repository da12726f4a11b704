#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fdaw {

// Random-line mixed model y_ij = (beta_0 + b_0i) + (beta_1 + b_1i) T_ij + e_ij,
// (b_0i, b_1i) ~ N(0, D), e_ij ~ N(0, sigma2). With `slope` off, or fewer than
// two distinct T overall, only the intercept terms are fitted.
struct LmeOptions {
  bool slope{true};
  double tolerance{1e-6};  // change in log-likelihood relative to max(1, |loglik|)
  int max_iterations{500};
};

struct LmeFit {
  Eigen::VectorXd beta;            // fixed effects, length q
  Eigen::MatrixXd re_cov;          // D, q x q
  double sigma2{0};
  Eigen::MatrixXd random_effects;  // groups x q, BLUP b_i
  double loglik{0};
  int iterations{0};
  bool converged{true};

  Eigen::Index q() const { return beta.size(); }
};

LmeFit fit_random_line(const std::vector<Eigen::VectorXd>& times, const std::vector<Eigen::VectorXd>& values,
                       const LmeOptions& opts = {});

}  // namespace fdaw
