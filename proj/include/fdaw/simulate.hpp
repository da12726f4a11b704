#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdaw/data.hpp"

namespace fdaw {

enum class Scenario { fpca, mfpca, fosr, tvfpca };

Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);

// Fourier family on the unit interval used for simulated eigenfunctions:
// index 0 is the constant 1, index 2m-1 is sqrt(2) sin(2 pi m t) and index
// 2m is sqrt(2) cos(2 pi m t). Arguments are mapped from [a, b] to [0, 1].
double fourier_function(int index, double t01);

struct SimConfig {
  int n_subjects{200};
  int min_visits{1};
  int max_visits{1};
  int grid_size{80};
  double domain_lower{0.0};
  double domain_upper{1.0};

  // mean(t) = mean_level + mean_amplitude sin(2 pi t) [+ time_trend * T for tvfpca]
  double mean_level{5.0};
  double mean_amplitude{1.0};
  double time_trend{0.0};

  // Level-1 (or only) components: Fourier indices and score variances.
  std::vector<int> eigenfunctions{1, 2};
  std::vector<double> eigenvalues{4.0, 1.0};
  // Level-2 components (mfpca only); may be empty.
  std::vector<int> eigenfunctions2;
  std::vector<double> eigenvalues2;
  // Constant visit-specific shifts eta_j, indexed by visit - 1 (mfpca).
  std::vector<double> visit_shifts;

  double noise_sd{0.5};
  bool zero_scores{false};

  // fosr: y = beta0 + x * beta1_amplitude sin(2 pi t) + residual process; x is
  // the indicator of level "b" of the balanced binary covariate "group".
  double beta0{1.0};
  double beta1_amplitude{1.0};

  // tvfpca: c_k(T) = b0 + b1 T with var(b0) = eigenvalues[k], var(b1) = slope_variances[k];
  // visit times uniform on [0, 1].
  std::vector<double> slope_variances;
};

SimConfig default_config(Scenario scenario);

struct GroundTruth {
  Scenario scenario{Scenario::fpca};
  Grid grid;
  Eigen::VectorXd mean;                      // mu(t) (at T = 0 for tvfpca)
  std::vector<Eigen::MatrixXd> eigenfunctions;  // per level, D x K, orthonormal under grid weights
  std::vector<Eigen::VectorXd> eigenvalues;     // per level
  Eigen::MatrixXd scores;                    // n_subjects x K1 (tvfpca: intercepts b0)
  Eigen::MatrixXd scores2;                   // n_curves x K2 (mfpca)
  Eigen::MatrixXd curve_scores;              // n_curves x K1, score realised on each curve
  Eigen::MatrixXd visit_shifts;              // n_visits x D (mfpca)
  Eigen::MatrixXd beta;                      // D x 2 (fosr)
  Eigen::MatrixXd slopes;                    // n_subjects x K (tvfpca b1)
  Eigen::VectorXd slope_variances;
  double time_trend{0};
  double noise_sd{0};
  std::vector<std::string> subjects;
};

// Deterministic in (scenario, config, seed).
std::pair<FunctionalDataset, GroundTruth> simulate(Scenario scenario, const SimConfig& config, std::uint64_t seed);

}  // namespace fdaw
