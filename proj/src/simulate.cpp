#include "fdaw/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fdaw/error.hpp"

namespace fdaw {

namespace {

void check_eigenvalues(const std::vector<double>& values, const std::vector<int>& functions, const char* level) {
  if (values.size() != functions.size())
    fail(std::string("simulate: ") + level + " eigenvalue and eigenfunction counts differ");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] > 0)) fail(std::string("simulate: ") + level + " eigenvalues must be positive");
    if (k > 0 && values[k] > values[k - 1]) fail(std::string("simulate: ") + level + " eigenvalues must be non-increasing");
  }
}

// Evaluates the requested Fourier functions on the grid and orthonormalizes
// them under the quadrature weights (modified Gram-Schmidt).
Eigen::MatrixXd orthonormal_functions(const Grid& grid, const std::vector<int>& indices) {
  const Eigen::Index d = grid.size();
  Eigen::MatrixXd psi(d, static_cast<Eigen::Index>(indices.size()));
  const double a = grid.lower(), b = grid.upper();
  for (std::size_t k = 0; k < indices.size(); ++k)
    for (Eigen::Index i = 0; i < d; ++i) psi(i, k) = fourier_function(indices[k], (grid.points[i] - a) / (b - a));
  const Eigen::VectorXd& w = grid.weights;
  // rescale so that the functions have unit norm on [a, b]
  for (Eigen::Index k = 0; k < psi.cols(); ++k) {
    for (Eigen::Index j = 0; j < k; ++j) psi.col(k) -= (psi.col(j).cwiseProduct(w).dot(psi.col(k))) * psi.col(j);
    const double norm = std::sqrt(psi.col(k).cwiseProduct(w).dot(psi.col(k)));
    if (!(norm > 1e-12)) fail("simulate: eigenfunctions are linearly dependent on this grid");
    psi.col(k) /= norm;
  }
  return psi;
}

}  // namespace

Scenario parse_scenario(const std::string& name) {
  if (name == "fpca") return Scenario::fpca;
  if (name == "mfpca") return Scenario::mfpca;
  if (name == "fosr") return Scenario::fosr;
  if (name == "tvfpca") return Scenario::tvfpca;
  fail("unknown scenario '" + name + "'");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::fpca: return "fpca";
    case Scenario::mfpca: return "mfpca";
    case Scenario::fosr: return "fosr";
    case Scenario::tvfpca: return "tvfpca";
  }
  return "fpca";
}

double fourier_function(int index, double t01) {
  if (index < 0) fail("fourier_function: negative index");
  if (index == 0) return 1.0;
  const int m = (index + 1) / 2;
  const double arg = 2.0 * std::numbers::pi * m * t01;
  return std::numbers::sqrt2 * (index % 2 ? std::sin(arg) : std::cos(arg));
}

SimConfig default_config(Scenario scenario) {
  SimConfig c;
  switch (scenario) {
    case Scenario::fpca:
      break;
    case Scenario::mfpca:
      c.n_subjects = 60;
      c.min_visits = c.max_visits = 4;
      c.eigenfunctions = {1};
      c.eigenvalues = {2.0};
      c.eigenfunctions2 = {2};
      c.eigenvalues2 = {1.0};
      c.noise_sd = 0.3;
      break;
    case Scenario::fosr:
      c.n_subjects = 150;
      c.grid_size = 60;
      c.eigenvalues = {1.0, 0.25};
      c.noise_sd = 0.3;
      break;
    case Scenario::tvfpca:
      c.n_subjects = 50;
      c.min_visits = 4;
      c.max_visits = 6;
      c.grid_size = 41;
      c.eigenvalues = {2.0, 1.0};
      c.slope_variances = {1.0, 0.5};
      c.time_trend = 0.5;
      c.noise_sd = 0.0;
      break;
  }
  return c;
}

std::pair<FunctionalDataset, GroundTruth> simulate(Scenario scenario, const SimConfig& cfg, std::uint64_t seed) {
  if (cfg.n_subjects < 2) fail("simulate: need at least 2 subjects");
  if (cfg.grid_size < 8) fail("simulate: grid_size must be at least 8");
  if (cfg.min_visits < 1 || cfg.max_visits < cfg.min_visits) fail("simulate: invalid visit range");
  if (!(cfg.noise_sd >= 0)) fail("simulate: noise_sd must be non-negative");
  check_eigenvalues(cfg.eigenvalues, cfg.eigenfunctions, "level-1");
  if (scenario == Scenario::mfpca) check_eigenvalues(cfg.eigenvalues2, cfg.eigenfunctions2, "level-2");
  if (scenario == Scenario::tvfpca && cfg.slope_variances.size() != cfg.eigenvalues.size())
    fail("simulate: slope_variances must match the number of components");
  for (double v : cfg.slope_variances)
    if (!(v >= 0)) fail("simulate: slope variances must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  GroundTruth truth;
  truth.scenario = scenario;
  truth.grid = Grid::uniform(cfg.domain_lower, cfg.domain_upper, cfg.grid_size);
  truth.noise_sd = cfg.noise_sd;
  truth.time_trend = scenario == Scenario::tvfpca ? cfg.time_trend : 0.0;
  const Grid& grid = truth.grid;
  const Eigen::Index d = grid.size();
  const double a = grid.lower(), b = grid.upper();
  Eigen::VectorXd t01 = (grid.points.array() - a) / (b - a);
  truth.mean = (cfg.mean_level + cfg.mean_amplitude * (2.0 * std::numbers::pi * t01.array()).sin()).matrix();

  const Eigen::MatrixXd psi1 = orthonormal_functions(grid, cfg.eigenfunctions);
  const Eigen::VectorXd lambda1 = Eigen::Map<const Eigen::VectorXd>(cfg.eigenvalues.data(), cfg.eigenvalues.size());
  truth.eigenfunctions.push_back(psi1);
  truth.eigenvalues.push_back(lambda1);
  Eigen::MatrixXd psi2;
  Eigen::VectorXd lambda2;
  if (scenario == Scenario::mfpca) {
    psi2 = cfg.eigenfunctions2.empty() ? Eigen::MatrixXd(d, 0) : orthonormal_functions(grid, cfg.eigenfunctions2);
    lambda2 = Eigen::Map<const Eigen::VectorXd>(cfg.eigenvalues2.data(), cfg.eigenvalues2.size());
    truth.eigenfunctions.push_back(psi2);
    truth.eigenvalues.push_back(lambda2);
  }
  const Eigen::Index k1 = psi1.cols(), k2 = psi2.cols();
  const auto score_draw = [&](double variance) { return cfg.zero_scores ? 0.0 : std::sqrt(variance) * normal(rng); };

  // visit layout
  std::vector<int> visits(cfg.n_subjects);
  for (int i = 0; i < cfg.n_subjects; ++i)
    visits[i] = cfg.min_visits + static_cast<int>(std::floor(uniform(rng) * (cfg.max_visits - cfg.min_visits + 1)));
  for (auto& v : visits) v = std::min(v, cfg.max_visits);
  Eigen::Index n_curves = 0;
  for (int v : visits) n_curves += v;

  truth.scores = Eigen::MatrixXd::Zero(cfg.n_subjects, k1);
  truth.curve_scores = Eigen::MatrixXd::Zero(n_curves, k1);
  if (scenario == Scenario::mfpca) truth.scores2 = Eigen::MatrixXd::Zero(n_curves, k2);
  if (scenario == Scenario::tvfpca) {
    truth.slopes = Eigen::MatrixXd::Zero(cfg.n_subjects, k1);
    truth.slope_variances = Eigen::Map<const Eigen::VectorXd>(cfg.slope_variances.data(), cfg.slope_variances.size());
  }
  if (scenario == Scenario::fosr) {
    truth.beta.resize(d, 2);
    truth.beta.col(0).setConstant(cfg.beta0);
    truth.beta.col(1) = cfg.beta1_amplitude * (2.0 * std::numbers::pi * t01.array()).sin().matrix();
    truth.mean.setConstant(cfg.beta0);
  }
  int max_visit = *std::max_element(visits.begin(), visits.end());
  truth.visit_shifts = Eigen::MatrixXd::Zero(max_visit, d);
  if (scenario == Scenario::mfpca)
    for (int j = 0; j < max_visit && j < static_cast<int>(cfg.visit_shifts.size()); ++j)
      truth.visit_shifts.row(j).setConstant(cfg.visit_shifts[j]);

  FunctionalDataset ds;
  ds.grid = grid;
  ds.values.resize(n_curves, d);
  ds.observed = Mask::Constant(n_curves, d, true);
  if (scenario == Scenario::tvfpca) ds.visit_time = Eigen::VectorXd(n_curves);
  Covariate group;
  if (scenario == Scenario::fosr) {
    group.name = "group";
    group.categorical = true;
    group.levels = {"a", "b"};
  }

  Eigen::Index row = 0;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    const std::string sid = "s" + std::to_string(i + 1);
    truth.subjects.push_back(sid);
    for (Eigen::Index k = 0; k < k1; ++k) truth.scores(i, k) = score_draw(lambda1[k]);
    if (scenario == Scenario::tvfpca)
      for (Eigen::Index k = 0; k < k1; ++k) truth.slopes(i, k) = score_draw(cfg.slope_variances[k]);

    std::vector<double> times(visits[i]);
    if (scenario == Scenario::tvfpca) {
      for (auto& t : times) t = uniform(rng);
      std::sort(times.begin(), times.end());
    }
    for (int j = 0; j < visits[i]; ++j, ++row) {
      ds.subject_id.push_back(sid);
      ds.visit_index.push_back(j + 1);
      Eigen::VectorXd curve = truth.mean;
      Eigen::VectorXd c = truth.scores.row(i).transpose();
      if (scenario == Scenario::tvfpca) {
        const double tt = times[j];
        (*ds.visit_time)[row] = tt;
        c += tt * truth.slopes.row(i).transpose();
        curve.array() += cfg.time_trend * tt;
      }
      truth.curve_scores.row(row) = c.transpose();
      curve += psi1 * c;
      if (scenario == Scenario::mfpca) {
        for (Eigen::Index k = 0; k < k2; ++k) truth.scores2(row, k) = score_draw(lambda2[k]);
        curve += psi2 * truth.scores2.row(row).transpose();
        curve += truth.visit_shifts.row(j).transpose();
      }
      if (scenario == Scenario::fosr) {
        const bool is_b = i % 2 == 1;
        group.labels.push_back(is_b ? "b" : "a");
        if (is_b) curve += truth.beta.col(1);
      }
      for (Eigen::Index p = 0; p < d; ++p) curve[p] += cfg.noise_sd * normal(rng);
      ds.values.row(row) = curve.transpose();
    }
  }
  if (scenario == Scenario::fosr) ds.covariates.push_back(std::move(group));
  return {std::move(ds), std::move(truth)};
}

}  // namespace fdaw
