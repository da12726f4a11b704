#include "fdaw/fpca.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "fdaw/error.hpp"
#include "fdaw/numerics/eigen.hpp"
#include "fdaw/numerics/smoother.hpp"

namespace fdaw {

namespace {

constexpr double kRelativeZero = 1e-12;

void warn(std::vector<std::string>* sink, const std::string& msg) {
  spdlog::warn("{}", msg);
  if (sink) sink->push_back(msg);
}

}  // namespace

Eigen::MatrixXd observed_with_nan(const FunctionalDataset& ds) {
  Eigen::MatrixXd out = ds.values;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index a = 0; a < out.cols(); ++a)
      if (!ds.observed(i, a)) out(i, a) = std::numeric_limits<double>::quiet_NaN();
  return out;
}

double mean_square(const FunctionalDataset& ds) {
  const auto count = ds.observed.count();
  if (count == 0) return 0;
  return (ds.values.array().square() * ds.observed.cast<double>()).sum() / static_cast<double>(count);
}

Eigen::VectorXd estimate_mean(const FunctionalDataset& ds, std::optional<double> lambda) {
  return fit_mean(ds, lambda).evaluate(ds.grid.points);
}

SmoothFit1D fit_mean(const FunctionalDataset& ds, std::optional<double> lambda) {
  // Pooling every observed point is the same penalized fit as the count-weighted
  // pointwise means; fitting the means keeps replicate scatter out of GCV.
  std::vector<double> x, y, w;
  for (Eigen::Index a = 0; a < ds.grid_size(); ++a) {
    double sum = 0;
    long count = 0;
    for (Eigen::Index i = 0; i < ds.n_curves(); ++i)
      if (ds.observed(i, a)) {
        sum += ds.values(i, a);
        ++count;
      }
    if (count == 0) continue;
    x.push_back(ds.grid.points[a]);
    y.push_back(sum / static_cast<double>(count));
    w.push_back(static_cast<double>(count));
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  return smooth_1d(Eigen::Map<const Eigen::VectorXd>(x.data(), n), Eigen::Map<const Eigen::VectorXd>(y.data(), n),
                   Eigen::Map<const Eigen::VectorXd>(w.data(), n), Smoother1D{default_basis(ds.grid.points), 2, lambda});
}

RawCovariance raw_covariance(const Eigen::MatrixXd& centered, const Mask& observed) {
  const Eigen::MatrixXd m = observed.cast<double>().matrix();
  const Eigen::MatrixXd r = centered.cwiseProduct(m);
  RawCovariance out;
  out.counts = m.transpose() * m;
  out.values = r.transpose() * r;
  for (Eigen::Index a = 0; a < out.values.rows(); ++a)
    for (Eigen::Index b = 0; b < out.values.cols(); ++b)
      out.values(a, b) = out.counts(a, b) > 0 ? out.values(a, b) / out.counts(a, b) : 0.0;
  return out;
}

RawCovariance raw_covariance(const FunctionalDataset& ds, const Eigen::VectorXd& mu) {
  if (mu.size() != ds.grid_size()) fail("raw_covariance: mean is not on the dataset grid");
  const Eigen::MatrixXd centered = ds.values.rowwise() - mu.transpose();
  return raw_covariance(centered, ds.observed);
}

int choose_npc(const Eigen::VectorXd& eigenvalues, double pve) {
  if (!(pve > 0 && pve <= 1)) fail("pve must lie in (0, 1]");
  const Eigen::VectorXd pos = eigenvalues.cwiseMax(0.0);
  const double total = pos.sum();
  if (!(total > 0)) fail(ErrorKind::degenerate, "no positive eigenvalues");
  double cum = 0;
  for (Eigen::Index k = 0; k < pos.size(); ++k) {
    cum += pos[k];
    if (cum / total >= pve) return static_cast<int>(k + 1);
  }
  // rounding in the last partial sum
  Eigen::Index last = pos.size();
  while (last > 0 && pos[last - 1] == 0) --last;
  return static_cast<int>(last);
}

double estimate_sigma2(const Eigen::VectorXd& raw_diag, const Eigen::VectorXd& smooth_diag, const Eigen::VectorXd& w) {
  if (raw_diag.size() != smooth_diag.size() || raw_diag.size() != w.size()) fail("estimate_sigma2: length mismatch");
  const double total = w.sum();
  if (!(total > 0)) return 0;
  return std::max(0.0, w.dot(raw_diag - smooth_diag) / total);
}

CovarianceComponents decompose_covariance(const Grid& grid, const Eigen::MatrixXd& surface, double pve,
                                          std::optional<int> npc, double zero_tol,
                                          std::vector<std::string>* warnings) {
  CovarianceComponents out;
  out.smoothed = (surface + surface.transpose()) / 2.0;
  const Eigen::VectorXd sqrt_w = grid.weights.cwiseSqrt();
  const Eigen::MatrixXd weighted = sqrt_w.asDiagonal() * out.smoothed * sqrt_w.asDiagonal();
  const auto eig = sym_eigen(weighted);

  Eigen::Index n_pos = 0;
  const double max_abs = eig.values.cwiseAbs().maxCoeff();
  const double tol = std::max(zero_tol, 1e-10 * max_abs);
  while (n_pos < eig.values.size() && eig.values[n_pos] > tol) ++n_pos;
  if (n_pos == 0) fail(ErrorKind::degenerate, "degenerate data: covariance has no positive eigenvalues");
  out.positive = eig.values.head(n_pos);
  out.total_variance = out.positive.sum();

  int k = 0;
  if (npc) {
    if (*npc < 1) fail("npc must be at least 1");
    k = *npc;
    if (k > n_pos) {
      warn(warnings, "npc " + std::to_string(k) + " exceeds the " + std::to_string(n_pos) +
                         " positive eigenvalues; using " + std::to_string(n_pos));
      k = static_cast<int>(n_pos);
    }
  } else {
    k = choose_npc(out.positive, pve);
  }
  out.lambda = out.positive.head(k);
  out.psi = sqrt_w.cwiseInverse().asDiagonal() * eig.vectors.leftCols(k);
  canonicalize_signs(out.psi);
  out.pve_achieved = out.lambda.sum() / out.total_variance;
  return out;
}

CovarianceComponents covariance_components(const Grid& grid, const Eigen::MatrixXd& raw, const Mask& include, double pve,
                                           std::optional<int> npc, double zero_tol, std::optional<double> lambda,
                                           std::vector<std::string>* warnings) {
  const auto smooth = smooth_grid_matrix(grid.points, raw, include, lambda);
  return decompose_covariance(grid, smooth.evaluate_grid(grid.points, grid.points), pve, npc, zero_tol, warnings);
}

Eigen::VectorXd blup_curve_scores(const Eigen::MatrixXd& basis_rows, const Eigen::VectorXd& centered,
                                  const Eigen::VectorXd& prior_variance, double sigma2, bool* ridged) {
  const Eigen::Index k = basis_rows.cols();
  if (k == 0) return Eigen::VectorXd(0);
  Eigen::MatrixXd m = basis_rows.transpose() * basis_rows;
  if (sigma2 > 0) m.diagonal() += sigma2 * prior_variance.cwiseInverse();
  const Eigen::VectorXd rhs = basis_rows.transpose() * centered;
  if (ridged) *ridged = false;
  if (Eigen::FullPivLU<Eigen::MatrixXd>(m).rank() < k) {
    m.diagonal().array() += 1e-10 * std::max(m.trace() / static_cast<double>(k), 1.0);
    if (ridged) *ridged = true;
  }
  return m.ldlt().solve(rhs);
}

Eigen::MatrixXd estimate_scores(const Eigen::MatrixXd& centered, const Mask& observed, const Eigen::MatrixXd& psi,
                                const Eigen::VectorXd& lambda, double sigma2, std::vector<std::string>* warnings) {
  const Eigen::Index n = centered.rows(), k = psi.cols();
  Eigen::MatrixXd scores(n, k);
  std::size_t ridged_rows = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> obs;
    for (Eigen::Index a = 0; a < centered.cols(); ++a)
      if (observed(i, a)) obs.push_back(a);
    const Eigen::MatrixXd rows = psi(obs, Eigen::all);
    const Eigen::VectorXd y = centered.row(i)(obs).transpose();
    bool ridged = false;
    scores.row(i) = blup_curve_scores(rows, y, lambda, sigma2, &ridged).transpose();
    ridged_rows += ridged;
  }
  if (ridged_rows > 0)
    warn(warnings, "score system singular for " + std::to_string(ridged_rows) + " curve(s); added ridge 1e-10");
  return scores;
}

Eigen::MatrixXd estimate_scores(const FpcaFit& fit, const FunctionalDataset& ds) {
  const Eigen::MatrixXd centered = ds.values.rowwise() - fit.mu.transpose();
  return estimate_scores(centered, ds.observed, fit.psi, fit.lambda, fit.sigma2);
}

FpcaFit fit_fpca(const FunctionalDataset& ds, const FpcaOptions& opts) {
  require_valid(ds);
  if (ds.n_curves() < 3) fail("fit_fpca: need at least 3 curves");
  if (!opts.npc && !(opts.pve > 0 && opts.pve <= 1)) fail("pve must lie in (0, 1]");

  FpcaFit fit;
  fit.grid = ds.grid;
  fit.pve_target = opts.pve;
  fit.npc_override = opts.npc.has_value();
  fit.subject_ids = ds.subject_id;
  fit.visit_indices = ds.visit_index;
  fit.observed = observed_with_nan(ds);

  fit.mu = estimate_mean(ds, opts.mean_lambda);
  const Eigen::MatrixXd centered = ds.values.rowwise() - fit.mu.transpose();
  const auto raw = raw_covariance(centered, ds.observed);

  Mask include = (raw.counts.array() > 0);
  include.matrix().diagonal().setConstant(false);
  const double zero_tol = kRelativeZero * std::max(mean_square(ds), std::numeric_limits<double>::min());
  const auto comp = covariance_components(ds.grid, raw.values, include, opts.pve, opts.npc, zero_tol, opts.cov_lambda,
                                          &fit.warnings);
  fit.psi = comp.psi;
  fit.lambda = comp.lambda;
  fit.pve_achieved = comp.pve_achieved;
  fit.total_variance = comp.total_variance;

  std::vector<Eigen::Index> diag_cells;
  for (Eigen::Index a = 0; a < ds.grid_size(); ++a)
    if (raw.counts(a, a) > 0) diag_cells.push_back(a);
  const Eigen::VectorXd raw_diag = raw.values.diagonal();
  const Eigen::VectorXd smooth_diag = comp.smoothed.diagonal();
  fit.sigma2 = estimate_sigma2(raw_diag(diag_cells), smooth_diag(diag_cells), ds.grid.weights(diag_cells));

  fit.scores = estimate_scores(centered, ds.observed, fit.psi, fit.lambda, fit.sigma2, &fit.warnings);
  fit.fitted = (fit.scores * fit.psi.transpose()).rowwise() + fit.mu.transpose();
  return fit;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> component_band(const FpcaFit& fit, int k) {
  if (k < 1 || k > fit.npc()) fail(ErrorKind::not_found, "component " + std::to_string(k) + " out of range 1.." + std::to_string(fit.npc()));
  const Eigen::VectorXd shift = std::sqrt(fit.lambda[k - 1]) * fit.psi.col(k - 1);
  return {fit.mu + shift, fit.mu - shift};
}

Eigen::VectorXd lincom_curve(const FpcaFit& fit, const Eigen::VectorXd& c) {
  if (c.size() != fit.npc())
    fail("lincom: expected " + std::to_string(fit.npc()) + " scores, got " + std::to_string(c.size()));
  return fit.mu + fit.psi * c;
}

std::vector<ScreePoint> scree_data(const Eigen::VectorXd& lambda, double total_variance) {
  std::vector<ScreePoint> out;
  const double total = total_variance > 0 ? total_variance : lambda.cwiseMax(0.0).sum();
  double cum = 0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    cum += std::max(0.0, lambda[k]);
    out.push_back({static_cast<int>(k + 1), lambda[k], total > 0 ? cum / total : 0.0});
  }
  return out;
}

std::vector<ScreePoint> scree_data(const FpcaFit& fit) { return scree_data(fit.lambda, fit.total_variance); }

}  // namespace fdaw
