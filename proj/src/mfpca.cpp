#include "fdaw/mfpca.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "fdaw/error.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/numerics/smoother.hpp"

namespace fdaw {

namespace {

void warn(std::vector<std::string>* sink, const std::string& msg) {
  spdlog::warn("{}", msg);
  if (sink) sink->push_back(msg);
}

MfpcaLevel to_level(const CovarianceComponents& comp) {
  MfpcaLevel out;
  out.psi = comp.psi;
  out.lambda = comp.lambda;
  out.pve_achieved = comp.pve_achieved;
  out.total_variance = comp.total_variance;
  return out;
}

}  // namespace

const MfpcaLevel& MfpcaFit::level(int l) const {
  if (l == 1) return level1;
  if (l == 2) return level2;
  fail("level must be 1 or 2");
}

Eigen::VectorXd MfpcaFit::visit_mean(int visit) const {
  const auto it = std::find(visit_labels.begin(), visit_labels.end(), visit);
  if (!twoway || it == visit_labels.end()) return Eigen::VectorXd::Zero(grid.size());
  return visit_means.row(it - visit_labels.begin()).transpose();
}

Eigen::Index MfpcaFit::subject_row(const std::string& id) const {
  const auto it = std::find(subjects.begin(), subjects.end(), id);
  return it == subjects.end() ? -1 : it - subjects.begin();
}

CovarianceSplit split_covariances(const Eigen::MatrixXd& centered, const Mask& observed,
                                  const std::vector<std::vector<Eigen::Index>>& rows_by_subject) {
  const Eigen::Index d = centered.cols();
  bool any_repeat = false;
  for (const auto& rows : rows_by_subject) any_repeat = any_repeat || rows.size() >= 2;
  if (!any_repeat) fail("within-subject covariance unidentifiable: no subject has 2 or more visits");

  const Eigen::MatrixXd m = observed.cast<double>().matrix();
  const Eigen::MatrixXd r = centered.cwiseProduct(m);
  CovarianceSplit out;
  out.total_counts = m.transpose() * m;
  const Eigen::MatrixXd total_sum = r.transpose() * r;

  // Sum over ordered pairs j != j' of r_j(a) r_j'(b) = S(a) S(b) - sum_j r_j(a) r_j(b).
  Eigen::MatrixXd between_sum = Eigen::MatrixXd::Zero(d, d);
  out.between_counts = Eigen::MatrixXd::Zero(d, d);
  for (const auto& rows : rows_by_subject) {
    if (rows.size() < 2) continue;
    const Eigen::MatrixXd rs = r(rows, Eigen::all);
    const Eigen::MatrixXd ms = m(rows, Eigen::all);
    const Eigen::RowVectorXd s = rs.colwise().sum();
    const Eigen::RowVectorXd c = ms.colwise().sum();
    between_sum += s.transpose() * s - rs.transpose() * rs;
    out.between_counts += c.transpose() * c - ms.transpose() * ms;
  }
  out.total = Eigen::MatrixXd::Zero(d, d);
  out.between = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      if (out.total_counts(a, b) > 0) out.total(a, b) = total_sum(a, b) / out.total_counts(a, b);
      if (out.between_counts(a, b) > 0) out.between(a, b) = between_sum(a, b) / out.between_counts(a, b);
    }
  out.within = out.total - out.between;
  return out;
}

CovarianceSplit split_covariances(const FunctionalDataset& ds, const Eigen::VectorXd& mu,
                                  const Eigen::MatrixXd& visit_means, const std::vector<int>& visit_labels) {
  if (mu.size() != ds.grid_size()) fail("split_covariances: mean is not on the dataset grid");
  Eigen::MatrixXd centered = ds.values.rowwise() - mu.transpose();
  if (visit_means.size() > 0)
    for (Eigen::Index i = 0; i < ds.n_curves(); ++i) {
      const auto it = std::find(visit_labels.begin(), visit_labels.end(), ds.visit_index[i]);
      if (it != visit_labels.end()) centered.row(i) -= visit_means.row(it - visit_labels.begin());
    }
  return split_covariances(centered, ds.observed, ds.rows_by_subject());
}

MultilevelScores estimate_scores_ml(const Eigen::MatrixXd& centered, const Mask& observed,
                                    const std::vector<std::vector<Eigen::Index>>& rows_by_subject,
                                    const Eigen::MatrixXd& psi1, const Eigen::VectorXd& lambda1,
                                    const Eigen::MatrixXd& psi2, const Eigen::VectorXd& lambda2, double sigma2,
                                    std::vector<std::string>* warnings) {
  const Eigen::Index k1 = lambda1.size(), k2 = lambda2.size();
  MultilevelScores out;
  out.level1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_by_subject.size()), k1);
  out.level2 = Eigen::MatrixXd::Zero(centered.rows(), k2);
  std::size_t ridged_subjects = 0;
  for (std::size_t s = 0; s < rows_by_subject.size(); ++s) {
    const auto& rows = rows_by_subject[s];
    const auto nv = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index q = k1 + nv * k2;
    Eigen::Index n_obs = 0;
    for (auto i : rows) n_obs += observed.row(i).count();
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n_obs, q);
    Eigen::VectorXd y(n_obs);
    Eigen::VectorXd prior(q);
    prior.head(k1) = lambda1;
    for (Eigen::Index v = 0; v < nv; ++v) prior.segment(k1 + v * k2, k2) = lambda2;
    Eigen::Index r = 0;
    for (Eigen::Index v = 0; v < nv; ++v) {
      const Eigen::Index i = rows[v];
      for (Eigen::Index a = 0; a < centered.cols(); ++a) {
        if (!observed(i, a)) continue;
        z.row(r).head(k1) = psi1.row(a);
        z.row(r).segment(k1 + v * k2, k2) = psi2.row(a);
        y[r++] = centered(i, a);
      }
    }
    bool ridged = false;
    const Eigen::VectorXd u = blup_curve_scores(z, y, prior, sigma2, &ridged);
    ridged_subjects += ridged;
    out.level1.row(static_cast<Eigen::Index>(s)) = u.head(k1).transpose();
    for (Eigen::Index v = 0; v < nv; ++v) out.level2.row(rows[v]) = u.segment(k1 + v * k2, k2).transpose();
  }
  if (ridged_subjects > 0)
    warn(warnings, "joint score system singular for " + std::to_string(ridged_subjects) +
                       " subject(s); added ridge 1e-10");
  return out;
}

MfpcaFit fit_mfpca(const FunctionalDataset& ds, const MfpcaOptions& opts) {
  require_valid(ds);
  const auto rows_by_subject = ds.rows_by_subject();
  std::size_t repeated = 0;
  for (const auto& rows : rows_by_subject) repeated += rows.size() >= 2;
  if (repeated == 0) fail("within-subject covariance unidentifiable: no subject has 2 or more visits");
  if (repeated < 2) fail("within-subject covariance unidentifiable: fewer than 2 subjects have 2 or more visits");

  MfpcaFit fit;
  fit.grid = ds.grid;
  fit.twoway = opts.twoway;
  fit.subjects = ds.subjects();
  fit.subject_ids = ds.subject_id;
  fit.visit_indices = ds.visit_index;
  fit.observed = observed_with_nan(ds);
  const Eigen::Index d = ds.grid_size();

  fit.mu = estimate_mean(ds, opts.mean_lambda);
  Eigen::MatrixXd centered = ds.values.rowwise() - fit.mu.transpose();

  if (opts.twoway) {
    const std::set<int> labels(ds.visit_index.begin(), ds.visit_index.end());
    fit.visit_labels.assign(labels.begin(), labels.end());
    fit.visit_means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fit.visit_labels.size()), d);
    for (std::size_t v = 0; v < fit.visit_labels.size(); ++v) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < ds.n_curves(); ++i)
        if (ds.visit_index[i] == fit.visit_labels[v]) rows.push_back(i);
      if (rows.size() < 3) {
        warn(&fit.warnings, "visit " + std::to_string(fit.visit_labels[v]) + " has fewer than 3 curves; visit mean set to 0");
        continue;
      }
      std::vector<double> xs, ys;
      for (Eigen::Index a = 0; a < d; ++a) {
        double sum = 0;
        int count = 0;
        for (auto i : rows)
          if (ds.observed(i, a)) {
            sum += centered(i, a);
            ++count;
          }
        if (count > 0) {
          xs.push_back(ds.grid.points[a]);
          ys.push_back(sum / count);
        }
      }
      const Eigen::Map<const Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
      const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
      const auto sm = smooth_1d(x, y, Eigen::VectorXd::Ones(x.size()),
                                Smoother1D{default_basis(ds.grid.points), 2, opts.mean_lambda});
      fit.visit_means.row(static_cast<Eigen::Index>(v)) = sm.evaluate(ds.grid.points).transpose();
    }
    for (Eigen::Index i = 0; i < ds.n_curves(); ++i) centered.row(i) -= fit.visit_mean(ds.visit_index[i]).transpose();
  }

  const auto split = split_covariances(centered, ds.observed, rows_by_subject);
  const double zero_tol = 1e-12 * std::max(mean_square(ds), std::numeric_limits<double>::min());

  // Level 1: distinct-visit products carry no measurement error, so the diagonal stays in.
  const Mask include1 = split.between_counts.array() > 0;
  const auto comp1 = covariance_components(ds.grid, split.between, include1, opts.pve1, opts.npc1, zero_tol,
                                           opts.cov_lambda, &fit.warnings);
  fit.level1 = to_level(comp1);

  Mask include2 = (split.between_counts.array() > 0) && (split.total_counts.array() > 0);
  include2.matrix().diagonal().setConstant(false);
  const auto smooth2 = smooth_grid_matrix(ds.grid.points, split.within, include2, opts.cov_lambda);
  const Eigen::MatrixXd surface2 = smooth2.evaluate_grid(ds.grid.points, ds.grid.points);
  Eigen::MatrixXd smoothed2 = (surface2 + surface2.transpose()) / 2.0;
  try {
    const auto comp2 = decompose_covariance(ds.grid, surface2, opts.pve2, opts.npc2, zero_tol, &fit.warnings);
    fit.level2 = to_level(comp2);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate) throw;
    warn(&fit.warnings, "within-subject covariance has no positive eigenvalues; level 2 has no components");
    fit.level2.psi = Eigen::MatrixXd(d, 0);
    fit.level2.lambda = Eigen::VectorXd(0);
  }

  std::vector<Eigen::Index> diag_cells;
  for (Eigen::Index a = 0; a < d; ++a)
    if (split.total_counts(a, a) > 0) diag_cells.push_back(a);
  const Eigen::VectorXd smooth_total_diag = comp1.smoothed.diagonal() + smoothed2.diagonal();
  const Eigen::VectorXd raw_diag = split.total.diagonal();
  fit.sigma2 = estimate_sigma2(raw_diag(diag_cells), smooth_total_diag(diag_cells), ds.grid.weights(diag_cells));

  const auto scores = estimate_scores_ml(centered, ds.observed, rows_by_subject, fit.level1.psi, fit.level1.lambda,
                                         fit.level2.psi, fit.level2.lambda, fit.sigma2, &fit.warnings);
  fit.level1.scores = scores.level1;
  fit.level2.scores = scores.level2;

  fit.fitted.resize(ds.n_curves(), d);
  for (std::size_t s = 0; s < rows_by_subject.size(); ++s)
    for (auto i : rows_by_subject[s]) {
      Eigen::VectorXd f = fit.mu + fit.visit_mean(ds.visit_index[i]);
      f += fit.level1.psi * fit.level1.scores.row(static_cast<Eigen::Index>(s)).transpose();
      f += fit.level2.psi * fit.level2.scores.row(i).transpose();
      fit.fitted.row(i) = f.transpose();
    }
  return fit;
}

}  // namespace fdaw
