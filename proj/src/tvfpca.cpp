#include "fdaw/tvfpca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "fdaw/error.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/lme.hpp"
#include "fdaw/numerics/quadrature.hpp"
#include "fdaw/numerics/smoother.hpp"

namespace fdaw {

namespace {

constexpr int kScoreGridSize = 21;
constexpr int kMaxTimeBasis = 10;

void warn(std::vector<std::string>* sink, const std::string& msg) {
  spdlog::warn("{}", msg);
  if (sink) sink->push_back(msg);
}

// Row of linear-interpolation weights of `x` on an increasing grid, clamped at the ends.
Eigen::RowVectorXd interpolation_row(const Eigen::VectorXd& grid, double x) {
  const Eigen::Index n = grid.size();
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(n);
  if (n == 1 || x <= grid[0]) {
    w[0] = 1;
    return w;
  }
  if (x >= grid[n - 1]) {
    w[n - 1] = 1;
    return w;
  }
  const auto it = std::upper_bound(grid.data(), grid.data() + n, x);
  const Eigen::Index hi = it - grid.data(), lo = hi - 1;
  const double f = (x - grid[lo]) / (grid[hi] - grid[lo]);
  w[lo] = 1 - f;
  w[hi] = f;
  return w;
}

ScoreDynamics fit_fpca_dynamics(const std::vector<Eigen::VectorXd>& times, const std::vector<Eigen::VectorXd>& scores,
                                double t_min, double t_max, double pve) {
  ScoreDynamics dyn;
  dyn.method = DynamicsMethod::fpca;
  dyn.t_grid = equispaced(t_min, t_max, kScoreGridSize);
  const double h = (t_max - t_min) / (kScoreGridSize - 1);
  auto bin = [&](double t) {
    const long b = std::lround((t - t_min) / h);
    return dyn.t_grid[std::clamp<long>(b, 0, kScoreGridSize - 1)];
  };

  // same-subject products of distinct visits; same-visit products carry the nugget
  std::vector<double> s, t, v;
  std::vector<int> groups;
  double sumsq = 0;
  Eigen::Index n_obs = 0;
  for (std::size_t g = 0; g < times.size(); ++g) {
    for (Eigen::Index j = 0; j < times[g].size(); ++j) {
      sumsq += scores[g][j] * scores[g][j];
      ++n_obs;
      for (Eigen::Index j2 = 0; j2 < times[g].size(); ++j2) {
        if (j2 == j) continue;
        s.push_back(bin(times[g][j]));
        t.push_back(bin(times[g][j2]));
        v.push_back(scores[g][j] * scores[g][j2]);
        groups.push_back(static_cast<int>(g));
      }
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(times.size());
  dyn.phi = Eigen::MatrixXd(kScoreGridSize, 0);
  dyn.nu = Eigen::VectorXd(0);
  dyn.subject_coef = Eigen::MatrixXd(m, 0);
  if (sumsq == 0) return dyn;
  if (s.size() < 10) fail("score dynamics (fpca): fewer than 10 same-subject visit pairs; use method lme");

  const Eigen::Map<const Eigen::VectorXd> sv(s.data(), static_cast<Eigen::Index>(s.size()));
  const Eigen::Map<const Eigen::VectorXd> tv(t.data(), static_cast<Eigen::Index>(t.size()));
  const Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  const auto basis = SplineBasis<>::uniform(t_min, t_max, default_basis_size(kScoreGridSize));
  // Products from one subject are correlated, so the smoothing parameter is
  // chosen with whole subjects held out.
  Smoother2D smoother{.s_basis = basis, .t_basis = basis, .cv_groups = groups, .separate_axes = false};
  if (std::set<int>(groups.begin(), groups.end()).size() < 2) smoother.cv_groups.clear();
  const auto sm = smooth_2d(sv, tv, vv, std::vector<bool>(s.size(), true), smoother);
  const Eigen::MatrixXd surface = sm.evaluate_grid(dyn.t_grid, dyn.t_grid);
  const double zero_tol = 1e-12 * sumsq / static_cast<double>(n_obs);
  try {
    const auto comp = decompose_covariance(Grid(dyn.t_grid), surface, pve, std::nullopt, zero_tol);
    dyn.phi = comp.psi;
    dyn.nu = comp.lambda;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate) throw;
    spdlog::warn("score dynamics (fpca): score covariance has no positive eigenvalues");
  }

  double resid = 0;
  for (std::size_t g = 0; g < times.size(); ++g)
    for (Eigen::Index j = 0; j < times[g].size(); ++j)
      resid += scores[g][j] * scores[g][j] - dyn.G(times[g][j], times[g][j]);
  dyn.residual_var = std::max(0.0, resid / static_cast<double>(n_obs));

  const Eigen::Index l = dyn.nu.size();
  dyn.subject_coef = Eigen::MatrixXd::Zero(m, l);
  for (Eigen::Index g = 0; g < m; ++g) {
    Eigen::MatrixXd f(times[g].size(), l);
    for (Eigen::Index j = 0; j < times[g].size(); ++j) f.row(j) = dyn.basis_row(times[g][j]);
    dyn.subject_coef.row(g) = blup_curve_scores(f, scores[g], dyn.nu, dyn.residual_var).transpose();
  }
  return dyn;
}

}  // namespace

DynamicsMethod parse_dynamics_method(const std::string& name) {
  if (name == "lme") return DynamicsMethod::lme;
  if (name == "fpca") return DynamicsMethod::fpca;
  fail("unknown dynamics method '" + name + "' (expected lme or fpca)");
}

std::string to_string(DynamicsMethod m) { return m == DynamicsMethod::lme ? "lme" : "fpca"; }

double ScoreDynamics::G(double t, double t2) const {
  if (method == DynamicsMethod::lme) {
    if (re_cov.rows() == 1) return re_cov(0, 0);
    return re_cov(0, 0) + (t + t2) * re_cov(0, 1) + t * t2 * re_cov(1, 1);
  }
  const Eigen::RowVectorXd a = basis_row(t), b = basis_row(t2);
  double out = 0;
  for (Eigen::Index l = 0; l < nu.size(); ++l) out += nu[l] * (a[l] * b[l]);
  return out;
}

Eigen::MatrixXd ScoreDynamics::G(const Eigen::VectorXd& ts) const {
  Eigen::MatrixXd out(ts.size(), ts.size());
  for (Eigen::Index i = 0; i < ts.size(); ++i)
    for (Eigen::Index j = 0; j < ts.size(); ++j) out(i, j) = G(ts[i], ts[j]);
  return out;
}

Eigen::RowVectorXd ScoreDynamics::basis_row(double t) const {
  if (method == DynamicsMethod::lme) {
    Eigen::RowVectorXd r(fixed.size());
    r[0] = 1;
    if (r.size() > 1) r[1] = t;
    return r;
  }
  return interpolation_row(t_grid, t) * phi;
}

double ScoreDynamics::evaluate(Eigen::Index subject, double t) const {
  if (subject_coef.cols() == 0) return 0;
  return basis_row(t).dot(subject_coef.row(subject));
}

ScoreDynamics fit_score_dynamics(const std::vector<Eigen::VectorXd>& times, const std::vector<Eigen::VectorXd>& scores,
                                 DynamicsMethod method, double t_min, double t_max, double pve) {
  if (method == DynamicsMethod::fpca) {
    std::set<double> distinct;
    for (const auto& t : times) distinct.insert(t.data(), t.data() + t.size());
    if (distinct.size() < 3) fail("score dynamics (fpca) needs at least 3 distinct visit times; use method lme");
    return fit_fpca_dynamics(times, scores, t_min, t_max, pve);
  }
  const auto lme = fit_random_line(times, scores);
  ScoreDynamics dyn;
  dyn.method = DynamicsMethod::lme;
  dyn.fixed = lme.beta;
  dyn.re_cov = lme.re_cov;
  dyn.residual_var = lme.sigma2;
  dyn.converged = lme.converged;
  dyn.iterations = lme.iterations;
  dyn.subject_coef = lme.random_effects.rowwise() + lme.beta.transpose();
  return dyn;
}

Eigen::VectorXd MeanSurface::evaluate(const Eigen::VectorXd& grid, double t) const {
  if (!varies_in_t) return offset;
  const double tc = std::clamp(t, t_basis.lower(), t_basis.upper());
  return offset + s_basis.design(grid) * (coef * t_basis.evaluate(tc));
}

Eigen::Index TvFpcaFit::subject_row(const std::string& id) const {
  const auto it = std::find(subjects.begin(), subjects.end(), id);
  return it == subjects.end() ? -1 : it - subjects.begin();
}

std::vector<Eigen::Index> TvFpcaFit::rows_of(const std::string& id) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < subject_ids.size(); ++i)
    if (subject_ids[i] == id) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

FunctionalDataset impute_missing(const FunctionalDataset& ds) {
  require_valid(ds);
  if (!ds.has_missing()) return ds;
  const auto fit = fit_fpca(ds);
  FunctionalDataset out = ds;
  for (Eigen::Index i = 0; i < ds.n_curves(); ++i)
    for (Eigen::Index a = 0; a < ds.grid_size(); ++a)
      if (!ds.observed(i, a)) out.values(i, a) = fit.fitted(i, a);
  out.observed.setConstant(true);
  return out;
}

TvFpcaFit fit_tvfpca(const FunctionalDataset& ds, const TvFpcaOptions& opts) {
  if (!ds.visit_time) fail("tvfpca requires visit_time on every row");
  require_valid(ds);
  const auto rows_by_subject = ds.rows_by_subject();
  if (rows_by_subject.size() < 2) fail("tvfpca needs at least 2 subjects");

  TvFpcaFit fit;
  fit.grid = ds.grid;
  fit.method = opts.method;
  fit.subjects = ds.subjects();
  fit.subject_ids = ds.subject_id;
  fit.visit_indices = ds.visit_index;
  fit.visit_time = *ds.visit_time;
  fit.observed = observed_with_nan(ds);
  const Eigen::VectorXd& times = *ds.visit_time;
  fit.t_min = times.minCoeff();
  fit.t_max = times.maxCoeff();
  const std::set<double> distinct(times.data(), times.data() + times.size());
  if (opts.method == DynamicsMethod::fpca && distinct.size() < 3)
    fail("tvfpca method fpca needs at least 3 distinct visit times; use method lme");
  bool repeated = false;
  for (const auto& rows : rows_by_subject) repeated = repeated || rows.size() >= 2;
  if (!repeated) warn(&fit.warnings, "no subject has 2 or more visits; score dynamics reduce to visit-level variances");

  const Eigen::Index n = ds.n_curves(), d = ds.grid_size();

  // step 1: mean surface
  const auto offset_fit = fit_mean(ds, opts.mean_lambda);
  fit.mean.offset = offset_fit.evaluate(ds.grid.points);
  if (distinct.size() >= 2) {
    const Eigen::Index n_obs = ds.observed.count();
    Eigen::VectorXd s(n_obs), t(n_obs), y(n_obs);
    std::vector<int> group(static_cast<std::size_t>(n_obs));
    std::vector<int> subject_of(static_cast<std::size_t>(n));
    for (std::size_t g = 0; g < rows_by_subject.size(); ++g)
      for (auto i : rows_by_subject[g]) subject_of[static_cast<std::size_t>(i)] = static_cast<int>(g);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index a = 0; a < d; ++a)
        if (ds.observed(i, a)) {
          group[static_cast<std::size_t>(k)] = subject_of[static_cast<std::size_t>(i)];
          s[k] = ds.grid.points[a];
          t[k] = times[i];
          y[k++] = ds.values(i, a) - fit.mean.offset[a];
        }
    const int nt = std::min<int>(kMaxTimeBasis, default_basis_size(static_cast<Eigen::Index>(distinct.size())));
    // Along s the surface keeps the smoothness chosen for m(s): dividing by the
    // T basis size gives T-constant surfaces the same penalty as the 1D fit.
    // Heavier s smoothing would bend the subject-driven shapes out of the
    // eigenfunction span; the T axis is chosen with whole subjects held out.
    const Smoother2D sm{.s_basis = default_basis(ds.grid.points),
                        .t_basis = SplineBasis<>::uniform(fit.t_min, fit.t_max, nt),
                        .lambda = opts.mean_lambda,
                        .cv_groups = group,
                        .fixed_s_lambda = offset_fit.lambda / nt};
    const auto surface = smooth_2d(s, t, y, std::vector<bool>(static_cast<std::size_t>(n_obs), true), sm);
    fit.mean.varies_in_t = true;
    fit.mean.s_basis = surface.s_basis;
    fit.mean.t_basis = surface.t_basis;
    fit.mean.coef = surface.coef;
  } else {
    fit.mean.varies_in_t = false;
  }

  Eigen::MatrixXd centered(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    centered.row(i) = ds.values.row(i) - fit.mean.evaluate(ds.grid.points, times[i]).transpose();

  fit.pointwise_mean.resize(d);
  for (Eigen::Index a = 0; a < d; ++a) {
    double sum = 0;
    long count = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (ds.observed(i, a)) {
        sum += ds.values(i, a);
        ++count;
      }
    fit.pointwise_mean[a] = count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }

  // step 2: marginal covariance pooled over all curves
  const auto raw = raw_covariance(centered, ds.observed);
  Mask include = raw.counts.array() > 0;
  include.matrix().diagonal().setConstant(false);
  const double zero_tol = 1e-12 * std::max(mean_square(ds), std::numeric_limits<double>::min());
  const auto comp =
      covariance_components(ds.grid, raw.values, include, opts.pve, opts.npc, zero_tol, opts.cov_lambda, &fit.warnings);
  fit.marginal_sigma = comp.smoothed;
  fit.psi = comp.psi;
  fit.lambda = comp.lambda;
  fit.pve_achieved = comp.pve_achieved;
  fit.total_variance = comp.total_variance;
  std::vector<Eigen::Index> diag_cells;
  for (Eigen::Index a = 0; a < d; ++a)
    if (raw.counts(a, a) > 0) diag_cells.push_back(a);
  const Eigen::VectorXd raw_diag = raw.values.diagonal(), smooth_diag = comp.smoothed.diagonal();
  fit.sigma2 = estimate_sigma2(raw_diag(diag_cells), smooth_diag(diag_cells), ds.grid.weights(diag_cells));
  fit.raw_scores = estimate_scores(centered, ds.observed, fit.psi, fit.lambda, fit.sigma2, &fit.warnings);

  // step 3: score dynamics per component
  for (Eigen::Index k = 0; k < fit.npc(); ++k) {
    std::vector<Eigen::VectorXd> ts, cs;
    for (const auto& rows : rows_by_subject) {
      Eigen::VectorXd tt(static_cast<Eigen::Index>(rows.size())), cc(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t j = 0; j < rows.size(); ++j) {
        tt[static_cast<Eigen::Index>(j)] = times[rows[j]];
        cc[static_cast<Eigen::Index>(j)] = fit.raw_scores(rows[j], k);
      }
      ts.push_back(tt);
      cs.push_back(cc);
    }
    fit.dynamics.push_back(fit_score_dynamics(ts, cs, opts.method, fit.t_min, fit.t_max, 0.95));
    if (!fit.dynamics.back().converged)
      warn(&fit.warnings, "component " + std::to_string(k + 1) + ": EM did not converge; using the last iterate");
  }
  return fit;
}

Eigen::VectorXd predict_scores(const TvFpcaFit& fit, const std::string& subject, int k, const Eigen::VectorXd& t_query) {
  const Eigen::Index row = fit.subject_row(subject);
  if (row < 0) fail(ErrorKind::not_found, "unknown subject '" + subject + "'");
  if (k < 0 || k >= fit.npc()) fail(ErrorKind::not_found, "component " + std::to_string(k + 1) + " out of range");
  const double span = fit.t_max - fit.t_min;
  const double tol = 1e-9 * std::max(1.0, std::abs(span));
  Eigen::VectorXd out(t_query.size());
  for (Eigen::Index i = 0; i < t_query.size(); ++i) {
    if (t_query[i] < fit.t_min - tol || t_query[i] > fit.t_max + tol)
      spdlog::warn("predict_scores: T = {} outside the observed range; extrapolating", t_query[i]);
    out[i] = fit.dynamics[static_cast<std::size_t>(k)].evaluate(row, t_query[i]);
  }
  return out;
}

Eigen::VectorXd predict_curve(const TvFpcaFit& fit, const std::string& subject, double t) {
  Eigen::VectorXd curve = fit.mean.evaluate(fit.grid.points, t);
  const Eigen::VectorXd tq = Eigen::VectorXd::Constant(1, t);
  for (Eigen::Index k = 0; k < fit.npc(); ++k)
    curve += predict_scores(fit, subject, static_cast<int>(k), tq)[0] * fit.psi.col(k);
  return curve;
}

std::vector<TrajectoryFrame> predict_trajectory(const TvFpcaFit& fit, const std::string& subject, int n_t) {
  if (n_t < 2) fail("trajectory needs nT >= 2");
  if (fit.subject_row(subject) < 0) fail(ErrorKind::not_found, "unknown subject '" + subject + "'");
  const Eigen::VectorXd ts = equispaced(fit.t_min, fit.t_max, n_t);
  std::vector<TrajectoryFrame> out;
  for (Eigen::Index i = 0; i < ts.size(); ++i) out.push_back({ts[i], predict_curve(fit, subject, ts[i])});
  return out;
}

VisitTimeSummary visit_time_summary(const std::vector<std::string>& subject_ids, const Eigen::VectorXd& visit_time,
                                    int bins) {
  if (bins < 1) fail("histogram needs at least one bin");
  if (static_cast<Eigen::Index>(subject_ids.size()) != visit_time.size()) fail("visit_time_summary: length mismatch");
  VisitTimeSummary out;
  out.counts.assign(static_cast<std::size_t>(bins), 0);
  if (visit_time.size() == 0) {
    out.edges = Eigen::VectorXd::Zero(bins + 1);
    return out;
  }
  const double lo = visit_time.minCoeff(), hi = visit_time.maxCoeff();
  out.edges = equispaced(lo, hi, bins + 1);
  for (Eigen::Index i = 0; i < visit_time.size(); ++i) {
    const double t = visit_time[i];
    out.per_subject[subject_ids[static_cast<std::size_t>(i)]].push_back(t);
    out.rug.push_back(t);
    long b = hi > lo ? static_cast<long>(std::floor((t - lo) / (hi - lo) * bins)) : 0;
    out.counts[static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1))] += 1;
  }
  std::sort(out.rug.begin(), out.rug.end());
  return out;
}

VisitTimeSummary visit_time_summary(const FunctionalDataset& ds, int bins) {
  if (!ds.visit_time) fail("visit_time_summary requires visit_time");
  return visit_time_summary(ds.subject_id, *ds.visit_time, bins);
}

}  // namespace fdaw
