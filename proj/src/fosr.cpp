#include "fdaw/fosr.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/normal.hpp>
#include <spdlog/spdlog.h>

#include "fdaw/depth.hpp"
#include "fdaw/error.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/numerics/smoother.hpp"

namespace fdaw {

namespace {

constexpr int kSweeps = 2;

void warn(std::vector<std::string>& sink, const std::string& msg) {
  spdlog::warn("{}", msg);
  sink.push_back(msg);
}

std::string join_quoted(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (k > 0) out += k + 1 == names.size() ? " and " : ", ";
    out += "'" + names[k] + "'";
  }
  return out;
}

// Block-diagonal penalty with weight[k] * P in block k.
Eigen::MatrixXd block_penalty(const Eigen::MatrixXd& p, const Eigen::VectorXd& weight) {
  const Eigen::Index kb = p.rows(), q = weight.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kb * q, kb * q);
  for (Eigen::Index k = 0; k < q; ++k) out.block(k * kb, k * kb, kb, kb) = weight[k] * p;
  return out;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Coefficient blocks theta_k stacked; returns the D x q curves B theta_k.
Eigen::MatrixXd curves(const Eigen::MatrixXd& b, const Eigen::VectorXd& theta, Eigen::Index q) {
  const Eigen::Index kb = b.cols();
  Eigen::MatrixXd out(b.rows(), q);
  for (Eigen::Index k = 0; k < q; ++k) out.col(k) = b * theta.segment(k * kb, kb);
  return out;
}

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::numerical, "fosr: singular penalized system; use a positive smoothing parameter or fewer basis functions");
  return llt;
}

}  // namespace

Eigen::Index DesignCoding::column_index(const std::string& key) const {
  for (std::size_t k = 0; k < columns.size(); ++k)
    if (columns[k] == key) return static_cast<Eigen::Index>(k);
  if (!key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const auto k = std::stoul(key);
    if (k < columns.size()) return static_cast<Eigen::Index>(k);
  }
  return -1;
}

void check_full_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& columns) {
  Eigen::MatrixXd scaled = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double norm = x.col(j).norm();
    if (norm > 0) scaled.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(1e-10);
  if (qr.rank() == x.cols()) return;
  // First column that adds nothing to the span of the columns before it.
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (scaled.col(j).norm() == 0) fail("design is rank-deficient: column '" + columns[j] + "' is identically zero");
    if (!kept.empty()) {
      const Eigen::MatrixXd basis = scaled(Eigen::all, kept);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> sub(basis);
      const Eigen::VectorXd c = sub.solve(Eigen::VectorXd(scaled.col(j)));
      if ((basis * c - scaled.col(j)).norm() < 1e-8) {
        std::vector<std::string> names;
        const double big = c.cwiseAbs().maxCoeff();
        for (std::size_t m = 0; m < kept.size(); ++m)
          if (std::abs(c[static_cast<Eigen::Index>(m)]) > 1e-8 * big) names.push_back(columns[kept[m]]);
        fail("design is rank-deficient: column '" + columns[j] + "' is collinear with " + join_quoted(names));
      }
    }
    kept.push_back(j);
  }
  fail("design is rank-deficient");
}

Design build_design(const FunctionalDataset& ds, const std::vector<std::string>& terms) {
  const auto n = static_cast<std::size_t>(ds.n_curves());
  Design out;
  out.coding.columns.push_back("(Intercept)");
  std::vector<Eigen::VectorXd> cols{Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))};
  for (const auto& name : terms) {
    const Covariate* cov = ds.covariate(name);
    if (!cov) fail(ErrorKind::not_found, "unknown covariate '" + name + "'");
    for (std::size_t i = 0; i < n; ++i)
      if (cov->missing(i)) fail("covariate '" + name + "' is missing on row " + std::to_string(i + 1));
    DesignTerm term{name, cov->categorical, {}};
    if (cov->categorical) {
      const std::set<std::string> present(cov->labels.begin(), cov->labels.end());
      term.levels.assign(present.begin(), present.end());
      if (term.levels.size() < 2) fail("categorical covariate '" + name + "' has fewer than 2 levels");
      for (std::size_t l = 1; l < term.levels.size(); ++l) {
        Eigen::VectorXd c(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) c[static_cast<Eigen::Index>(i)] = cov->labels[i] == term.levels[l] ? 1.0 : 0.0;
        cols.push_back(c);
        out.coding.columns.push_back(name + ":" + term.levels[l]);
      }
    } else {
      const Eigen::Map<const Eigen::VectorXd> c(cov->numeric.data(), static_cast<Eigen::Index>(n));
      if (n == 0 || c.maxCoeff() == c.minCoeff())
        fail("continuous covariate '" + name + "' is constant and collinear with the intercept");
      cols.push_back(c);
      out.coding.columns.push_back(name);
    }
    out.coding.terms.push_back(std::move(term));
  }
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.x.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

Eigen::RowVectorXd design_row(const DesignCoding& coding, const std::map<std::string, CovariateValue>& x) {
  for (const auto& [name, value] : x) {
    const bool known = std::any_of(coding.terms.begin(), coding.terms.end(), [&](const DesignTerm& t) { return t.name == name; });
    if (!known) fail(ErrorKind::not_found, "'" + name + "' is not a term of this model");
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(coding.n_columns());
  row[0] = 1;
  Eigen::Index col = 1;
  for (const auto& term : coding.terms) {
    const auto it = x.find(term.name);
    if (it == x.end()) fail("missing value for term '" + term.name + "'");
    if (term.categorical) {
      const auto* label = std::get_if<std::string>(&it->second);
      if (!label) fail("term '" + term.name + "' is categorical; expected one of its levels");
      const auto lv = std::find(term.levels.begin(), term.levels.end(), *label);
      if (lv == term.levels.end()) fail("unknown level '" + *label + "' for term '" + term.name + "'");
      const auto l = lv - term.levels.begin();
      if (l > 0) row[col + l - 1] = 1;
      col += static_cast<Eigen::Index>(term.levels.size()) - 1;
    } else {
      const auto* v = std::get_if<double>(&it->second);
      if (!v) fail("term '" + term.name + "' is continuous; expected a number");
      if (!std::isfinite(*v)) fail("term '" + term.name + "' must be finite");
      row[col++] = *v;
    }
  }
  return row;
}

namespace {

// Normal equations of the GLS fit: H = X'X kron B'Sigma^{-1}B, rhs = vec(B'Sigma^{-1}Y'X).
struct GlsSystem {
  Eigen::MatrixXd b;
  Eigen::MatrixXd h;
  Eigen::VectorXd rhs;
  Eigen::MatrixXd pen;

  GlsSystem(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SplineBasis<>& basis, const Eigen::VectorXd& grid,
            const ResidualCovModel& cov) {
    if (!(cov.sigma2 > 0)) fail(ErrorKind::numerical, "fosr: residual covariance needs a positive nugget");
    b = basis.design(grid);
    const Eigen::Index kb = b.cols(), q = x.cols();
    // Sigma^{-1} B by Woodbury: (B - Psi (sigma2 Lambda^{-1} + Psi'Psi)^{-1} Psi'B) / sigma2
    Eigen::MatrixXd sib = b;
    if (cov.psi.cols() > 0) {
      Eigen::MatrixXd inner = cov.psi.transpose() * cov.psi;
      inner.diagonal() += cov.sigma2 * cov.lambda.cwiseInverse();
      sib -= cov.psi * inner.ldlt().solve(cov.psi.transpose() * b);
    }
    sib /= cov.sigma2;
    Eigen::MatrixXd btsib = b.transpose() * sib;
    btsib = (btsib + btsib.transpose()) / 2.0;
    h = kron(x.transpose() * x, btsib);
    const Eigen::MatrixXd yx = y.transpose() * x;
    rhs.resize(kb * q);
    for (Eigen::Index k = 0; k < q; ++k) rhs.segment(k * kb, kb) = sib.transpose() * yx.col(k);
    pen = difference_penalty(static_cast<int>(kb), 2);
  }
};

// Largest eigenvalue of Psi Lambda Psi' + sigma2 I as a matrix on the grid.
double largest_eigenvalue(const ResidualCovModel& cov) {
  if (cov.psi.cols() == 0) return cov.sigma2;
  const Eigen::VectorXd root = cov.lambda.cwiseSqrt();
  const Eigen::MatrixXd small = root.asDiagonal() * (cov.psi.transpose() * cov.psi) * root.asDiagonal();
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(small, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() +
         cov.sigma2;
}

Eigen::MatrixXd solve_gls(const GlsSystem& sys, const Eigen::VectorXd& penalties, Eigen::MatrixXd* se) {
  const Eigen::Index kb = sys.b.cols(), q = penalties.size();
  const auto llt = factor(sys.h + block_penalty(sys.pen, penalties));
  const Eigen::VectorXd theta = llt.solve(sys.rhs);
  if (se) {
    const Eigen::MatrixXd a_inv_h = llt.solve(sys.h);
    const Eigen::MatrixXd c = llt.solve(a_inv_h.transpose()).transpose();  // A^{-1} H A^{-1}
    se->resize(sys.b.rows(), q);
    for (Eigen::Index k = 0; k < q; ++k) {
      const Eigen::MatrixXd ck = c.block(k * kb, k * kb, kb, kb);
      se->col(k) = ((sys.b * ck).cwiseProduct(sys.b)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
    }
  }
  return curves(sys.b, theta, q);
}

}  // namespace

Eigen::MatrixXd fosr_gls(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SplineBasis<>& basis,
                         const Eigen::VectorXd& grid, const Eigen::VectorXd& penalties, const ResidualCovModel& cov,
                         Eigen::MatrixXd* se) {
  return solve_gls(GlsSystem(x, y, basis, grid, cov), penalties, se);
}

FosrFit fit_fosr(const FunctionalDataset& ds, const std::vector<std::string>& terms, const FosrOptions& opts) {
  require_valid(ds);
  if (!(opts.pve > 0 && opts.pve <= 1)) fail("pve must lie in (0, 1]");
  if (opts.lambda && !(*opts.lambda >= 0)) fail("smoothing parameter must be non-negative");
  for (const auto& name : terms)
    if (!ds.covariate(name)) fail(ErrorKind::not_found, "unknown covariate '" + name + "'");

  FosrFit fit;
  fit.grid = ds.grid;

  // complete cases
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ds.n_curves(); ++i) {
    bool ok = ds.observed.row(i).all();
    for (const auto& name : terms) ok = ok && !ds.covariate(name)->missing(static_cast<std::size_t>(i));
    if (ok) keep.push_back(i);
  }
  fit.dropped_rows = static_cast<std::size_t>(ds.n_curves()) - keep.size();
  if (fit.dropped_rows > 0)
    warn(fit.warnings, "dropped " + std::to_string(fit.dropped_rows) + " incomplete rows (missing curve cells or covariates)");
  const FunctionalDataset cc = select_rows(ds, keep);

  const Design design = build_design(cc, terms);
  fit.coding = design.coding;
  fit.x = design.x;
  const Eigen::Index n = fit.x.rows(), q = fit.x.cols(), d = cc.grid_size();
  if (n <= q) fail("fosr: need more complete curves (" + std::to_string(n) + ") than coefficients (" + std::to_string(q) + ")");
  if (n < 3) fail("fosr: need at least 3 complete curves");
  check_full_rank(fit.x, fit.coding.columns);

  fit.basis_size = opts.basis_size.value_or(default_basis_size(d));
  if (fit.basis_size < 4) fail("fosr: basis size must be at least 4");
  const auto basis = SplineBasis<>::uniform(cc.grid.lower(), cc.grid.upper(), fit.basis_size);
  const Eigen::MatrixXd b = basis.design(cc.grid.points);
  const Eigen::Index kb = b.cols();
  const Eigen::MatrixXd pen = difference_penalty(static_cast<int>(kb), 2);
  const Eigen::MatrixXd& y = cc.values;
  fit.observed = y;
  fit.subject_ids = cc.subject_id;
  fit.visit_indices = cc.visit_index;
  for (const auto& name : terms) fit.covariates.push_back(*cc.covariate(name));

  // stage 1: penalized OLS on the vectorized system (X kron B)
  const Eigen::MatrixXd gram = kron(fit.x.transpose() * fit.x, b.transpose() * b);
  const Eigen::MatrixXd yx = y.transpose() * fit.x;
  Eigen::VectorXd rhs(kb * q);
  for (Eigen::Index k = 0; k < q; ++k) rhs.segment(k * kb, kb) = b.transpose() * yx.col(k);
  // The fit depends on Y only through X'Y: GCV runs on the raw least-squares
  // coefficient curves (weighted by X'X), so between-curve scatter that no
  // coefficient can explain does not count as noise.
  const double yty = (yx * (fit.x.transpose() * fit.x).ldlt().solve(yx.transpose())).trace();
  const auto n_obs = static_cast<double>(q * d);

  fit.smoothing = Eigen::VectorXd::Constant(q, opts.lambda.value_or(0.0));
  if (!opts.lambda) {
    // one common value, then coordinate-wise GCV sweeps
    const Eigen::VectorXd grid = gcv_lambda_grid();
    const Eigen::MatrixXd none = Eigen::MatrixXd::Zero(kb * q, kb * q);
    fit.smoothing.setConstant(grid[gcv_scan(gram, rhs, yty, n_obs, block_penalty(pen, Eigen::VectorXd::Ones(q)), none)]);
    for (int sweep = 0; sweep < kSweeps && q > 1; ++sweep)
      for (Eigen::Index k = 0; k < q; ++k) {
        Eigen::VectorXd others = fit.smoothing, own = Eigen::VectorXd::Zero(q);
        others[k] = 0;
        own[k] = 1;
        fit.smoothing[k] = grid[gcv_scan(gram, rhs, yty, n_obs, block_penalty(pen, own), block_penalty(pen, others))];
      }
  }
  const Eigen::VectorXd theta = factor(gram + block_penalty(pen, fit.smoothing)).solve(rhs);
  fit.beta_ols = curves(b, theta, q);
  const Eigen::MatrixXd resid1 = y - fit.x * fit.beta_ols.transpose();

  // stage 2: residual covariance by FPCA, then GLS with the frozen smoothing
  const double ms = resid1.squaredNorm() / static_cast<double>(n * d);
  Eigen::MatrixXd raw = resid1.transpose() * resid1 / static_cast<double>(n);
  if (ms > 0) {
    Mask include = Mask::Constant(d, d, true);
    include.matrix().diagonal().setConstant(false);
    try {
      const auto comp = covariance_components(cc.grid, raw, include, opts.pve, std::nullopt, 1e-12 * ms, std::nullopt,
                                              &fit.warnings);
      fit.residual_cov.psi = comp.psi;
      fit.residual_cov.lambda = comp.lambda;
      fit.residual_cov.sigma2 = estimate_sigma2(raw.diagonal(), comp.smoothed.diagonal(), cc.grid.weights);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate) throw;
      fit.residual_cov.psi = Eigen::MatrixXd(d, 0);
      fit.residual_cov.lambda = Eigen::VectorXd(0);
      fit.residual_cov.sigma2 = raw.diagonal().mean();
    }
  } else {
    fit.residual_cov.psi = Eigen::MatrixXd(d, 0);
    fit.residual_cov.lambda = Eigen::VectorXd(0);
  }

  const auto& rc = fit.residual_cov;
  const double mean_var =
      ((rc.psi * rc.lambda.asDiagonal()).cwiseProduct(rc.psi).sum() + static_cast<double>(d) * rc.sigma2) /
      static_cast<double>(d);
  if (mean_var > 0) {
    ResidualCovModel gls_cov = rc;
    if (!(gls_cov.sigma2 > 1e-6 * mean_var)) {
      gls_cov.sigma2 = 1e-6 * mean_var;
      warn(fit.warnings, "residual covariance has no measurement-error component; using sigma2 = " +
                             std::to_string(gls_cov.sigma2) + " for the GLS weights");
    }
    // Stage 1 is GLS under Sigma = s I with penalty lambda / s. Dividing by the
    // largest eigenvalue of Sigma keeps every direction's penalty, relative to
    // its information, at or below the stage-1 level; a smaller divisor would
    // shrink coefficient shapes aligned with the residual eigenfunctions.
    const GlsSystem sys(fit.x, y, basis, cc.grid.points, gls_cov);
    fit.beta = solve_gls(sys, fit.smoothing / largest_eigenvalue(gls_cov), &fit.beta_se);
  } else {
    fit.beta = fit.beta_ols;
    fit.beta_se = Eigen::MatrixXd::Zero(d, q);
  }
  fit.residuals = y - fit.x * fit.beta.transpose();
  fit.depths = modified_band_depth(fit.residuals);
  return fit;
}

double band_multiplier(double level) {
  if (!(level > 0 && level < 1)) fail("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), (1.0 + level) / 2.0);
}

CoefBand coef_with_bands(const FosrFit& fit, const std::string& term, double level) {
  const Eigen::Index k = fit.coding.column_index(term);
  if (k < 0) fail(ErrorKind::not_found, "unknown term '" + term + "'");
  const double z = band_multiplier(level);
  CoefBand out;
  out.term = fit.coding.columns[static_cast<std::size_t>(k)];
  out.estimate = fit.beta.col(k);
  out.lower = out.estimate - z * fit.beta_se.col(k);
  out.upper = out.estimate + z * fit.beta_se.col(k);
  out.level = level;
  return out;
}

Eigen::VectorXd predict_mean(const FosrFit& fit, const std::map<std::string, CovariateValue>& x) {
  return fit.beta * design_row(fit.coding, x).transpose();
}

}  // namespace fdaw
