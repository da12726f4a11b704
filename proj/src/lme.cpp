#include "fdaw/lme.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <spdlog/spdlog.h>

#include "fdaw/error.hpp"

namespace fdaw {

namespace {

Eigen::MatrixXd design(const Eigen::VectorXd& t, Eigen::Index q) {
  Eigen::MatrixXd z(t.size(), q);
  z.col(0).setOnes();
  if (q > 1) z.col(1) = t;
  return z;
}

struct Posterior {
  Eigen::VectorXd mean;  // b_i given y_i
  Eigen::MatrixXd cov;
  double loglik{0};
};

// Uses (sigma2 I + D Z'Z)^{-1} D Z' = D Z' V^{-1}, which stays well defined as D
// becomes singular.
Posterior posterior(const Eigen::MatrixXd& z, const Eigen::VectorXd& r, const Eigen::MatrixXd& d, double sigma2) {
  const Eigen::Index q = z.cols();
  const Eigen::MatrixXd ztz = z.transpose() * z;
  const Eigen::MatrixXd m = sigma2 * Eigen::MatrixXd::Identity(q, q) + d * ztz;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  Posterior out;
  out.mean = lu.solve(d * (z.transpose() * r));
  out.cov = sigma2 * lu.solve(d);
  out.cov = (out.cov + out.cov.transpose()) / 2.0;
  // log|V| = (n - q) log sigma2 + log|sigma2 I + D Z'Z|; r'V^{-1}r = r'(r - Z b) / sigma2
  const auto n = static_cast<double>(r.size());
  const double logdet = (n - static_cast<double>(q)) * std::log(sigma2) + std::log(std::abs(lu.determinant()));
  const double quad = r.dot(r - z * out.mean) / sigma2;
  out.loglik = -0.5 * (logdet + quad + n * std::log(2.0 * std::numbers::pi));
  return out;
}

}  // namespace

LmeFit fit_random_line(const std::vector<Eigen::VectorXd>& times, const std::vector<Eigen::VectorXd>& values,
                       const LmeOptions& opts) {
  if (times.size() != values.size()) fail("lme: times and values have different group counts");
  if (times.empty()) fail("lme: no groups");
  std::set<double> distinct;
  Eigen::Index n_total = 0;
  double sum = 0, sumsq = 0;
  for (std::size_t g = 0; g < times.size(); ++g) {
    if (times[g].size() != values[g].size()) fail("lme: group " + std::to_string(g + 1) + " has mismatched lengths");
    if (times[g].size() == 0) fail("lme: group " + std::to_string(g + 1) + " is empty");
    for (Eigen::Index j = 0; j < times[g].size(); ++j) {
      distinct.insert(times[g][j]);
      sum += values[g][j];
      sumsq += values[g][j] * values[g][j];
    }
    n_total += times[g].size();
  }
  const Eigen::Index q = opts.slope && distinct.size() >= 2 ? 2 : 1;
  const auto m = static_cast<Eigen::Index>(times.size());
  const double mean_y = sum / static_cast<double>(n_total);
  const double var_y = std::max(0.0, sumsq / static_cast<double>(n_total) - mean_y * mean_y);

  LmeFit fit;
  fit.beta = Eigen::VectorXd::Zero(q);
  fit.re_cov = Eigen::MatrixXd::Zero(q, q);
  fit.random_effects = Eigen::MatrixXd::Zero(m, q);
  if (sumsq == 0) return fit;

  std::vector<Eigen::MatrixXd> z(m);
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index g = 0; g < m; ++g) {
    z[g] = design(times[g], q);
    xtx += z[g].transpose() * z[g];
  }
  const Eigen::LDLT<Eigen::MatrixXd> xtx_ldlt(xtx);
  const double floor = std::max(1e-12 * var_y, 1e-300);

  // Start from per-group least-squares lines.
  {
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(q);
    for (Eigen::Index g = 0; g < m; ++g) xty += z[g].transpose() * values[g];
    fit.beta = xtx_ldlt.solve(xty);
    std::vector<Eigen::VectorXd> coefs;
    double rss = 0;
    Eigen::Index dof = 0;
    for (Eigen::Index g = 0; g < m; ++g) {
      const std::set<double> tg(times[g].data(), times[g].data() + times[g].size());
      if (static_cast<Eigen::Index>(tg.size()) < q) continue;
      const Eigen::VectorXd c = z[g].colPivHouseholderQr().solve(values[g]);
      rss += (values[g] - z[g] * c).squaredNorm();
      dof += times[g].size() - q;
      coefs.push_back(c - fit.beta);
    }
    if (coefs.size() >= 2) {
      for (const auto& c : coefs) fit.re_cov += c * c.transpose();
      fit.re_cov /= static_cast<double>(coefs.size() - 1);
    } else {
      fit.re_cov(0, 0) = var_y / 2.0;
    }
    fit.sigma2 = dof > 0 ? rss / static_cast<double>(dof) : var_y / 2.0;
    fit.sigma2 = std::max(fit.sigma2, floor);
  }

  double prev = -std::numeric_limits<double>::infinity();
  fit.converged = false;
  std::vector<Posterior> post(m);
  for (fit.iterations = 1; fit.iterations <= opts.max_iterations; ++fit.iterations) {
    double ll = 0;
    for (Eigen::Index g = 0; g < m; ++g) {
      post[g] = posterior(z[g], values[g] - z[g] * fit.beta, fit.re_cov, fit.sigma2);
      ll += post[g].loglik;
    }
    fit.loglik = ll;
    if (std::abs(ll - prev) < opts.tolerance * std::max(1.0, std::abs(ll))) {
      fit.converged = true;
      break;
    }
    prev = ll;

    Eigen::MatrixXd d_new = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(q);
    double s_new = 0;
    for (Eigen::Index g = 0; g < m; ++g) {
      const Eigen::VectorXd& b = post[g].mean;
      d_new += b * b.transpose() + post[g].cov;
      const Eigen::VectorXd e = values[g] - z[g] * (fit.beta + b);
      s_new += e.squaredNorm() + (z[g] * post[g].cov * z[g].transpose()).trace();
      xty += z[g].transpose() * (values[g] - z[g] * b);
    }
    fit.re_cov = d_new / static_cast<double>(m);
    fit.re_cov = (fit.re_cov + fit.re_cov.transpose()) / 2.0;
    fit.sigma2 = std::max(s_new / static_cast<double>(n_total), floor);
    fit.beta = xtx_ldlt.solve(xty);
  }
  if (!fit.converged) {
    fit.iterations = opts.max_iterations;
    spdlog::warn("lme: EM did not converge in {} iterations; returning the last iterate", opts.max_iterations);
  }
  for (Eigen::Index g = 0; g < m; ++g)
    fit.random_effects.row(g) =
        posterior(z[g], values[g] - z[g] * fit.beta, fit.re_cov, fit.sigma2).mean.transpose();
  return fit;
}

}  // namespace fdaw
