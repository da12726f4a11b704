#include "fdaw/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fdaw/error.hpp"
#include "fdaw/numerics/quadrature.hpp"

namespace fdaw {

Grid::Grid(Eigen::VectorXd pts) : points(std::move(pts)) {
  if (points.size() < 2) fail("grid needs at least 2 points");
  if (!points.allFinite()) fail("grid points must be finite");
  weights = quadrature_weights(points);
}

Grid Grid::uniform(double a, double b, Eigen::Index n) { return Grid(equispaced(a, b, n)); }

bool Covariate::missing(std::size_t row) const {
  return categorical ? labels[row].empty() : std::isnan(numeric[row]);
}

const Covariate* FunctionalDataset::covariate(const std::string& name) const {
  for (const auto& c : covariates)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<std::string> FunctionalDataset::subjects() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : subject_id)
    if (seen.insert(s).second) out.push_back(s);
  return out;
}

std::vector<std::vector<Eigen::Index>> FunctionalDataset::rows_by_subject() const {
  std::unordered_map<std::string, std::size_t> pos;
  std::vector<std::vector<Eigen::Index>> out;
  for (Eigen::Index r = 0; r < n_curves(); ++r) {
    auto [it, inserted] = pos.try_emplace(subject_id[r], out.size());
    if (inserted) out.emplace_back();
    out[it->second].push_back(r);
  }
  return out;
}

FunctionalDataset make_dataset(const Grid& grid, const Eigen::MatrixXd& values, std::vector<std::string> subject_id,
                               std::vector<int> visit_index) {
  if (values.cols() != grid.size()) fail("make_dataset: value columns do not match the grid");
  const auto n = static_cast<std::size_t>(values.rows());
  if (subject_id.empty())
    for (std::size_t i = 0; i < n; ++i) subject_id.push_back("s" + std::to_string(i + 1));
  if (visit_index.empty()) visit_index.assign(n, 1);
  if (subject_id.size() != n || visit_index.size() != n) fail("make_dataset: id vectors do not match row count");
  FunctionalDataset ds;
  ds.grid = grid;
  ds.values = values;
  ds.observed = Mask::Constant(values.rows(), values.cols(), true);
  ds.subject_id = std::move(subject_id);
  ds.visit_index = std::move(visit_index);
  return ds;
}

FunctionalDataset select_rows(const FunctionalDataset& ds, const std::vector<Eigen::Index>& rows) {
  FunctionalDataset out;
  out.grid = ds.grid;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.values.resize(n, ds.grid_size());
  out.observed.resize(n, ds.grid_size());
  if (ds.visit_time) out.visit_time = Eigen::VectorXd(n);
  for (const auto& c : ds.covariates) {
    Covariate copy{c.name, c.categorical, {}, {}, c.levels};
    out.covariates.push_back(std::move(copy));
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index r = rows[k];
    out.values.row(k) = ds.values.row(r);
    out.observed.row(k) = ds.observed.row(r);
    out.subject_id.push_back(ds.subject_id[r]);
    out.visit_index.push_back(ds.visit_index[r]);
    if (ds.visit_time) (*out.visit_time)[k] = (*ds.visit_time)[r];
    for (std::size_t c = 0; c < ds.covariates.size(); ++c) {
      if (ds.covariates[c].categorical)
        out.covariates[c].labels.push_back(ds.covariates[c].labels[r]);
      else
        out.covariates[c].numeric.push_back(ds.covariates[c].numeric[r]);
    }
  }
  return out;
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os << "curves=" << n_curves << " subjects=" << n_subjects << " median_visits=" << median_visits
     << " missing_fraction=" << missing_fraction;
  for (const auto& c : checks) os << "\n  [" << (c.passed ? "pass" : "FAIL") << "] " << c.name << (c.detail.empty() ? "" : ": " + c.detail);
  return os.str();
}

ValidationReport validate(const FunctionalDataset& ds) {
  ValidationReport rep;
  const Eigen::Index n = ds.n_curves();
  const Eigen::Index d = ds.grid_size();
  rep.n_curves = static_cast<std::size_t>(n);

  {
    ValidationCheck c{"grid has D >= 3 points", d >= 3, "D = " + std::to_string(d)};
    rep.checks.push_back(c);
  }
  {
    ValidationCheck c{"grid strictly increasing", true, ""};
    for (Eigen::Index k = 1; k < d && c.passed; ++k)
      if (!(ds.grid.points[k] > ds.grid.points[k - 1])) {
        c.passed = false;
        c.detail = "points not increasing at index " + std::to_string(k);
      }
    if (c.passed && (ds.grid.weights.size() != d || !(ds.grid.weights.array() > 0).all())) {
      c.passed = false;
      c.detail = "quadrature weights must be positive";
    }
    rep.checks.push_back(c);
  }
  {
    ValidationCheck c{"shapes consistent", true, ""};
    if (ds.values.cols() != d || ds.observed.rows() != n || ds.observed.cols() != d ||
        ds.subject_id.size() != static_cast<std::size_t>(n) || ds.visit_index.size() != static_cast<std::size_t>(n) ||
        (ds.visit_time && ds.visit_time->size() != n)) {
      c.passed = false;
      c.detail = "values, mask and per-row vectors disagree in size";
    }
    for (const auto& cov : ds.covariates)
      if ((cov.categorical ? cov.labels.size() : cov.numeric.size()) != static_cast<std::size_t>(n)) {
        c.passed = false;
        c.detail = "covariate '" + cov.name + "' has wrong length";
      }
    rep.checks.push_back(c);
    if (!c.passed) return rep;
  }
  {
    ValidationCheck c{"(subject, visit) pairs unique", true, ""};
    std::set<std::pair<std::string, int>> seen;
    for (Eigen::Index r = 0; r < n; ++r)
      if (!seen.emplace(ds.subject_id[r], ds.visit_index[r]).second) {
        c.passed = false;
        c.detail = "duplicate (" + ds.subject_id[r] + ", " + std::to_string(ds.visit_index[r]) + ") at row " +
                   std::to_string(r + 1);
        break;
      }
    rep.checks.push_back(c);
  }
  {
    ValidationCheck c{"visit indices positive", true, ""};
    for (Eigen::Index r = 0; r < n; ++r)
      if (ds.visit_index[r] < 1) {
        c.passed = false;
        c.detail = "row " + std::to_string(r + 1);
        break;
      }
    rep.checks.push_back(c);
  }
  {
    ValidationCheck c{"every row has >= 2 observed values", true, ""};
    for (Eigen::Index r = 0; r < n; ++r)
      if (ds.observed.row(r).count() < 2) {
        c.passed = false;
        c.detail = "row " + std::to_string(r + 1) + " (subject " + ds.subject_id[r] + ", visit " +
                   std::to_string(ds.visit_index[r]) + ") has " + std::to_string(ds.observed.row(r).count()) +
                   " observed values";
        break;
      }
    rep.checks.push_back(c);
  }
  {
    ValidationCheck c{"observed values finite", true, ""};
    for (Eigen::Index r = 0; r < n && c.passed; ++r)
      for (Eigen::Index a = 0; a < d; ++a)
        if (ds.observed(r, a) && !std::isfinite(ds.values(r, a))) {
          c.passed = false;
          c.detail = "row " + std::to_string(r + 1);
          break;
        }
    rep.checks.push_back(c);
  }
  if (ds.visit_time) {
    ValidationCheck c{"visit_time present on every row", true, ""};
    for (Eigen::Index r = 0; r < n; ++r)
      if (!std::isfinite((*ds.visit_time)[r])) {
        c.passed = false;
        c.detail = "row " + std::to_string(r + 1);
        break;
      }
    rep.checks.push_back(c);
  }

  rep.missing_fraction = n * d > 0 ? 1.0 - static_cast<double>(ds.observed.count()) / static_cast<double>(n * d) : 0.0;
  for (const auto& s : ds.subject_id) ++rep.visits_per_subject[s];
  rep.n_subjects = rep.visits_per_subject.size();
  std::vector<int> counts;
  for (const auto& [s, k] : rep.visits_per_subject) counts.push_back(k);
  std::sort(counts.begin(), counts.end());
  if (!counts.empty()) {
    const std::size_t m = counts.size();
    rep.median_visits = m % 2 ? counts[m / 2] : 0.5 * (counts[m / 2 - 1] + counts[m / 2]);
  }
  return rep;
}

void require_valid(const FunctionalDataset& ds, bool allow_short_grid) {
  const auto rep = validate(ds);
  for (const auto& c : rep.checks)
    if (!c.passed && !(allow_short_grid && c.name == "grid has D >= 3 points")) fail("invalid dataset: " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")"));
}

}  // namespace fdaw
