#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fdaw {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Abscissae t_1 < ... < t_D with trapezoid quadrature weights.
struct Grid {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;

  Grid() = default;
  explicit Grid(Eigen::VectorXd pts);

  static Grid uniform(double a, double b, Eigen::Index n);
  Eigen::Index size() const { return points.size(); }
  double lower() const { return points[0]; }
  double upper() const { return points[points.size() - 1]; }
};

// Per-row scalar covariate. Continuous columns use NaN for a missing cell,
// categorical columns an empty label.
struct Covariate {
  std::string name;
  bool categorical{false};
  std::vector<double> numeric;
  std::vector<std::string> labels;
  std::vector<std::string> levels;  // sorted distinct non-missing labels

  bool missing(std::size_t row) const;
};

// Curves on a shared grid. Unobserved cells hold 0 in `values` and false in
// `observed`; every consumer must go through the mask.
struct FunctionalDataset {
  Grid grid;
  Eigen::MatrixXd values;
  Mask observed;
  std::vector<std::string> subject_id;
  std::vector<int> visit_index;
  std::optional<Eigen::VectorXd> visit_time;
  std::vector<Covariate> covariates;

  Eigen::Index n_curves() const { return values.rows(); }
  Eigen::Index grid_size() const { return grid.size(); }
  const Covariate* covariate(const std::string& name) const;
  // Distinct subject ids in order of first appearance.
  std::vector<std::string> subjects() const;
  // Rows belonging to each subject, keyed in order of first appearance.
  std::vector<std::vector<Eigen::Index>> rows_by_subject() const;
  bool has_missing() const { return !observed.all(); }
};

// Builds a dataset with a fully observed mask from dense values; subjects
// default to s1..sn with visit 1.
FunctionalDataset make_dataset(const Grid& grid, const Eigen::MatrixXd& values,
                               std::vector<std::string> subject_id = {}, std::vector<int> visit_index = {});

// Copy of `ds` restricted to the given rows (in that order).
FunctionalDataset select_rows(const FunctionalDataset& ds, const std::vector<Eigen::Index>& rows);

struct ValidationCheck {
  std::string name;
  bool passed{true};
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  double missing_fraction{0};
  std::size_t n_curves{0};
  std::size_t n_subjects{0};
  std::map<std::string, int> visits_per_subject;
  double median_visits{0};

  bool ok() const;
  std::string summary() const;
};

ValidationReport validate(const FunctionalDataset& ds);

// Throws fdaw::Error naming the first failed invariant. Loaders pass
// allow_short_grid so that 2-point grids can be read and reported on.
void require_valid(const FunctionalDataset& ds, bool allow_short_grid = false);

}  // namespace fdaw
