#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "fdaw/csv.hpp"
#include "fdaw/data.hpp"
#include "fdaw/error.hpp"
#include "fdaw/simulate.hpp"

using namespace fdaw;

namespace {

FunctionalDataset load(const std::string& text, Layout layout) {
  std::istringstream in(text);
  return load_csv(in, layout);
}

std::string error_of(const std::string& text, Layout layout) {
  try {
    load(text, layout);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Csv, WideTwoByThree) {
  const auto ds = load("subject,visit,t=0,t=0.5,t=1\na,1,1,2,3\nb,1,4,5,6\n", Layout::wide);
  EXPECT_EQ(ds.grid_size(), 3);
  EXPECT_EQ(ds.n_curves(), 2);
  EXPECT_FALSE(ds.has_missing());
  EXPECT_TRUE(ds.grid.points.isApprox(Eigen::Vector3d(0, 0.5, 1)));
  Eigen::MatrixXd expected(2, 3);
  expected << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(ds.values, expected);
  const auto rep = validate(ds);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.missing_fraction, 0.0);
}

TEST(Csv, LongPivot) {
  const auto ds = load("subject,visit,t,y\ns1,1,0,1.0\ns1,1,1,3.0\ns2,1,0,2.0\ns2,1,1,4.0\n", Layout::long_format);
  EXPECT_EQ(ds.n_curves(), 2);
  EXPECT_TRUE(ds.grid.points.isApprox(Eigen::Vector2d(0, 1)));
  EXPECT_EQ(ds.values(0, 1), 3.0);
  EXPECT_EQ(ds.values(1, 0), 2.0);
  EXPECT_EQ(ds.subject_id, (std::vector<std::string>{"s1", "s2"}));
}

TEST(Csv, DuplicateCellRejected) {
  const auto msg = error_of("subject,visit,t,y\ns1,1,0,1\ns1,1,0,2\ns1,1,1,3\n", Layout::long_format);
  EXPECT_NE(msg.find("duplicate cell"), std::string::npos) << msg;
  EXPECT_NE(msg.find("rows"), std::string::npos) << msg;
}

TEST(Csv, NonNumericValueRejected) {
  EXPECT_NE(error_of("subject,visit,t,y\ns1,1,0,abc\ns1,1,1,3\n", Layout::long_format).find("non-numeric y"),
            std::string::npos);
  EXPECT_NE(error_of("subject,t=0,t=1,t=2\na,1,x,3\n", Layout::wide).find("non-numeric y"), std::string::npos);
}

TEST(Csv, RowWithOnePointRejected) {
  const auto msg = error_of("subject,t=0,t=1,t=2\na,1,NA,\nb,1,2,3\n", Layout::wide);
  EXPECT_NE(msg.find("subject a"), std::string::npos) << msg;
}

TEST(Csv, MissingCellsMasked) {
  const auto ds = load("subject,t=0,t=1,t=2\na,1,NA,3\nb,1,2,\n", Layout::wide);
  EXPECT_FALSE(ds.observed(0, 1));
  EXPECT_FALSE(ds.observed(1, 2));
  EXPECT_TRUE(ds.observed(1, 1));
  EXPECT_NEAR(validate(ds).missing_fraction, 2.0 / 6.0, 1e-15);
}

TEST(Csv, CovariatesAndVisitTime) {
  const auto ds = load("subject,visit,visit_time,sex,age,t=0,t=1,t=2\na,1,0.5,F,30,1,2,3\nb,1,0.25,M,41.5,1,2,3\n",
                       Layout::wide);
  ASSERT_TRUE(ds.visit_time.has_value());
  EXPECT_EQ((*ds.visit_time)[1], 0.25);
  const Covariate* sex = ds.covariate("sex");
  const Covariate* age = ds.covariate("age");
  ASSERT_TRUE(sex && age);
  EXPECT_TRUE(sex->categorical);
  EXPECT_EQ(sex->levels, (std::vector<std::string>{"F", "M"}));
  EXPECT_FALSE(age->categorical);
  EXPECT_EQ(age->numeric[1], 41.5);
}

TEST(Csv, RoundTripBothLayouts) {
  auto [ds, truth] = simulate(Scenario::tvfpca, default_config(Scenario::tvfpca), 3);
  ds.observed(0, 1) = false;
  ds.values(0, 1) = 0;
  for (Layout layout : {Layout::wide, Layout::long_format}) {
    std::ostringstream out;
    write_csv(out, ds, layout);
    std::istringstream in(out.str());
    const auto back = load_csv(in, layout);
    EXPECT_EQ(back.values, ds.values);
    EXPECT_TRUE((back.observed == ds.observed).all());
    EXPECT_EQ(back.subject_id, ds.subject_id);
    EXPECT_EQ(back.visit_index, ds.visit_index);
    ASSERT_TRUE(back.visit_time.has_value());
    EXPECT_EQ(*back.visit_time, *ds.visit_time);
    EXPECT_EQ(back.grid.points, ds.grid.points);
  }
}

TEST(Validate, AllMissingRowNamesSubject) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Ones(2, 4);
  auto ds = make_dataset(Grid::uniform(0, 1, 4), v, {"x1", "x2"});
  ds.observed.row(1).setConstant(false);
  const auto rep = validate(ds);
  EXPECT_FALSE(rep.ok());
  EXPECT_NE(rep.summary().find("subject x2"), std::string::npos) << rep.summary();
  EXPECT_THROW(require_valid(ds), Error);
}

TEST(Validate, VisitCountsLikeAStudyOf142Subjects) {
  // 142 subjects with 1..7 visits, median 4
  std::vector<std::string> ids;
  std::vector<int> visits;
  for (int s = 0; s < 142; ++s) {
    const int n_visits = s < 40 ? 2 + s % 2 : (s < 102 ? 4 : 5 + s % 3);
    for (int j = 1; j <= n_visits; ++j) {
      ids.push_back("p" + std::to_string(s));
      visits.push_back(j);
    }
  }
  const auto ds = make_dataset(Grid::uniform(0, 1, 5), Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ids.size()), 5), ids, visits);
  const auto rep = validate(ds);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.n_subjects, 142u);
  EXPECT_EQ(rep.median_visits, 4.0);
}

TEST(Validate, DuplicateSubjectVisit) {
  const auto ds = make_dataset(Grid::uniform(0, 1, 3), Eigen::MatrixXd::Zero(2, 3), {"a", "a"}, {1, 1});
  EXPECT_FALSE(validate(ds).ok());
}

TEST(Simulate, ZeroScoresGiveTheMean) {
  SimConfig cfg = default_config(Scenario::fpca);
  cfg.noise_sd = 0;
  cfg.eigenfunctions = {1};
  cfg.eigenvalues = {1.0};
  cfg.zero_scores = true;
  const auto [ds, truth] = simulate(Scenario::fpca, cfg, 1);
  for (Eigen::Index i = 0; i < ds.n_curves(); ++i) EXPECT_LT((ds.values.row(i).transpose() - truth.mean).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Simulate, SameSeedSameOutput) {
  for (Scenario s : {Scenario::fpca, Scenario::mfpca, Scenario::fosr, Scenario::tvfpca}) {
    const auto a = simulate(s, default_config(s), 7);
    const auto b = simulate(s, default_config(s), 7);
    EXPECT_EQ(a.first.values, b.first.values);
    EXPECT_EQ(a.first.subject_id, b.first.subject_id);
    const auto c = simulate(s, default_config(s), 8);
    EXPECT_NE(a.first.values, c.first.values);
  }
}

TEST(Simulate, PointwiseVarianceMatchesModel) {
  // 10 000 independent curves: sample variance at one grid point vs
  // lambda_1 psi_1^2 + lambda_2 psi_2^2 + noise variance
  SimConfig cfg = default_config(Scenario::fpca);
  cfg.n_subjects = 10000;
  const auto [ds, truth] = simulate(Scenario::fpca, cfg, 21);
  const Eigen::Index a = 13;
  const Eigen::VectorXd col = ds.values.col(a);
  const double mean = col.mean();
  const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
  const double t = ds.grid.points[a];
  const double psi1 = std::sqrt(2.0) * std::sin(2 * std::numbers::pi * t);
  const double psi2 = std::sqrt(2.0) * std::cos(2 * std::numbers::pi * t);
  const double expected = 4 * psi1 * psi1 + 1 * psi2 * psi2 + 0.25;
  // standard error of a variance estimate is about var * sqrt(2 / n)
  EXPECT_NEAR(var, expected, 4 * expected * std::sqrt(2.0 / 10000));
}

TEST(Simulate, EigenfunctionsOrthonormal) {
  for (Scenario s : {Scenario::fpca, Scenario::mfpca, Scenario::fosr, Scenario::tvfpca}) {
    const auto [ds, truth] = simulate(s, default_config(s), 2);
    for (const auto& psi : truth.eigenfunctions) {
      const Eigen::MatrixXd g = psi.transpose() * ds.grid.weights.asDiagonal() * psi;
      EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Simulate, NoiselessCurvesInSpan) {
  for (Scenario s : {Scenario::fpca, Scenario::mfpca}) {
    SimConfig cfg = default_config(s);
    cfg.noise_sd = 0;
    cfg.visit_shifts.clear();
    const auto [ds, truth] = simulate(s, cfg, 4);
    Eigen::MatrixXd basis(ds.grid_size(), 1);
    basis.col(0) = truth.mean;
    for (const auto& psi : truth.eigenfunctions) {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + psi.cols());
      basis.rightCols(psi.cols()) = psi;
    }
    const auto qr = basis.colPivHouseholderQr();
    double worst = 0;
    for (Eigen::Index i = 0; i < ds.n_curves(); ++i) {
      const Eigen::VectorXd y = ds.values.row(i).transpose();
      worst = std::max(worst, (basis * qr.solve(y) - y).cwiseAbs().maxCoeff());
    }
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(Simulate, Rejections) {
  SimConfig cfg = default_config(Scenario::fpca);
  cfg.eigenvalues = {1.0, 0.0};
  EXPECT_THROW(simulate(Scenario::fpca, cfg, 1), Error);
  cfg = default_config(Scenario::fpca);
  cfg.eigenvalues = {1.0, 2.0};
  EXPECT_THROW(simulate(Scenario::fpca, cfg, 1), Error);
  cfg = default_config(Scenario::fpca);
  cfg.n_subjects = 1;
  EXPECT_THROW(simulate(Scenario::fpca, cfg, 1), Error);
  cfg = default_config(Scenario::fpca);
  cfg.grid_size = 7;
  EXPECT_THROW(simulate(Scenario::fpca, cfg, 1), Error);
}
