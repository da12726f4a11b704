#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fdaw/error.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/mfpca.hpp"
#include "fdaw/simulate.hpp"

using namespace fdaw;

namespace {

Mask full_mask(Eigen::Index n, Eigen::Index d) { return Mask::Constant(n, d, true); }

double orthonormality_error(const Grid& grid, const Eigen::MatrixXd& psi) {
  const Eigen::MatrixXd g = psi.transpose() * grid.weights.asDiagonal() * psi;
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

const std::pair<FunctionalDataset, GroundTruth>& seed5() {
  static const auto sim = simulate(Scenario::mfpca, default_config(Scenario::mfpca), 5);
  return sim;
}

const MfpcaFit& seed5_fit() {
  static const MfpcaFit fit = fit_mfpca(seed5().first);
  return fit;
}

}  // namespace

TEST(SplitCovariances, IdenticalVisits) {
  Eigen::MatrixXd c(2, 2);
  c << 1, 1, 1, 1;
  const auto s = split_covariances(c, full_mask(2, 2), {{0, 1}});
  EXPECT_EQ(s.between, Eigen::MatrixXd::Ones(2, 2));
  EXPECT_EQ(s.total, Eigen::MatrixXd::Ones(2, 2));
  EXPECT_EQ(s.within, Eigen::MatrixXd::Zero(2, 2));
}

TEST(SplitCovariances, OpposedVisits) {
  Eigen::MatrixXd c(2, 2);
  c << 1, 1, -1, -1;
  const auto s = split_covariances(c, full_mask(2, 2), {{0, 1}});
  EXPECT_EQ(s.between, -Eigen::MatrixXd::Ones(2, 2));
  EXPECT_EQ(s.total, Eigen::MatrixXd::Ones(2, 2));
  EXPECT_EQ(s.within, 2 * Eigen::MatrixXd::Ones(2, 2));
}

TEST(SplitCovariances, SingleVisitSubjectsRejected) {
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 3);
  try {
    split_covariances(c, full_mask(2, 3), {{0}, {1}});
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("within-subject covariance unidentifiable"), std::string::npos);
  }
}

TEST(SplitCovariances, MatchesPairEnumeration) {
  // Oracle: explicit loops over ordered visit pairs and masked cells.
  const auto& ds = seed5().first;
  auto masked = ds;
  for (Eigen::Index i = 0; i < masked.n_curves(); i += 7) masked.observed(i, (i * 3) % masked.grid_size()) = false;
  const Eigen::VectorXd mu = masked.values.colwise().mean();
  const Eigen::MatrixXd centered = masked.values.rowwise() - mu.transpose();
  const auto groups = masked.rows_by_subject();
  const auto s = split_covariances(centered, masked.observed, groups);
  const Eigen::Index d = masked.grid_size();
  for (Eigen::Index a = 0; a < d; a += 9)
    for (Eigen::Index b = 0; b < d; b += 11) {
      double bsum = 0, bn = 0, tsum = 0, tn = 0;
      for (const auto& rows : groups)
        for (auto i : rows) {
          if (masked.observed(i, a) && masked.observed(i, b)) {
            tsum += centered(i, a) * centered(i, b);
            tn += 1;
          }
          for (auto j : rows)
            if (j != i && masked.observed(i, a) && masked.observed(j, b)) {
              bsum += centered(i, a) * centered(j, b);
              bn += 1;
            }
        }
      EXPECT_NEAR(s.between(a, b), bsum / bn, 1e-10);
      EXPECT_NEAR(s.total(a, b), tsum / tn, 1e-10);
    }
}

TEST(SplitCovariances, WithinPlusBetweenIsTotal) {
  const auto& ds = seed5().first;
  const auto s = split_covariances(ds, ds.values.colwise().mean().transpose());
  EXPECT_TRUE(s.within == s.total - s.between);
  // (a - b) + b may differ from a by one rounding step
  EXPECT_LE((s.within + s.between - s.total).cwiseAbs().maxCoeff(), 4e-16 * s.total.cwiseAbs().maxCoeff());
  EXPECT_LT((s.between - s.between.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((s.total - s.total.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SplitCovariances, VisitPermutationInvariance) {
  const auto& ds = seed5().first;
  const Eigen::VectorXd mu = ds.values.colwise().mean().transpose();
  auto groups = ds.rows_by_subject();
  std::vector<Eigen::Index> permuted_rows;
  for (auto& rows : groups) {
    std::rotate(rows.begin(), rows.begin() + 1, rows.end());
    permuted_rows.insert(permuted_rows.end(), rows.begin(), rows.end());
  }
  auto permuted = select_rows(ds, permuted_rows);
  const auto a = split_covariances(ds, mu);
  const auto b = split_covariances(permuted, mu);
  EXPECT_LT((a.between - b.between).cwiseAbs().maxCoeff(), 1e-12);

  const auto fa = fit_mfpca(ds);
  const auto fb = fit_mfpca(permuted);
  ASSERT_EQ(fa.level1.npc(), fb.level1.npc());
  EXPECT_LT((fa.level1.lambda - fb.level1.lambda).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((fa.level1.psi - fb.level1.psi).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitMfpca, BetweenProportion) {
  const auto& fit = seed5_fit();
  ASSERT_GE(fit.level1.npc(), 1);
  ASSERT_GE(fit.level2.npc(), 1);
  const double p = fit.level1.lambda[0] / (fit.level1.lambda[0] + fit.level2.lambda[0]);
  EXPECT_NEAR(p, 2.0 / 3.0, 0.1);
}

TEST(FitMfpca, Invariants) {
  const auto& ds = seed5().first;
  const auto& fit = seed5_fit();
  for (int l : {1, 2}) {
    const auto& lev = fit.level(l);
    EXPECT_LT(orthonormality_error(fit.grid, lev.psi), 1e-6);
    for (Eigen::Index k = 0; k < lev.npc(); ++k) {
      EXPECT_GT(lev.lambda[k], 0);
      if (k > 0) EXPECT_LE(lev.lambda[k], lev.lambda[k - 1]);
    }
  }
  const auto groups = ds.rows_by_subject();
  for (std::size_t s = 0; s < groups.size(); ++s)
    for (auto i : groups[s]) {
      const Eigen::VectorXd f = fit.mu + fit.level1.psi * fit.level1.scores.row(static_cast<Eigen::Index>(s)).transpose() +
                                fit.level2.psi * fit.level2.scores.row(i).transpose();
      EXPECT_EQ(f.transpose(), fit.fitted.row(i));
    }
  EXPECT_EQ(fit.level1.scores.rows(), 60);
  EXPECT_EQ(fit.level2.scores.rows(), 240);
  EXPECT_EQ(fit.visit_means.size(), 0);
}

TEST(FitMfpca, SubjectScoresTrackTruth) {
  SimConfig cfg = default_config(Scenario::mfpca);
  cfg.noise_sd = 0;
  const auto [ds, truth] = simulate(Scenario::mfpca, cfg, 6);
  const auto fit = fit_mfpca(ds);
  const Eigen::VectorXd a = fit.level1.scores.col(0), b = truth.scores.col(0);
  const double corr = std::abs(((a.array() - a.mean()) * (b.array() - b.mean())).sum()) /
                      std::sqrt((a.array() - a.mean()).square().sum() * (b.array() - b.mean()).square().sum());
  EXPECT_GT(corr, 0.99);
}

TEST(FitMfpca, PureRandomIntercept) {
  SimConfig cfg = default_config(Scenario::mfpca);
  cfg.eigenfunctions = {0};
  cfg.eigenvalues = {2.0};
  cfg.eigenfunctions2.clear();
  cfg.eigenvalues2.clear();
  cfg.noise_sd = 0;
  const auto [ds, truth] = simulate(Scenario::mfpca, cfg, 8);
  const auto fit = fit_mfpca(ds);
  ASSERT_EQ(fit.level1.npc(), 1);
  for (Eigen::Index k = 0; k < fit.level2.npc(); ++k) EXPECT_LT(fit.level2.lambda[k], 1e-6 * fit.level1.lambda[0]);
}

TEST(FitMfpca, TwowayRecoversVisitShift) {
  // Simulated shift of 1 at visit 2; tolerance allows for the level-2 and noise variation
  // left in a difference of two 60-curve means.
  SimConfig cfg = default_config(Scenario::mfpca);
  cfg.min_visits = cfg.max_visits = 2;
  cfg.visit_shifts = {0.0, 1.0};
  cfg.noise_sd = 0.1;
  const auto [ds, truth] = simulate(Scenario::mfpca, cfg, 12);
  MfpcaOptions opts;
  opts.twoway = true;
  const auto fit = fit_mfpca(ds, opts);
  ASSERT_EQ(fit.visit_labels, (std::vector<int>{1, 2}));
  const Eigen::VectorXd diff = fit.visit_mean(2) - fit.visit_mean(1);
  EXPECT_LT((diff.array() - 1.0).abs().maxCoeff(), 0.05 + 3 * std::sqrt(2.0 * (2.0 + 1.0) / 60));
  // the shift estimate is a difference of visit means of the same subjects, so
  // subject effects cancel and only level-2 and noise variation remain
  EXPECT_NEAR(diff.mean(), 1.0, 0.05 + 3 * std::sqrt(2.0 / 60));
  EXPECT_EQ(fit.visit_mean(3), Eigen::VectorXd::Zero(fit.grid.size()));
}

TEST(FitMfpca, ConstructedShiftExact) {
  // visit 2 is visit 1 + 1 exactly for every subject
  const Grid grid = Grid::uniform(0, 1, 30);
  const Eigen::Index n = 20;
  Eigen::MatrixXd v(2 * n, 30);
  std::vector<std::string> ids;
  std::vector<int> visits;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = static_cast<double>(i % 5) - 2, b = static_cast<double>((i * 7) % 9) / 4 - 1;
    for (int j = 0; j < 2; ++j) {
      for (Eigen::Index t = 0; t < 30; ++t)
        v(2 * i + j, t) = a + b * std::sin(2 * std::numbers::pi * grid.points[t]) + j + (j ? 0.2 : -0.2) * std::cos(2 * std::numbers::pi * grid.points[t]) * ((i % 2) ? 1 : -1);
      ids.push_back("s" + std::to_string(i));
      visits.push_back(j + 1);
    }
  }
  const auto ds = make_dataset(grid, v, ids, visits);
  MfpcaOptions opts;
  opts.twoway = true;
  const auto fit = fit_mfpca(ds, opts);
  const Eigen::VectorXd diff = fit.visit_mean(2) - fit.visit_mean(1);
  EXPECT_LT((diff.array() - 1.0).abs().maxCoeff(), 0.05);
}

TEST(FitMfpca, SingleVisitRejected) {
  const auto ds = make_dataset(Grid::uniform(0, 1, 10), Eigen::MatrixXd::Random(5, 10));
  try {
    fit_mfpca(ds);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("within-subject covariance unidentifiable"), std::string::npos);
  }
}

TEST(EstimateScoresMl, ReducesToFpcaScores) {
  const auto [ds, truth] = simulate(Scenario::fpca, default_config(Scenario::fpca), 4);
  const auto fit = fit_fpca(ds);
  const Eigen::MatrixXd centered = ds.values.rowwise() - fit.mu.transpose();
  const auto ml = estimate_scores_ml(centered, ds.observed, ds.rows_by_subject(), fit.psi, fit.lambda,
                                     Eigen::MatrixXd(ds.grid_size(), 0), Eigen::VectorXd(0), fit.sigma2);
  const Eigen::MatrixXd single = estimate_scores(centered, ds.observed, fit.psi, fit.lambda, fit.sigma2);
  EXPECT_LT((ml.level1 - single).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(ml.level2.cols(), 0);
}

TEST(EstimateScoresMl, ZeroDataZeroScores) {
  const auto& fit = seed5_fit();
  const auto& ds = seed5().first;
  const auto ml = estimate_scores_ml(Eigen::MatrixXd::Zero(ds.n_curves(), ds.grid_size()), ds.observed,
                                     ds.rows_by_subject(), fit.level1.psi, fit.level1.lambda, fit.level2.psi,
                                     fit.level2.lambda, fit.sigma2);
  EXPECT_EQ(ml.level1.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ml.level2.cwiseAbs().maxCoeff(), 0.0);
}
