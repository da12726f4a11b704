#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fdaw/error.hpp"
#include "fdaw/serialize.hpp"
#include "fixtures.hpp"

using namespace fdaw;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fdaw_test_" + std::to_string(::getpid()) + "_" + name);
}

// Serialize, parse back and serialize again.
std::pair<std::string, AnyFit> round_trip(const AnyFit& fit) {
  const std::string text = dump_json(fit_to_json(fit));
  AnyFit back = fit_from_json(Json::parse(text));
  return {text, std::move(back)};
}

bool same_with_nan(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
  }
  return true;
}

}  // namespace

TEST(JsonValues, NanBecomesNull) {
  Eigen::Vector3d v(1.5, std::numeric_limits<double>::quiet_NaN(), -2);
  const Json j = to_json(Eigen::VectorXd(v));
  EXPECT_EQ(j.dump(), "[1.5,null,-2.0]");
  const Eigen::VectorXd back = vector_from_json(j);
  EXPECT_EQ(back[0], 1.5);
  EXPECT_TRUE(std::isnan(back[1]));

  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  EXPECT_EQ(to_json(m).dump(), "[[1.0,2.0],[3.0,4.0]]");
  EXPECT_EQ(matrix_from_json(to_json(m)), m);
  EXPECT_THROW(matrix_from_json(Json::parse("[[1,2],[3]]")), Error);
}

TEST(JsonValues, DoublesRoundTripExactly) {
  Eigen::VectorXd v(4);
  v << 0.1, 1.0 / 3.0, 6.02214076e23, -4.9e-324;
  EXPECT_EQ(vector_from_json(Json::parse(to_json(v).dump())), v);
}

TEST(FitDocument, Header) {
  const Json j = fit_to_json(fixture::fpca());
  EXPECT_EQ(j["format"], "fdaw-fit");
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["kind"], "fpca");
  EXPECT_EQ(j["psi"].size(), static_cast<std::size_t>(fixture::fpca().npc()));
  EXPECT_TRUE(j["observed"][4][7].is_null());
  EXPECT_EQ(fit_to_json(fixture::tvfpca())["mu_surface"]["T"].size(), 21u);
}

TEST(FitDocument, FpcaRoundTrip) {
  const auto& fit = fixture::fpca();
  const auto [text, any] = round_trip(fit);
  ASSERT_EQ(kind_of(any), ModelKind::fpca);
  const auto& back = std::get<FpcaFit>(any);
  EXPECT_EQ(back.mu, fit.mu);
  EXPECT_EQ(back.psi, fit.psi);
  EXPECT_EQ(back.lambda, fit.lambda);
  EXPECT_EQ(back.scores, fit.scores);
  EXPECT_EQ(back.fitted, fit.fitted);
  EXPECT_TRUE(same_with_nan(back.observed, fit.observed));
  EXPECT_EQ(back.grid.points, fit.grid.points);
  EXPECT_EQ(back.grid.weights, fit.grid.weights);
  EXPECT_EQ(back.sigma2, fit.sigma2);
  EXPECT_EQ(back.subject_ids, fit.subject_ids);
  EXPECT_EQ(lincom_curve(back, Eigen::VectorXd::Ones(fit.npc())), lincom_curve(fit, Eigen::VectorXd::Ones(fit.npc())));
  EXPECT_EQ(dump_json(fit_to_json(any)), text);
}

TEST(FitDocument, MfpcaRoundTrip) {
  const auto& fit = fixture::mfpca();
  const auto [text, any] = round_trip(fit);
  const auto& back = std::get<MfpcaFit>(any);
  EXPECT_EQ(back.level1.psi, fit.level1.psi);
  EXPECT_EQ(back.level2.psi, fit.level2.psi);
  EXPECT_EQ(back.level1.scores, fit.level1.scores);
  EXPECT_EQ(back.level2.scores, fit.level2.scores);
  EXPECT_EQ(back.visit_means, fit.visit_means);
  EXPECT_EQ(back.visit_labels, fit.visit_labels);
  EXPECT_TRUE(back.twoway);
  EXPECT_EQ(back.subjects, fit.subjects);
  EXPECT_EQ(back.fitted, fit.fitted);
  EXPECT_EQ(dump_json(fit_to_json(any)), text);
}

TEST(FitDocument, TvFpcaRoundTrip) {
  const auto& fit = fixture::tvfpca();
  const auto [text, any] = round_trip(fit);
  const auto& back = std::get<TvFpcaFit>(any);
  EXPECT_EQ(back.psi, fit.psi);
  EXPECT_EQ(back.marginal_sigma, fit.marginal_sigma);
  EXPECT_EQ(back.raw_scores, fit.raw_scores);
  EXPECT_EQ(back.visit_time, fit.visit_time);
  ASSERT_EQ(back.dynamics.size(), fit.dynamics.size());
  EXPECT_EQ(back.dynamics[0].re_cov, fit.dynamics[0].re_cov);
  // predictions depend on the mean surface and dynamics, both stored exactly
  for (double t : {fit.t_min, 0.37, fit.t_max}) {
    EXPECT_EQ(back.mean.evaluate(back.grid.points, t), fit.mean.evaluate(fit.grid.points, t));
    EXPECT_EQ(predict_curve(back, fit.subjects[2], t), predict_curve(fit, fit.subjects[2], t));
  }
  EXPECT_EQ(dump_json(fit_to_json(any)), text);
}

TEST(FitDocument, FosrRoundTrip) {
  const auto& fit = fixture::fosr();
  const auto [text, any] = round_trip(fit);
  const auto& back = std::get<FosrFit>(any);
  EXPECT_EQ(back.beta, fit.beta);
  EXPECT_EQ(back.beta_se, fit.beta_se);
  EXPECT_EQ(back.x, fit.x);
  EXPECT_EQ(back.residuals, fit.residuals);
  EXPECT_EQ(back.depths, fit.depths);
  EXPECT_EQ(back.coding.columns, fit.coding.columns);
  EXPECT_EQ(back.coding.terms[0].levels, fit.coding.terms[0].levels);
  using X = std::map<std::string, CovariateValue>;
  const X x{{"group", std::string("b")}, {"age", 41.0}};
  EXPECT_EQ(predict_mean(back, x), predict_mean(fit, x));
  EXPECT_EQ(dump_json(fit_to_json(any)), text);
}

TEST(FitDocument, FileRoundTripIsByteStable) {
  const auto a = temp_file("a.json"), b = temp_file("b.json");
  write_fit(a.string(), fixture::fosr());
  write_fit(b.string(), read_fit(a.string()));
  std::ifstream fa(a), fb(b);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.back(), '\n');
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(FitDocument, MalformedDocuments) {
  const auto expect_io = [](const std::string& text) {
    try {
      fit_from_json(Json::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::io) << text;
    }
  };
  expect_io(R"({"format":"other","version":1,"kind":"fpca"})");
  expect_io(R"({"format":"fdaw-fit","version":99,"kind":"fpca"})");
  expect_io(R"({"format":"fdaw-fit","version":1,"kind":"spline"})");
  expect_io(R"({"format":"fdaw-fit","version":1,"kind":"fpca"})");

  const auto path = temp_file("bad.json");
  std::ofstream(path) << "{not json";
  try {
    read_fit(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(read_fit("/nonexistent/fit.json"), Error);
}

TEST(ModelKindNames, RoundTrip) {
  for (ModelKind k : {ModelKind::fpca, ModelKind::mfpca, ModelKind::tvfpca, ModelKind::fosr})
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  EXPECT_THROW(parse_model_kind("pca"), Error);
}
