#include "fdaw/serialize.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fdaw/error.hpp"

namespace fdaw {

namespace {

double number_from_json(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) fail(ErrorKind::io, "expected a number, got " + std::string(j.type_name()));
  return j.get<double>();
}

Json number_to_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

// Columns of a D x K matrix as K arrays.
Json columns_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < m.cols(); ++k) out.push_back(to_json(Eigen::VectorXd(m.col(k))));
  return out;
}

Eigen::MatrixXd columns_from_json(const Json& j) {
  const Eigen::MatrixXd rows = matrix_from_json(j);
  return rows.transpose();
}

template <typename T>
std::vector<T> list_from_json(const Json& doc, const char* key) {
  return doc.at(key).get<std::vector<T>>();
}

Json grid_to_json(const Grid& grid) { return to_json(grid.points); }
Grid grid_from_json(const Json& j) { return Grid(vector_from_json(j)); }

Json basis_to_json(const SplineBasis<>& b) {
  return {{"lower", b.lower()}, {"upper", b.upper()}, {"degree", b.degree()}, {"interior_knots", b.interior_knots()}};
}

SplineBasis<> basis_from_json(const Json& j) {
  return SplineBasis<>(j.at("lower").get<double>(), j.at("upper").get<double>(),
                       j.at("interior_knots").get<std::vector<double>>(), j.at("degree").get<int>());
}

Json header(ModelKind kind) {
  return {{"format", kFitFormat}, {"version", kFitFormatVersion}, {"kind", to_string(kind)}};
}

Json level_to_json(const MfpcaLevel& l) {
  return {{"psi", columns_to_json(l.psi)},
          {"lambda", to_json(l.lambda)},
          {"scores", to_json(l.scores)},
          {"pve_achieved", l.pve_achieved},
          {"total_variance", l.total_variance}};
}

MfpcaLevel level_from_json(const Json& j) {
  MfpcaLevel l;
  l.psi = columns_from_json(j.at("psi"));
  l.lambda = vector_from_json(j.at("lambda"));
  l.scores = matrix_from_json(j.at("scores"));
  l.pve_achieved = j.at("pve_achieved").get<double>();
  l.total_variance = j.at("total_variance").get<double>();
  if (l.scores.size() == 0) l.scores.resize(0, l.lambda.size());
  if (l.psi.size() == 0) l.psi.resize(0, l.lambda.size());
  return l;
}

Json dynamics_to_json(const ScoreDynamics& d) {
  return {{"method", to_string(d.method)},
          {"fixed", to_json(d.fixed)},
          {"re_cov", to_json(d.re_cov)},
          {"converged", d.converged},
          {"iterations", d.iterations},
          {"t_grid", to_json(d.t_grid)},
          {"phi", to_json(d.phi)},
          {"nu", to_json(d.nu)},
          {"residual_var", d.residual_var},
          {"subject_coef", to_json(d.subject_coef)}};
}

ScoreDynamics dynamics_from_json(const Json& j) {
  ScoreDynamics d;
  d.method = parse_dynamics_method(j.at("method").get<std::string>());
  d.fixed = vector_from_json(j.at("fixed"));
  d.re_cov = matrix_from_json(j.at("re_cov"));
  d.converged = j.at("converged").get<bool>();
  d.iterations = j.at("iterations").get<int>();
  d.t_grid = vector_from_json(j.at("t_grid"));
  d.phi = matrix_from_json(j.at("phi"));
  d.nu = vector_from_json(j.at("nu"));
  d.residual_var = j.at("residual_var").get<double>();
  d.subject_coef = matrix_from_json(j.at("subject_coef"));
  return d;
}

Json covariate_to_json(const Covariate& c) {
  Json j{{"name", c.name}, {"categorical", c.categorical}};
  if (c.categorical) {
    j["values"] = c.labels;
    j["levels"] = c.levels;
  } else {
    Json values = Json::array();
    for (double v : c.numeric) values.push_back(number_to_json(v));
    j["values"] = values;
  }
  return j;
}

Covariate covariate_from_json(const Json& j) {
  Covariate c;
  c.name = j.at("name").get<std::string>();
  c.categorical = j.at("categorical").get<bool>();
  if (c.categorical) {
    c.labels = j.at("values").get<std::vector<std::string>>();
    c.levels = j.at("levels").get<std::vector<std::string>>();
  } else {
    for (const auto& v : j.at("values")) c.numeric.push_back(number_from_json(v));
  }
  return c;
}

FpcaFit fpca_from_json(const Json& j) {
  FpcaFit f;
  f.grid = grid_from_json(j.at("grid"));
  f.mu = vector_from_json(j.at("mu"));
  f.psi = columns_from_json(j.at("psi"));
  f.lambda = vector_from_json(j.at("lambda"));
  if (f.psi.size() == 0) f.psi.resize(f.grid.size(), 0);
  f.sigma2 = j.at("sigma2").get<double>();
  f.scores = matrix_from_json(j.at("scores"));
  f.pve_target = j.at("pve_target").get<double>();
  f.npc_override = j.at("npc_override").get<bool>();
  f.pve_achieved = j.at("pve_achieved").get<double>();
  f.total_variance = j.at("total_variance").get<double>();
  f.fitted = matrix_from_json(j.at("fitted"));
  f.observed = matrix_from_json(j.at("observed"));
  f.subject_ids = list_from_json<std::string>(j, "subject_ids");
  f.visit_indices = list_from_json<int>(j, "visit_indices");
  f.warnings = list_from_json<std::string>(j, "warnings");
  return f;
}

MfpcaFit mfpca_from_json(const Json& j) {
  MfpcaFit f;
  f.grid = grid_from_json(j.at("grid"));
  f.mu = vector_from_json(j.at("mu"));
  f.twoway = j.at("twoway").get<bool>();
  f.visit_labels = list_from_json<int>(j, "visit_labels");
  f.visit_means = matrix_from_json(j.at("visit_means"));
  f.level1 = level_from_json(j.at("level1"));
  f.level2 = level_from_json(j.at("level2"));
  if (f.level1.psi.rows() == 0) f.level1.psi.resize(f.grid.size(), 0);
  if (f.level2.psi.rows() == 0) f.level2.psi.resize(f.grid.size(), 0);
  f.sigma2 = j.at("sigma2").get<double>();
  f.subjects = list_from_json<std::string>(j, "subjects");
  f.fitted = matrix_from_json(j.at("fitted"));
  f.observed = matrix_from_json(j.at("observed"));
  f.subject_ids = list_from_json<std::string>(j, "subject_ids");
  f.visit_indices = list_from_json<int>(j, "visit_indices");
  f.warnings = list_from_json<std::string>(j, "warnings");
  return f;
}

TvFpcaFit tvfpca_from_json(const Json& j) {
  TvFpcaFit f;
  f.grid = grid_from_json(j.at("grid"));
  const auto range = j.at("T_range").get<std::vector<double>>();
  if (range.size() != 2) fail(ErrorKind::io, "T_range must hold two numbers");
  f.t_min = range[0];
  f.t_max = range[1];
  const Json& m = j.at("mean_model");
  f.mean.varies_in_t = m.at("varies_in_t").get<bool>();
  f.mean.offset = vector_from_json(m.at("offset"));
  if (f.mean.varies_in_t) {
    f.mean.s_basis = basis_from_json(m.at("s_basis"));
    f.mean.t_basis = basis_from_json(m.at("t_basis"));
    f.mean.coef = matrix_from_json(m.at("coef"));
  }
  f.pointwise_mean = vector_from_json(j.at("pointwise_mean"));
  f.marginal_sigma = matrix_from_json(j.at("marginal_sigma"));
  f.psi = columns_from_json(j.at("psi"));
  f.lambda = vector_from_json(j.at("lambda"));
  if (f.psi.size() == 0) f.psi.resize(f.grid.size(), 0);
  f.sigma2 = j.at("sigma2").get<double>();
  f.pve_achieved = j.at("pve_achieved").get<double>();
  f.total_variance = j.at("total_variance").get<double>();
  f.raw_scores = matrix_from_json(j.at("raw_scores"));
  for (const auto& d : j.at("dynamics")) f.dynamics.push_back(dynamics_from_json(d));
  f.method = parse_dynamics_method(j.at("method").get<std::string>());
  f.subjects = list_from_json<std::string>(j, "subjects");
  f.subject_ids = list_from_json<std::string>(j, "subject_ids");
  f.visit_indices = list_from_json<int>(j, "visit_indices");
  f.visit_time = vector_from_json(j.at("visit_time"));
  f.observed = matrix_from_json(j.at("observed"));
  f.warnings = list_from_json<std::string>(j, "warnings");
  return f;
}

FosrFit fosr_from_json(const Json& j) {
  FosrFit f;
  f.grid = grid_from_json(j.at("grid"));
  for (const auto& t : j.at("terms"))
    f.coding.terms.push_back(DesignTerm{t.at("name").get<std::string>(), t.at("categorical").get<bool>(),
                                        t.at("levels").get<std::vector<std::string>>()});
  f.coding.columns = list_from_json<std::string>(j, "columns");
  f.x = matrix_from_json(j.at("x"));
  f.beta = columns_from_json(j.at("beta"));
  f.beta_se = columns_from_json(j.at("beta_se"));
  f.beta_ols = columns_from_json(j.at("beta_ols"));
  f.smoothing = vector_from_json(j.at("smoothing"));
  f.basis_size = j.at("basis_size").get<int>();
  f.observed = matrix_from_json(j.at("observed"));
  f.residuals = matrix_from_json(j.at("residuals"));
  const Json& cov = j.at("residual_cov");
  f.residual_cov.psi = columns_from_json(cov.at("psi"));
  f.residual_cov.lambda = vector_from_json(cov.at("lambda"));
  if (f.residual_cov.psi.size() == 0) f.residual_cov.psi.resize(f.grid.size(), 0);
  f.residual_cov.sigma2 = cov.at("sigma2").get<double>();
  f.depths = vector_from_json(j.at("depths"));
  f.subject_ids = list_from_json<std::string>(j, "subject_ids");
  f.visit_indices = list_from_json<int>(j, "visit_indices");
  for (const auto& c : j.at("covariates")) f.covariates.push_back(covariate_from_json(c));
  f.dropped_rows = j.at("dropped_rows").get<std::size_t>();
  f.warnings = list_from_json<std::string>(j, "warnings");
  return f;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::fpca: return "fpca";
    case ModelKind::mfpca: return "mfpca";
    case ModelKind::tvfpca: return "tvfpca";
    case ModelKind::fosr: return "fosr";
  }
  return "fpca";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "fpca") return ModelKind::fpca;
  if (name == "mfpca") return ModelKind::mfpca;
  if (name == "tvfpca") return ModelKind::tvfpca;
  if (name == "fosr") return ModelKind::fosr;
  fail("unknown model kind '" + name + "' (expected fpca, mfpca, tvfpca or fosr)");
}

ModelKind kind_of(const AnyFit& fit) { return static_cast<ModelKind>(fit.index()); }

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v[i]));
  return out;
}

Json to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::io, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::io, "expected an array of rows");
  if (j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) fail(ErrorKind::io, "ragged matrix rows");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = number_from_json(row[static_cast<std::size_t>(k)]);
  }
  return m;
}

Json to_json(const FpcaFit& f) {
  Json j = header(ModelKind::fpca);
  j["grid"] = grid_to_json(f.grid);
  j["mu"] = to_json(f.mu);
  j["psi"] = columns_to_json(f.psi);
  j["lambda"] = to_json(f.lambda);
  j["sigma2"] = f.sigma2;
  j["scores"] = to_json(f.scores);
  j["pve_target"] = f.pve_target;
  j["npc_override"] = f.npc_override;
  j["pve_achieved"] = f.pve_achieved;
  j["total_variance"] = f.total_variance;
  j["fitted"] = to_json(f.fitted);
  j["observed"] = to_json(f.observed);
  j["subject_ids"] = f.subject_ids;
  j["visit_indices"] = f.visit_indices;
  j["warnings"] = f.warnings;
  return j;
}

Json to_json(const MfpcaFit& f) {
  Json j = header(ModelKind::mfpca);
  j["grid"] = grid_to_json(f.grid);
  j["mu"] = to_json(f.mu);
  j["twoway"] = f.twoway;
  j["visit_labels"] = f.visit_labels;
  j["visit_means"] = to_json(f.visit_means);
  j["level1"] = level_to_json(f.level1);
  j["level2"] = level_to_json(f.level2);
  j["sigma2"] = f.sigma2;
  j["subjects"] = f.subjects;
  j["fitted"] = to_json(f.fitted);
  j["observed"] = to_json(f.observed);
  j["subject_ids"] = f.subject_ids;
  j["visit_indices"] = f.visit_indices;
  j["warnings"] = f.warnings;
  return j;
}

Json to_json(const TvFpcaFit& f) {
  Json j = header(ModelKind::tvfpca);
  j["grid"] = grid_to_json(f.grid);
  j["T_range"] = {f.t_min, f.t_max};
  // display slices; the exact surface is carried by mean_model
  const int slices = 21;
  Json t_values = Json::array(), surface = Json::array();
  for (int s = 0; s < slices; ++s) {
    const double t = f.t_min + (f.t_max - f.t_min) * s / (slices - 1);
    t_values.push_back(t);
    surface.push_back(to_json(f.mean.evaluate(f.grid.points, t)));
  }
  j["mu_surface"] = {{"T", t_values}, {"values", surface}};
  Json mean{{"varies_in_t", f.mean.varies_in_t}, {"offset", to_json(f.mean.offset)}};
  if (f.mean.varies_in_t) {
    mean["s_basis"] = basis_to_json(f.mean.s_basis);
    mean["t_basis"] = basis_to_json(f.mean.t_basis);
    mean["coef"] = to_json(f.mean.coef);
  }
  j["mean_model"] = mean;
  j["pointwise_mean"] = to_json(f.pointwise_mean);
  j["marginal_sigma"] = to_json(f.marginal_sigma);
  j["psi"] = columns_to_json(f.psi);
  j["lambda"] = to_json(f.lambda);
  j["sigma2"] = f.sigma2;
  j["pve_achieved"] = f.pve_achieved;
  j["total_variance"] = f.total_variance;
  j["raw_scores"] = to_json(f.raw_scores);
  Json dyn = Json::array();
  for (const auto& d : f.dynamics) dyn.push_back(dynamics_to_json(d));
  j["dynamics"] = dyn;
  j["method"] = to_string(f.method);
  j["subjects"] = f.subjects;
  j["subject_ids"] = f.subject_ids;
  j["visit_indices"] = f.visit_indices;
  j["visit_time"] = to_json(f.visit_time);
  j["observed"] = to_json(f.observed);
  j["warnings"] = f.warnings;
  return j;
}

Json to_json(const FosrFit& f) {
  Json j = header(ModelKind::fosr);
  j["grid"] = grid_to_json(f.grid);
  Json terms = Json::array();
  for (const auto& t : f.coding.terms) terms.push_back({{"name", t.name}, {"categorical", t.categorical}, {"levels", t.levels}});
  j["terms"] = terms;
  j["columns"] = f.coding.columns;
  j["x"] = to_json(f.x);
  j["beta"] = columns_to_json(f.beta);
  j["beta_se"] = columns_to_json(f.beta_se);
  j["beta_ols"] = columns_to_json(f.beta_ols);
  j["smoothing"] = to_json(f.smoothing);
  j["basis_size"] = f.basis_size;
  j["observed"] = to_json(f.observed);
  j["residuals"] = to_json(f.residuals);
  j["residual_cov"] = {{"psi", columns_to_json(f.residual_cov.psi)},
                       {"lambda", to_json(f.residual_cov.lambda)},
                       {"sigma2", f.residual_cov.sigma2}};
  j["depths"] = to_json(f.depths);
  j["subject_ids"] = f.subject_ids;
  j["visit_indices"] = f.visit_indices;
  Json cov = Json::array();
  for (const auto& c : f.covariates) cov.push_back(covariate_to_json(c));
  j["covariates"] = cov;
  j["dropped_rows"] = f.dropped_rows;
  j["warnings"] = f.warnings;
  return j;
}

Json fit_to_json(const AnyFit& fit) {
  return std::visit([](const auto& f) { return to_json(f); }, fit);
}

AnyFit fit_from_json(const Json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kFitFormat)
      fail(ErrorKind::io, "not an fdaw fit document");
    const int version = doc.at("version").get<int>();
    if (version != kFitFormatVersion)
      fail(ErrorKind::io, "unsupported fit format version " + std::to_string(version));
    switch (parse_model_kind(doc.at("kind").get<std::string>())) {
      case ModelKind::fpca: return fpca_from_json(doc);
      case ModelKind::mfpca: return mfpca_from_json(doc);
      case ModelKind::tvfpca: return tvfpca_from_json(doc);
      case ModelKind::fosr: return fosr_from_json(doc);
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, std::string("malformed fit document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io) throw;
    fail(ErrorKind::io, std::string("malformed fit document: ") + e.what());
  }
  fail(ErrorKind::io, "malformed fit document");
}

Json truth_to_json(const GroundTruth& t) {
  Json j{{"scenario", to_string(t.scenario)},
         {"grid", grid_to_json(t.grid)},
         {"mean", to_json(t.mean)},
         {"scores", to_json(t.scores)},
         {"scores2", to_json(t.scores2)},
         {"curve_scores", to_json(t.curve_scores)},
         {"visit_shifts", to_json(t.visit_shifts)},
         {"beta", columns_to_json(t.beta)},
         {"slopes", to_json(t.slopes)},
         {"slope_variances", to_json(t.slope_variances)},
         {"time_trend", t.time_trend},
         {"noise_sd", t.noise_sd},
         {"subjects", t.subjects}};
  Json psi = Json::array(), lambda = Json::array();
  for (const auto& m : t.eigenfunctions) psi.push_back(columns_to_json(m));
  for (const auto& v : t.eigenvalues) lambda.push_back(to_json(v));
  j["eigenfunctions"] = psi;
  j["eigenvalues"] = lambda;
  return j;
}

std::string dump_json(const Json& j) { return j.dump() + "\n"; }

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << dump_json(j);
  if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

void write_fit(const std::string& path, const AnyFit& fit) { write_json(path, fit_to_json(fit)); }

AnyFit read_fit(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open fit file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::io, "'" + path + "' is not valid JSON: " + e.what());
  }
  return fit_from_json(doc);
}

}  // namespace fdaw
