#include "fdaw/server.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "fdaw/depth.hpp"
#include "fdaw/error.hpp"
#include "fdaw/fosr.hpp"
#include "fdaw/fpca.hpp"
#include "fdaw/mfpca.hpp"
#include "fdaw/numerics/quadrature.hpp"
#include "fdaw/tvfpca.hpp"

namespace fdaw {

namespace {

constexpr int kSurfaceSlices = 21;
constexpr int kDynamicsGrid = 21;

struct ApiError {
  int status;
  std::string error;
  std::string detail;
};

[[noreturn]] void bad_request(const std::string& detail) { throw ApiError{400, "bad_request", detail}; }
[[noreturn]] void not_found(const std::string& detail) { throw ApiError{404, "not_found", detail}; }

[[noreturn]] void wrong_kind(const std::string& what, const std::string& expected, ModelKind actual) {
  throw ApiError{409, "kind_mismatch", what + " requires " + expected + " (model kind is " + to_string(actual) + ")"};
}

ApiResponse json_response(const Json& j, int status = 200) { return {status, dump_json(j)}; }

ApiResponse error_response(const ApiError& e) { return json_response({{"error", e.error}, {"detail", e.detail}}, e.status); }

ApiError from_error(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::invalid_argument: return {400, "bad_request", e.what()};
    case ErrorKind::not_found: return {404, "not_found", e.what()};
    case ErrorKind::kind_mismatch: return {409, "kind_mismatch", e.what()};
    case ErrorKind::degenerate:
    case ErrorKind::numerical: return {422, "unprocessable", e.what()};
    case ErrorKind::io: break;
  }
  return {500, "internal", e.what()};
}

std::optional<std::string> query(const ApiRequest& r, const std::string& key) {
  const auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

int parse_int(const std::string& text, const std::string& name) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_request("'" + name + "' must be an integer, got '" + text + "'");
  return v;
}

double parse_double(const std::string& text, const std::string& name) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_request("'" + name + "' must be a number, got '" + text + "'");
  return v;
}

int query_int(const ApiRequest& r, const std::string& key, int fallback) {
  const auto v = query(r, key);
  return v ? parse_int(*v, key) : fallback;
}

Json parse_body(const ApiRequest& r) {
  if (r.body.empty()) bad_request("request body must be a JSON object");
  Json body;
  try {
    body = Json::parse(r.body);
  } catch (const Json::exception&) {
    bad_request("request body is not valid JSON");
  }
  if (!body.is_object()) bad_request("request body must be a JSON object");
  return body;
}

Eigen::VectorXd numeric_array(const Json& body, const std::string& field) {
  if (!body.contains(field)) bad_request("missing field '" + field + "'");
  const Json& a = body.at(field);
  if (!a.is_array()) bad_request("field '" + field + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) bad_request("field '" + field + "' must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

Eigen::VectorXd row_vector(const Eigen::MatrixXd& m, Eigen::Index i) { return m.row(i).transpose(); }

// The functional argument is "s" for tvfpca and "grid" elsewhere.
const char* arg_key(ModelKind kind) { return kind == ModelKind::tvfpca ? "s" : "grid"; }

const Grid& grid_of(const AnyFit& fit) {
  return std::visit([](const auto& f) -> const Grid& { return f.grid; }, fit);
}

Json observed_curves(const Eigen::MatrixXd& observed, const std::vector<std::string>& ids, const std::vector<int>& visits) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < observed.rows(); ++i)
    out.push_back({{"subject", ids[static_cast<std::size_t>(i)]},
                   {"visit", visits[static_cast<std::size_t>(i)]},
                   {"values", to_json(row_vector(observed, i))}});
  return out;
}

// Eigen-components of one level, uniform across the eigen-based kinds.
struct LevelView {
  const Eigen::MatrixXd* psi;
  const Eigen::VectorXd* lambda;
  double total_variance;
  const Eigen::VectorXd* mean;
};

LevelView level_view(const ModelEntry& e, int level, const std::string& what) {
  if (level != 1 && level != 2) bad_request("'level' must be 1 or 2");
  if (const auto* f = std::get_if<FpcaFit>(&e.fit)) {
    if (level != 1) bad_request("fpca has a single level");
    return {&f->psi, &f->lambda, f->total_variance, &f->mu};
  }
  if (const auto* f = std::get_if<MfpcaFit>(&e.fit)) {
    const MfpcaLevel& l = f->level(level);
    return {&l.psi, &l.lambda, l.total_variance, &f->mu};
  }
  if (const auto* f = std::get_if<TvFpcaFit>(&e.fit)) {
    if (level != 1) bad_request("tvfpca has a single level");
    return {&f->psi, &f->lambda, f->total_variance, &f->pointwise_mean};
  }
  wrong_kind(what, "fpca, mfpca or tvfpca", e.kind);
}

int component_index(const std::string& name, int k, Eigen::Index npc) {
  if (k < 1 || k > npc)
    not_found(name + " " + std::to_string(k) + " out of range 1.." + std::to_string(npc));
  return k - 1;
}

template <typename Fit>
const Fit& require(const ModelEntry& e, const std::string& what) {
  const auto* f = std::get_if<Fit>(&e.fit);
  if (!f) {
    const ModelKind expected = static_cast<ModelKind>(AnyFit(Fit{}).index());
    wrong_kind(what, to_string(expected), e.kind);
  }
  return *f;
}

// ---- routes ----

Json models(const ModelRegistry& reg) {
  Json out = Json::array();
  for (const auto& e : reg.entries()) out.push_back({{"id", e.id}, {"kind", to_string(e.kind)}});
  return out;
}

Json summary(const ModelEntry& e) {
  Json j{{"id", e.id}, {"kind", to_string(e.kind)}};
  j[arg_key(e.kind)] = to_json(grid_of(e.fit).points);
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        j["warnings"] = f.warnings;
        j["n_curves"] = f.observed.rows();
        if constexpr (std::is_same_v<T, FpcaFit>) {
          j["npc"] = f.npc();
          j["lambda"] = to_json(f.lambda);
          j["sigma2"] = f.sigma2;
          j["pve_target"] = f.pve_target;
          j["pve_achieved"] = f.pve_achieved;
          j["mu"] = to_json(f.mu);
          j["subjects"] = f.subject_ids;
          j["observed"] = observed_curves(f.observed, f.subject_ids, f.visit_indices);
        } else if constexpr (std::is_same_v<T, MfpcaFit>) {
          j["npc"] = {f.level1.npc(), f.level2.npc()};
          j["lambda1"] = to_json(f.level1.lambda);
          j["lambda2"] = to_json(f.level2.lambda);
          j["pve_achieved"] = {f.level1.pve_achieved, f.level2.pve_achieved};
          j["sigma2"] = f.sigma2;
          j["mu"] = to_json(f.mu);
          j["twoway"] = f.twoway;
          j["visit_labels"] = f.visit_labels;
          j["visit_means"] = to_json(f.visit_means);
          j["subjects"] = f.subjects;
          j["observed"] = observed_curves(f.observed, f.subject_ids, f.visit_indices);
        } else if constexpr (std::is_same_v<T, TvFpcaFit>) {
          j["npc"] = f.npc();
          j["lambda"] = to_json(f.lambda);
          j["sigma2"] = f.sigma2;
          j["pve_achieved"] = f.pve_achieved;
          j["method"] = to_string(f.method);
          j["T_range"] = {f.t_min, f.t_max};
          j["m"] = to_json(f.pointwise_mean);
          j["subjects"] = f.subjects;
          Json curves = observed_curves(f.observed, f.subject_ids, f.visit_indices);
          for (std::size_t i = 0; i < curves.size(); ++i) curves[i]["T"] = f.visit_time[static_cast<Eigen::Index>(i)];
          j["observed"] = curves;
        } else {
          j["columns"] = f.coding.columns;
          Json terms = Json::array();
          for (const auto& t : f.coding.terms) {
            Json term{{"name", t.name}, {"categorical", t.categorical}};
            if (t.categorical) {
              term["levels"] = t.levels;
            } else {
              for (const auto& c : f.covariates)
                if (c.name == t.name && !c.numeric.empty()) {
                  const auto [lo, hi] = std::minmax_element(c.numeric.begin(), c.numeric.end());
                  term["range"] = {*lo, *hi};
                }
            }
            terms.push_back(term);
          }
          j["terms"] = terms;
          j["basis_size"] = f.basis_size;
          j["dropped_rows"] = f.dropped_rows;
          j["smoothing"] = to_json(f.smoothing);
          Json curves = observed_curves(f.observed, f.subject_ids, f.visit_indices);
          for (std::size_t i = 0; i < curves.size(); ++i) {
            Json cov = Json::object();
            for (const auto& c : f.covariates) {
              if (c.categorical) cov[c.name] = c.labels[i];
              else cov[c.name] = c.numeric[i];
            }
            curves[i]["covariates"] = cov;
          }
          j["observed"] = curves;
        }
      },
      e.fit);
  return j;
}

Json components(const ModelEntry& e, const ApiRequest& r) {
  const int level = query_int(r, "level", 1);
  const LevelView v = level_view(e, level, "components");
  const int k = component_index("component", query_int(r, "k", 1), v.lambda->size());
  const double lambda = (*v.lambda)[k];
  // tvfpca plots m(s) +/- 2 sqrt(lambda_k) psi_k; the other kinds use one sd
  const double multiplier = e.kind == ModelKind::tvfpca ? 2.0 : 1.0;
  Eigen::VectorXd upper, lower;
  if (const auto* f = std::get_if<FpcaFit>(&e.fit)) {
    std::tie(upper, lower) = component_band(*f, k + 1);
  } else {
    const Eigen::VectorXd shift = multiplier * std::sqrt(lambda) * v.psi->col(k);
    upper = *v.mean + shift;
    lower = *v.mean - shift;
  }
  Json j{{"k", k + 1},
         {"level", level},
         {"lambda", lambda},
         {"multiplier", multiplier},
         {"mean", to_json(*v.mean)},
         {"psi", to_json(Eigen::VectorXd(v.psi->col(k)))},
         {"upper", to_json(upper)},
         {"lower", to_json(lower)}};
  j[arg_key(e.kind)] = to_json(grid_of(e.fit).points);
  return j;
}

Json scree(const ModelEntry& e, const ApiRequest& r) {
  const int level = query_int(r, "level", 1);
  const LevelView v = level_view(e, level, "scree");
  Json points = Json::array();
  for (const auto& p : scree_data(*v.lambda, v.total_variance))
    points.push_back({{"k", p.k}, {"lambda", p.lambda}, {"cumulative_pve", p.cumulative_pve}});
  return {{"level", level}, {"points", points}};
}

Json lincom(const ModelEntry& e, const ApiRequest& r) {
  const Json body = parse_body(r);
  int level = 1;
  if (body.contains("level")) {
    if (!body["level"].is_number_integer()) bad_request("field 'level' must be 1 or 2");
    level = body["level"].get<int>();
  }
  const LevelView v = level_view(e, level, "lincom");
  const Eigen::VectorXd c = numeric_array(body, "scores");
  if (c.size() != v.lambda->size())
    bad_request("field 'scores' must hold " + std::to_string(v.lambda->size()) + " values, got " + std::to_string(c.size()));
  Eigen::VectorXd curve;
  if (const auto* f = std::get_if<FpcaFit>(&e.fit)) curve = lincom_curve(*f, c);
  else curve = *v.mean + *v.psi * c;
  Json j{{"level", level}, {"curve", to_json(curve)}};
  j[arg_key(e.kind)] = to_json(grid_of(e.fit).points);
  return j;
}

std::vector<int> parse_visits(const ApiRequest& r) {
  std::vector<int> out;
  const auto v = query(r, "visits");
  if (!v) return out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(item, "visits"));
  return out;
}

Json subject_fitted(const ModelEntry& e, const std::string& sid, const ApiRequest& r) {
  const std::vector<int> wanted = parse_visits(r);
  const auto keep = [&](int visit) { return wanted.empty() || std::find(wanted.begin(), wanted.end(), visit) != wanted.end(); };
  Json curves = Json::array();
  bool known = false;
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        for (std::size_t i = 0; i < f.subject_ids.size(); ++i) {
          if (f.subject_ids[i] != sid) continue;
          known = true;
          const int visit = f.visit_indices[i];
          if (!keep(visit)) continue;
          const auto row = static_cast<Eigen::Index>(i);
          Json c{{"visit", visit}, {"observed", to_json(row_vector(f.observed, row))}};
          if constexpr (std::is_same_v<T, TvFpcaFit>) {
            c["T"] = f.visit_time[row];
            c["fitted"] = to_json(predict_curve(f, sid, f.visit_time[row]));
          } else if constexpr (std::is_same_v<T, FosrFit>) {
            c["fitted"] = to_json(Eigen::VectorXd(f.beta * f.x.row(row).transpose()));
          } else {
            c["fitted"] = to_json(row_vector(f.fitted, row));
          }
          curves.push_back(c);
        }
      },
      e.fit);
  if (!known) not_found("unknown subject '" + sid + "'");
  if (curves.empty()) not_found("subject '" + sid + "' has none of the requested visits");
  Json j{{"subject", sid}, {"curves", curves}};
  j[arg_key(e.kind)] = to_json(grid_of(e.fit).points);
  return j;
}

Json scores(const ModelEntry& e, const ApiRequest& r) {
  const int level = query_int(r, "level", 1);
  const LevelView v = level_view(e, level, "scores");
  const Eigen::Index npc = v.lambda->size();
  const int kx = component_index("kx", query_int(r, "kx", 1), npc);
  const int ky = component_index("ky", query_int(r, "ky", std::min<int>(2, static_cast<int>(npc))), npc);
  Json points = Json::array(), curves = Json::array();
  const auto point = [&](const Eigen::MatrixXd& s, Eigen::Index i) { return Json{{"x", s(i, kx)}, {"y", s(i, ky)}}; };
  if (const auto* f = std::get_if<FpcaFit>(&e.fit)) {
    for (Eigen::Index i = 0; i < f->scores.rows(); ++i) {
      Json p = point(f->scores, i);
      p["subject"] = f->subject_ids[static_cast<std::size_t>(i)];
      p["visit"] = f->visit_indices[static_cast<std::size_t>(i)];
      points.push_back(p);
      curves.push_back({{"subject", p["subject"]}, {"visit", p["visit"]}, {"fitted", to_json(row_vector(f->fitted, i))}});
    }
  } else if (const auto* f = std::get_if<MfpcaFit>(&e.fit)) {
    const MfpcaLevel& l = f->level(level);
    for (Eigen::Index i = 0; i < l.scores.rows(); ++i) {
      Json p = point(l.scores, i);
      if (level == 1) {
        p["subject"] = f->subjects[static_cast<std::size_t>(i)];
      } else {
        p["subject"] = f->subject_ids[static_cast<std::size_t>(i)];
        p["visit"] = f->visit_indices[static_cast<std::size_t>(i)];
      }
      points.push_back(p);
    }
    for (Eigen::Index i = 0; i < f->fitted.rows(); ++i)
      curves.push_back({{"subject", f->subject_ids[static_cast<std::size_t>(i)]},
                        {"visit", f->visit_indices[static_cast<std::size_t>(i)]},
                        {"fitted", to_json(row_vector(f->fitted, i))}});
  } else if (const auto* f = std::get_if<TvFpcaFit>(&e.fit)) {
    for (Eigen::Index i = 0; i < f->raw_scores.rows(); ++i) {
      Json p = point(f->raw_scores, i);
      p["subject"] = f->subject_ids[static_cast<std::size_t>(i)];
      p["visit"] = f->visit_indices[static_cast<std::size_t>(i)];
      p["T"] = f->visit_time[i];
      points.push_back(p);
    }
  }
  Json j{{"level", level}, {"kx", kx + 1}, {"ky", ky + 1}, {"points", points}, {"curves", curves}};
  j[arg_key(e.kind)] = to_json(grid_of(e.fit).points);
  return j;
}

Json coef(const ModelEntry& e, const std::string& term, const ApiRequest& r) {
  const auto& f = require<FosrFit>(e, "coef");
  auto level_text = query(r, "level_conf");
  if (!level_text) level_text = query(r, "level");
  const double level = level_text ? parse_double(*level_text, "level_conf") : 0.95;
  if (!(level > 0 && level < 1)) bad_request("'level_conf' must be in (0, 1)");
  const CoefBand band = coef_with_bands(f, term, level);
  return {{"grid", to_json(f.grid.points)},
          {"term", band.term},
          {"level", band.level},
          {"estimate", to_json(band.estimate)},
          {"lower", to_json(band.lower)},
          {"upper", to_json(band.upper)}};
}

Json predict(const ModelEntry& e, const ApiRequest& r) {
  const auto& f = require<FosrFit>(e, "predict");
  const Json body = parse_body(r);
  if (!body.contains("x") || !body["x"].is_object()) bad_request("field 'x' must be an object of covariate values");
  std::map<std::string, CovariateValue> x;
  for (const auto& [name, value] : body["x"].items()) {
    if (value.is_number()) x[name] = value.get<double>();
    else if (value.is_string()) x[name] = value.get<std::string>();
    else bad_request("field 'x." + name + "' must be a number or a string");
  }
  return {{"grid", to_json(f.grid.points)}, {"mean", to_json(predict_mean(f, x))}};
}

Json residuals(const ModelEntry& e, const ApiRequest& r) {
  const auto& f = require<FosrFit>(e, "residuals");
  const std::string order = query(r, "order").value_or("index");
  if (order != "index" && order != "depth") bad_request("'order' must be index or depth");
  const DepthResult d = depth_order(f.depths);
  std::vector<Eigen::Index> rank(d.order.size());
  for (std::size_t pos = 0; pos < d.order.size(); ++pos) rank[static_cast<std::size_t>(d.order[pos])] = static_cast<Eigen::Index>(pos + 1);
  std::vector<Eigen::Index> rows = d.order;
  if (order == "index")
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Eigen::Index>(i);
  Json curves = Json::array();
  for (Eigen::Index i : rows) {
    const auto u = static_cast<std::size_t>(i);
    curves.push_back({{"index", i},
                      {"subject", f.subject_ids[u]},
                      {"visit", f.visit_indices[u]},
                      {"depth", f.depths[i]},
                      {"rank", rank[u]},
                      {"outlier", std::find(d.outlier_indices.begin(), d.outlier_indices.end(), i) != d.outlier_indices.end()},
                      {"residual", to_json(row_vector(f.residuals, i))}});
  }
  return {{"grid", to_json(f.grid.points)},
          {"order", order},
          {"depth", "modified_band"},
          {"median_index", d.median_index},
          {"outlier_indices", d.outlier_indices},
          {"threshold", d.threshold},
          {"curves", curves}};
}

Json visit_times(const ModelEntry& e) {
  const auto& f = require<TvFpcaFit>(e, "visit-times");
  const VisitTimeSummary s = visit_time_summary(f.subject_ids, f.visit_time);
  Json per = Json::object();
  for (const auto& [id, ts] : s.per_subject) per[id] = ts;
  return {{"per_subject", per}, {"edges", to_json(s.edges)}, {"counts", s.counts}, {"rug", s.rug}};
}

Json mean_surface(const ModelEntry& e) {
  const auto& f = require<TvFpcaFit>(e, "mean-surface");
  const Eigen::VectorXd ts = equispaced(f.t_min, f.t_max, kSurfaceSlices);
  Json values = Json::array();
  for (Eigen::Index i = 0; i < ts.size(); ++i) values.push_back(to_json(f.mean.evaluate(f.grid.points, ts[i])));
  return {{"s", to_json(f.grid.points)}, {"T", to_json(ts)}, {"values", values}, {"m", to_json(f.pointwise_mean)}};
}

Json marginal_cov(const ModelEntry& e) {
  const auto& f = require<TvFpcaFit>(e, "marginal-cov");
  return {{"s", to_json(f.grid.points)}, {"values", to_json(f.marginal_sigma)}};
}

Json score_dynamics(const ModelEntry& e, const std::string& k_text) {
  const auto& f = require<TvFpcaFit>(e, "score-dynamics");
  const int k = component_index("component", parse_int(k_text, "k"), f.npc());
  const ScoreDynamics& d = f.dynamics[static_cast<std::size_t>(k)];
  const Eigen::VectorXd ts = equispaced(f.t_min, f.t_max, kDynamicsGrid);
  Json subjects = Json::array();
  for (const auto& sid : f.subjects) {
    Json raw = Json::array();
    for (Eigen::Index i : f.rows_of(sid)) raw.push_back({{"T", f.visit_time[i]}, {"score", f.raw_scores(i, k)}});
    subjects.push_back({{"subject", sid}, {"predicted", to_json(predict_scores(f, sid, k, ts))}, {"raw", raw}});
  }
  Json j{{"k", k + 1}, {"method", to_string(d.method)}, {"T", to_json(ts)}, {"G", to_json(d.G(ts))}, {"subjects", subjects}};
  if (d.method == DynamicsMethod::lme) {
    j["fixed"] = to_json(d.fixed);
    j["re_cov"] = to_json(d.re_cov);
    j["converged"] = d.converged;
  } else {
    j["nu"] = to_json(d.nu);
  }
  j["residual_var"] = d.residual_var;
  return j;
}

Json trajectory(const ModelEntry& e, const std::string& sid, const ApiRequest& r) {
  const auto& f = require<TvFpcaFit>(e, "trajectory");
  if (f.subject_row(sid) < 0) not_found("unknown subject '" + sid + "'");
  const int n_t = query_int(r, "nT", 21);
  if (n_t < 2) bad_request("'nT' must be at least 2");
  Json frames = Json::array(), visits = Json::array();
  for (const auto& fr : predict_trajectory(f, sid, n_t)) frames.push_back({{"T", fr.t}, {"curve", to_json(fr.curve)}});
  for (Eigen::Index i : f.rows_of(sid))
    visits.push_back({{"visit", f.visit_indices[static_cast<std::size_t>(i)]},
                      {"T", f.visit_time[i]},
                      {"observed", to_json(row_vector(f.observed, i))}});
  return {{"s", to_json(f.grid.points)}, {"subject", sid}, {"frames", frames}, {"visits", visits}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/'))
    if (!part.empty()) out.push_back(part);
  return out;
}

Json route(const ModelRegistry& reg, const ApiRequest& r) {
  const auto seg = split_path(r.path);
  if (seg.empty() || seg[0] != "api") not_found("no route for '" + r.path + "'");
  const bool get = r.method == "GET", post = r.method == "POST";
  const auto method_must_be = [&](bool ok, const char* m) {
    if (!ok) throw ApiError{405, "method_not_allowed", std::string(m) + " required for '" + r.path + "'"};
  };
  if (seg.size() == 2 && seg[1] == "models") {
    method_must_be(get, "GET");
    return models(reg);
  }
  if (seg.size() < 4 || seg[1] != "model") not_found("no route for '" + r.path + "'");
  const ModelEntry* e = reg.find(seg[2]);
  if (!e) not_found("unknown model '" + seg[2] + "'");
  const std::string& op = seg[3];
  const std::size_t n = seg.size();
  if (n == 4) {
    if (op == "lincom" || op == "predict") {
      method_must_be(post, "POST");
      return op == "lincom" ? lincom(*e, r) : predict(*e, r);
    }
    method_must_be(get, "GET");
    if (op == "summary") return summary(*e);
    if (op == "components") return components(*e, r);
    if (op == "scree") return scree(*e, r);
    if (op == "scores") return scores(*e, r);
    if (op == "residuals") return residuals(*e, r);
    if (op == "visit-times") return visit_times(*e);
    if (op == "mean-surface") return mean_surface(*e);
    if (op == "marginal-cov") return marginal_cov(*e);
  }
  if (n == 5) {
    method_must_be(get, "GET");
    if (op == "coef") return coef(*e, seg[4], r);
    if (op == "score-dynamics") return score_dynamics(*e, seg[4]);
    if (op == "trajectory") return trajectory(*e, seg[4], r);
  }
  if (n == 6 && op == "subject" && seg[5] == "fitted") {
    method_must_be(get, "GET");
    return subject_fitted(*e, seg[4], r);
  }
  not_found("no route for '" + r.path + "'");
}

}  // namespace

void ModelRegistry::add(std::string id, AnyFit fit, std::string source) {
  if (id.empty()) fail("model id must not be empty");
  if (find(id)) fail("duplicate model id '" + id + "'");
  const ModelKind kind = kind_of(fit);
  entries_.push_back({std::move(id), std::move(source), kind, std::move(fit)});
}

const ModelEntry* ModelRegistry::find(const std::string& id) const {
  for (const auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

ModelRegistry load_registry(const std::vector<std::string>& specs) {
  ModelRegistry reg;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string id = eq == std::string::npos ? std::filesystem::path(path).stem().string() : spec.substr(0, eq);
    reg.add(id, read_fit(path), path);
    spdlog::info("loaded model '{}' ({}) from {}", id, to_string(reg.find(id)->kind), path);
  }
  return reg;
}

ApiRequest ApiRequest::from_target(std::string method, const std::string& target, std::string body) {
  ApiRequest r;
  r.method = std::move(method);
  r.body = std::move(body);
  const auto q = target.find('?');
  r.path = httplib::detail::decode_url(target.substr(0, q), false);
  if (q != std::string::npos) {
    httplib::Params params;
    httplib::detail::parse_query_text(target.substr(q + 1), params);
    for (const auto& [k, v] : params) r.query.emplace(k, v);
  }
  return r;
}

ApiResponse handle(const ModelRegistry& registry, const ApiRequest& request) {
  try {
    return json_response(route(registry, request));
  } catch (const ApiError& e) {
    return error_response(e);
  } catch (const Error& e) {
    return error_response(from_error(e));
  } catch (const std::exception& e) {
    return error_response({500, "internal", e.what()});
  }
}

void serve(const ModelRegistry& registry, const ServeOptions& opts) {
  if (registry.empty()) fail("serve needs at least one model");
  httplib::Server server;
  if (!opts.static_dir.empty() && !server.set_mount_point("/", opts.static_dir))
    fail(ErrorKind::io, "static directory '" + opts.static_dir + "' does not exist");
  const auto forward = [&registry](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    const ApiResponse out = handle(registry, r);
    res.status = out.status;
    res.set_content(out.body, "application/json");
    spdlog::debug("{} {} -> {}", req.method, req.path, out.status);
  };
  server.Get(R"(/api/.*)", forward);
  server.Post(R"(/api/.*)", forward);
  if (!server.bind_to_port(opts.host, opts.port))
    fail(ErrorKind::io, "cannot listen on " + opts.host + ":" + std::to_string(opts.port) + " (port busy?)");
  spdlog::info("serving {} model(s) on http://{}:{}/api", registry.entries().size(), opts.host, opts.port);
  server.listen_after_bind();
}

}  // namespace fdaw
