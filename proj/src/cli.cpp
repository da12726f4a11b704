#include "fdaw/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fdaw/csv.hpp"
#include "fdaw/depth.hpp"
#include "fdaw/error.hpp"
#include "fdaw/serialize.hpp"
#include "fdaw/server.hpp"
#include "fdaw/simulate.hpp"

namespace fdaw {

namespace {

constexpr const char* kExtractHelp =
    "Plot dataset to write:\n"
    "  scree       k,lambda,cumulative_pve                  (fpca, mfpca, tvfpca; --level)\n"
    "  component   grid,mean,psi,lower,upper for --k        (fpca, mfpca, tvfpca; --level)\n"
    "  scores      subject,score_x,score_y for --kx/--ky    (fpca, mfpca, tvfpca; --level)\n"
    "  coef        grid,estimate,lower,upper for --term     (fosr; --level-conf)\n"
    "  residuals   residual curves in depth order           (fosr)\n"
    "  trajectory  predicted frames for --subject           (tvfpca; --nT)";

struct FitArgs {
  std::string model, input, layout{"wide"}, out;
  CsvSchema schema;
  std::optional<double> pve, pve2, mean_lambda, cov_lambda, lambda;
  std::optional<int> npc, npc2, basis_size;
  bool twoway{false};
  std::string method;
  std::vector<std::string> terms;
};

struct ExtractArgs {
  std::string fit, what, out, term{"1"}, subject;
  int k{1}, kx{1}, ky{2}, level{1}, n_t{21};
  double level_conf{0.95};
};

struct SimulateArgs {
  std::string scenario, out, truth, layout{"wide"};
  std::optional<std::uint64_t> seed;
  std::optional<int> n, grid_size, min_visits, max_visits;
  std::optional<double> noise_sd;
};

struct ServeArgs {
  std::vector<std::string> models;
  std::string host{"127.0.0.1"}, static_dir;
  int port{8080};
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void configure_logging() {
  auto logger = spdlog::get("fdaw");
  if (!logger) logger = spdlog::stderr_logger_mt("fdaw");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("FDAW_LOG");
  const std::string level = env ? env : "";
  if (level.empty()) spdlog::set_level(spdlog::level::warn);
  else if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else {
    spdlog::set_level(spdlog::level::warn);
    spdlog::warn("FDAW_LOG='{}' not recognized (error, info or debug); using warn", level);
  }
}

std::string num(double v) { return format_double(v); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  return out;
}

[[noreturn]] void extract_kind_error(const std::string& what, const std::string& expected) {
  fail(ErrorKind::kind_mismatch, what + " requires kind " + expected);
}

// ---- fit ----

void require_kind(const FitArgs& a, bool given, const char* flag, std::initializer_list<const char*> kinds) {
  if (!given) return;
  for (const char* k : kinds)
    if (a.model == k) return;
  std::string list;
  for (const char* k : kinds) list += (list.empty() ? "" : " or ") + std::string(k);
  throw UsageError(std::string(flag) + " applies to --model " + list + " only");
}

std::string fit_summary(const AnyFit& fit) {
  std::ostringstream s;
  s << "kind=" << to_string(kind_of(fit));
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        s << " n=" << f.observed.rows() << " D=" << f.grid.size();
        if constexpr (std::is_same_v<T, MfpcaFit>) {
          s << " K=" << f.level1.npc() << "+" << f.level2.npc() << " pve=" << num(f.level1.pve_achieved) << ","
            << num(f.level2.pve_achieved);
        } else if constexpr (std::is_same_v<T, FosrFit>) {
          s << " p=" << f.n_coef() - 1;
        } else {
          s << " K=" << f.npc() << " pve=" << num(f.pve_achieved);
        }
      },
      fit);
  return s.str();
}

int cmd_fit(const FitArgs& a, std::ostream& out) {
  require_kind(a, a.twoway, "--twoway", {"mfpca"});
  require_kind(a, a.pve2 || a.npc2, "--pve2/--npc2", {"mfpca"});
  require_kind(a, !a.method.empty(), "--method", {"tvfpca"});
  require_kind(a, !a.terms.empty() || a.basis_size || a.lambda, "--terms/--basis-size/--lambda", {"fosr"});
  require_kind(a, a.npc.has_value(), "--npc", {"fpca", "mfpca", "tvfpca"});
  require_kind(a, a.mean_lambda || a.cov_lambda, "--mean-lambda/--cov-lambda", {"fpca", "mfpca", "tvfpca"});

  const FunctionalDataset ds = load_csv_file(a.input, parse_layout(a.layout), a.schema);
  spdlog::info("loaded {} curves on {} grid points from {}", ds.n_curves(), ds.grid_size(), a.input);
  AnyFit fit;
  switch (parse_model_kind(a.model)) {
    case ModelKind::fpca: {
      FpcaOptions o;
      if (a.pve) o.pve = *a.pve;
      o.npc = a.npc;
      o.mean_lambda = a.mean_lambda;
      o.cov_lambda = a.cov_lambda;
      fit = fit_fpca(ds, o);
      break;
    }
    case ModelKind::mfpca: {
      MfpcaOptions o;
      o.twoway = a.twoway;
      if (a.pve) o.pve1 = *a.pve;
      o.pve2 = a.pve2.value_or(o.pve1);
      o.npc1 = a.npc;
      o.npc2 = a.npc2;
      o.mean_lambda = a.mean_lambda;
      o.cov_lambda = a.cov_lambda;
      fit = fit_mfpca(ds, o);
      break;
    }
    case ModelKind::tvfpca: {
      TvFpcaOptions o;
      if (!a.method.empty()) o.method = parse_dynamics_method(a.method);
      if (a.pve) o.pve = *a.pve;
      o.npc = a.npc;
      o.mean_lambda = a.mean_lambda;
      o.cov_lambda = a.cov_lambda;
      fit = fit_tvfpca(ds, o);
      break;
    }
    case ModelKind::fosr: {
      FosrOptions o;
      if (a.pve) o.pve = *a.pve;
      o.basis_size = a.basis_size;
      o.lambda = a.lambda;
      fit = fit_fosr(ds, a.terms, o);
      break;
    }
  }
  write_fit(a.out, fit);
  out << fit_summary(fit) << "\n";
  return 0;
}

// ---- extract ----

struct EigenLevel {
  Eigen::MatrixXd psi;
  Eigen::VectorXd lambda;
  double total_variance{0};
  Eigen::VectorXd mean;
  double multiplier{1};
};

EigenLevel eigen_level(const AnyFit& fit, int level, const std::string& what) {
  if (level != 1 && level != 2) throw UsageError("--level must be 1 or 2");
  if (const auto* f = std::get_if<FpcaFit>(&fit)) {
    if (level != 1) fail("fpca has a single level");
    return {f->psi, f->lambda, f->total_variance, f->mu, 1.0};
  }
  if (const auto* f = std::get_if<MfpcaFit>(&fit)) {
    const MfpcaLevel& l = f->level(level);
    return {l.psi, l.lambda, l.total_variance, f->mu, 1.0};
  }
  if (const auto* f = std::get_if<TvFpcaFit>(&fit)) {
    if (level != 1) fail("tvfpca has a single level");
    return {f->psi, f->lambda, f->total_variance, f->pointwise_mean, 2.0};
  }
  extract_kind_error(what, "fpca, mfpca or tvfpca");
}

int checked_component(int k, Eigen::Index npc, const char* flag) {
  if (k < 1 || k > npc)
    fail(ErrorKind::not_found, std::string(flag) + " " + std::to_string(k) + " out of range 1.." + std::to_string(npc));
  return k - 1;
}

const char* arg_name(const AnyFit& fit) { return kind_of(fit) == ModelKind::tvfpca ? "s" : "t"; }

void extract_scree(const AnyFit& fit, const ExtractArgs& a, std::ostream& out) {
  const EigenLevel l = eigen_level(fit, a.level, "scree");
  out << "k,lambda,cumulative_pve\n";
  for (const auto& p : scree_data(l.lambda, l.total_variance))
    out << p.k << ',' << num(p.lambda) << ',' << num(p.cumulative_pve) << '\n';
}

void extract_component(const AnyFit& fit, const ExtractArgs& a, std::ostream& out) {
  const EigenLevel l = eigen_level(fit, a.level, "component");
  const int k = checked_component(a.k, l.lambda.size(), "--k");
  Eigen::VectorXd upper, lower;
  if (const auto* f = std::get_if<FpcaFit>(&fit)) {
    std::tie(upper, lower) = component_band(*f, k + 1);
  } else {
    const Eigen::VectorXd shift = l.multiplier * std::sqrt(l.lambda[k]) * l.psi.col(k);
    upper = l.mean + shift;
    lower = l.mean - shift;
  }
  const Grid& grid = std::visit([](const auto& f) -> const Grid& { return f.grid; }, fit);
  out << arg_name(fit) << ",mean,psi,lower,upper\n";
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    out << num(grid.points[i]) << ',' << num(l.mean[i]) << ',' << num(l.psi(i, k)) << ',' << num(lower[i]) << ','
        << num(upper[i]) << '\n';
}

void extract_scores(const AnyFit& fit, const ExtractArgs& a, std::ostream& out) {
  const EigenLevel l = eigen_level(fit, a.level, "scores");
  const int kx = checked_component(a.kx, l.lambda.size(), "--kx");
  const int ky = checked_component(a.ky, l.lambda.size(), "--ky");
  const Eigen::MatrixXd* s = nullptr;
  const std::vector<std::string>* ids = nullptr;
  const std::vector<int>* visits = nullptr;
  if (const auto* f = std::get_if<FpcaFit>(&fit)) {
    s = &f->scores;
    ids = &f->subject_ids;
  } else if (const auto* f = std::get_if<MfpcaFit>(&fit)) {
    s = &f->level(a.level).scores;
    ids = a.level == 1 ? &f->subjects : &f->subject_ids;
    if (a.level == 2) visits = &f->visit_indices;
  } else if (const auto* f = std::get_if<TvFpcaFit>(&fit)) {
    s = &f->raw_scores;
    ids = &f->subject_ids;
    visits = &f->visit_indices;
  }
  out << (visits ? "subject,visit,score_x,score_y\n" : "subject,score_x,score_y\n");
  for (Eigen::Index i = 0; i < s->rows(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out << (*ids)[u];
    if (visits) out << ',' << (*visits)[u];
    out << ',' << num((*s)(i, kx)) << ',' << num((*s)(i, ky)) << '\n';
  }
}

void extract_coef(const AnyFit& fit, const ExtractArgs& a, std::ostream& out) {
  const auto* f = std::get_if<FosrFit>(&fit);
  if (!f) extract_kind_error("coef", "fosr");
  const CoefBand band = coef_with_bands(*f, a.term, a.level_conf);
  out << "t,estimate,lower,upper\n";
  for (Eigen::Index i = 0; i < f->grid.size(); ++i)
    out << num(f->grid.points[i]) << ',' << num(band.estimate[i]) << ',' << num(band.lower[i]) << ','
        << num(band.upper[i]) << '\n';
}

void extract_residuals(const AnyFit& fit, std::ostream& out) {
  const auto* f = std::get_if<FosrFit>(&fit);
  if (!f) extract_kind_error("residuals", "fosr");
  const DepthResult d = depth_order(f->depths);
  out << "rank,subject,visit,depth,outlier";
  for (Eigen::Index j = 0; j < f->grid.size(); ++j) out << ",t=" << num(f->grid.points[j]);
  out << '\n';
  for (std::size_t pos = 0; pos < d.order.size(); ++pos) {
    const Eigen::Index i = d.order[pos];
    const auto u = static_cast<std::size_t>(i);
    const bool outlier = std::find(d.outlier_indices.begin(), d.outlier_indices.end(), i) != d.outlier_indices.end();
    out << pos + 1 << ',' << f->subject_ids[u] << ',' << f->visit_indices[u] << ',' << num(f->depths[i]) << ','
        << (outlier ? 1 : 0);
    for (Eigen::Index j = 0; j < f->residuals.cols(); ++j) out << ',' << num(f->residuals(i, j));
    out << '\n';
  }
}

void extract_trajectory(const AnyFit& fit, const ExtractArgs& a, std::ostream& out) {
  const auto* f = std::get_if<TvFpcaFit>(&fit);
  if (!f) extract_kind_error("trajectory", "tvfpca");
  if (a.subject.empty()) throw UsageError("trajectory needs --subject");
  const auto frames = predict_trajectory(*f, a.subject, a.n_t);
  out << "frame,T,s,value\n";
  for (std::size_t fr = 0; fr < frames.size(); ++fr)
    for (Eigen::Index i = 0; i < f->grid.size(); ++i)
      out << fr + 1 << ',' << num(frames[fr].t) << ',' << num(f->grid.points[i]) << ',' << num(frames[fr].curve[i])
          << '\n';
}

int cmd_extract(const ExtractArgs& a) {
  const AnyFit fit = read_fit(a.fit);
  std::ostringstream csv;
  if (a.what == "scree") extract_scree(fit, a, csv);
  else if (a.what == "component") extract_component(fit, a, csv);
  else if (a.what == "scores") extract_scores(fit, a, csv);
  else if (a.what == "coef") extract_coef(fit, a, csv);
  else if (a.what == "residuals") extract_residuals(fit, csv);
  else if (a.what == "trajectory") extract_trajectory(fit, a, csv);
  auto out = open_out(a.out);
  out << csv.str();
  return 0;
}

// ---- simulate / serve ----

int cmd_simulate(const SimulateArgs& a) {
  const Scenario scenario = parse_scenario(a.scenario);
  SimConfig cfg = default_config(scenario);
  if (a.n) cfg.n_subjects = *a.n;
  if (a.grid_size) cfg.grid_size = *a.grid_size;
  if (a.min_visits) cfg.min_visits = *a.min_visits;
  if (a.max_visits) cfg.max_visits = *a.max_visits;
  if (a.noise_sd) cfg.noise_sd = *a.noise_sd;
  const auto [ds, truth] = simulate(scenario, cfg, *a.seed);
  {
    auto out = open_out(a.out);
    write_csv(out, ds, parse_layout(a.layout));
  }
  if (!a.truth.empty()) write_json(a.truth, truth_to_json(truth));
  spdlog::info("simulated {} curves ({} subjects) to {}", ds.n_curves(), truth.subjects.size(), a.out);
  return 0;
}

int cmd_serve(const ServeArgs& a) {
  const ModelRegistry reg = load_registry(a.models);
  serve(reg, {a.host, a.port, a.static_dir});
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Functional data analysis fits, plot extracts and an HTTP explorer service", "fdaw"};
  app.require_subcommand(1, 1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a model to a CSV dataset and write the fit JSON");
  fit->add_option("--model", fa.model, "Model kind")->required()->check(CLI::IsMember({"fpca", "mfpca", "tvfpca", "fosr"}));
  fit->add_option("--input", fa.input, "Input CSV")->required();
  fit->add_option("--layout", fa.layout, "CSV layout")->check(CLI::IsMember({"long", "wide"}))->capture_default_str();
  fit->add_option("--out", fa.out, "Output fit JSON")->required();
  fit->add_option("--subject-col", fa.schema.subject, "Subject id column")->capture_default_str();
  fit->add_option("--visit-col", fa.schema.visit, "Visit index column")->capture_default_str();
  fit->add_option("--visit-time-col", fa.schema.visit_time, "Visit time column")->capture_default_str();
  fit->add_option("--t-col", fa.schema.t, "Grid column (long layout)")->capture_default_str();
  fit->add_option("--y-col", fa.schema.y, "Value column (long layout)")->capture_default_str();
  fit->add_option("--categorical", fa.schema.categorical, "Covariates to treat as categorical")->delimiter(',');
  fit->add_option("--pve", fa.pve, "Proportion of variance explained (level 1 for mfpca, residual FPCA for fosr)")
      ->check(CLI::Range(0.0, 1.0));
  fit->add_option("--pve2", fa.pve2, "Level-2 proportion of variance explained (mfpca)")->check(CLI::Range(0.0, 1.0));
  fit->add_option("--npc", fa.npc, "Number of components, overriding --pve")->check(CLI::PositiveNumber);
  fit->add_option("--npc2", fa.npc2, "Level-2 number of components (mfpca)")->check(CLI::PositiveNumber);
  fit->add_flag("--twoway", fa.twoway, "Estimate visit-specific means (mfpca)");
  fit->add_option("--method", fa.method, "Score dynamics (tvfpca)")->check(CLI::IsMember({"lme", "fpca"}));
  fit->add_option("--terms", fa.terms, "Covariate terms (fosr)")->delimiter(',');
  fit->add_option("--basis-size", fa.basis_size, "Coefficient spline basis size (fosr)")->check(CLI::Range(4, 1000));
  fit->add_option("--lambda", fa.lambda, "Fixed coefficient smoothing parameter (fosr)")->check(CLI::NonNegativeNumber);
  fit->add_option("--mean-lambda", fa.mean_lambda, "Fixed mean smoothing parameter")->check(CLI::NonNegativeNumber);
  fit->add_option("--cov-lambda", fa.cov_lambda, "Fixed covariance smoothing parameter")->check(CLI::NonNegativeNumber);

  ExtractArgs ea;
  auto* extract = app.add_subcommand("extract", std::string("Write a plot dataset from a fit as CSV\n") + kExtractHelp);
  extract->add_option("--fit", ea.fit, "Fit JSON")->required();
  extract->add_option("--what", ea.what, "Dataset (see above)")
      ->required()
      ->check(CLI::IsMember({"scree", "component", "scores", "coef", "residuals", "trajectory"}));
  extract->add_option("--out", ea.out, "Output CSV")->required();
  extract->add_option("--k", ea.k, "Component (1-based)")->capture_default_str();
  extract->add_option("--kx", ea.kx, "Component on the x axis")->capture_default_str();
  extract->add_option("--ky", ea.ky, "Component on the y axis")->capture_default_str();
  extract->add_option("--level", ea.level, "Level (mfpca)")->capture_default_str();
  extract->add_option("--term", ea.term, "Coefficient column name or number, 0 = intercept")->capture_default_str();
  extract->add_option("--level-conf", ea.level_conf, "Band confidence level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  extract->add_option("--subject", ea.subject, "Subject id (trajectory)");
  extract->add_option("--nT", ea.n_t, "Number of trajectory frames")->check(CLI::Range(2, 10000))->capture_default_str();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset with ground truth");
  sim->add_option("--scenario", sa.scenario, "Scenario")->required()->check(CLI::IsMember({"fpca", "mfpca", "tvfpca", "fosr"}));
  sim->add_option("--seed", sa.seed, "Random seed")->required();
  sim->add_option("--out", sa.out, "Output CSV")->required();
  sim->add_option("--truth", sa.truth, "Output ground-truth JSON");
  sim->add_option("--layout", sa.layout, "CSV layout")->check(CLI::IsMember({"long", "wide"}))->capture_default_str();
  sim->add_option("--n", sa.n, "Number of subjects")->check(CLI::Range(2, 1000000));
  sim->add_option("--grid-size", sa.grid_size, "Grid points per curve")->check(CLI::Range(8, 100000));
  sim->add_option("--min-visits", sa.min_visits, "Minimum visits per subject")->check(CLI::PositiveNumber);
  sim->add_option("--max-visits", sa.max_visits, "Maximum visits per subject")->check(CLI::PositiveNumber);
  sim->add_option("--noise-sd", sa.noise_sd, "Measurement noise sd")->check(CLI::NonNegativeNumber);

  ServeArgs va;
  auto* srv = app.add_subcommand("serve", "Serve fit files over HTTP under /api");
  srv->add_option("models", va.models, "Fit files, as path or id=path")->required();
  srv->add_option("--host", va.host, "Bind address")->capture_default_str();
  srv->add_option("--port", va.port, "Port")->check(CLI::Range(1, 65535))->capture_default_str();
  srv->add_option("--static", va.static_dir, "Directory of a built UI to serve at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (std::string(e.what()).find("help") == std::string::npos) err << app.help();
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(fa, out);
    if (extract->parsed()) return cmd_extract(ea);
    if (sim->parsed()) return cmd_simulate(sa);
    if (srv->parsed()) return cmd_serve(va);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace fdaw
