#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nvsd/experiments.hpp"
#include "nvsd/io.hpp"
#include "nvsd/model.hpp"

namespace nvsd::cli {

namespace {

using nlohmann::json;

// Raised for inconsistent flags or data; mapped to kExitBadInput.
struct UsageError : Error {
  using Error::Error;
};

struct KernelFlags {
  std::string family = "gaussian";
  std::string sigma = "auto";
  int degree = 3;
  double offset = 1.0;
};

struct SolverFlags {
  double nu = 1e-4;
  int max_iter = 2000;
  double abs_tol = 1e-6;
  double rel_tol = 1e-4;
  double readout_tol = 1e-6;
  double kappa = 1.0;
  std::string s1 = "exact";
  std::string en_route = "folded";
};

struct FitFlags {
  std::string x_path, y_path, xval_path, yval_path;
  KernelFlags kernel;
  SolverFlags solver;
  std::string reg = "l";
  std::string groups_path;
  std::string mu = "0.5";
  std::string tau = "auto";
  int tau_count = 50;
  int tau_decades = 3;
  bool normalize = true;
  std::string model_path, report_path, path_csv;
};

struct PredictFlags {
  std::string model_path, x_path, out_path;
};

struct BenchFlags {
  std::string which;
  std::vector<std::string> methods = {"krls", "nvsd-l", "nvsd-gl", "nvsd-en"};
  std::vector<int> sizes = {30, 50, 70, 90, 110};
  int reps = 10;
  std::uint64_t seed = 1;
  int threads = 0;
  int tau_count = 50;
  int validation_size = 1000;
  int test_size = 1000;
  SolverFlags solver;
  std::string raw_path, aggregate_path;
};

double parse_number(const std::string& text, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw UsageError(std::string(what) + ": '" + text + "' is not a number");
  return v;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, what));
  if (out.empty()) throw UsageError(std::string(what) + ": empty list");
  return out;
}

void add_solver_flags(CLI::App* cmd, SolverFlags& s) {
  cmd->add_option("--nu", s.nu, "Hilbert-norm weight")->capture_default_str();
  cmd->add_option("--max-iter", s.max_iter, "ADMM iteration cap")->capture_default_str();
  cmd->add_option("--abs-tol", s.abs_tol, "absolute stopping tolerance")->capture_default_str();
  cmd->add_option("--rel-tol", s.rel_tol, "relative stopping tolerance")->capture_default_str();
  cmd->add_option("--readout-tol", s.readout_tol, "per-variable residual cap (0 = off)")
      ->capture_default_str();
  cmd->add_option("--kappa", s.kappa, "initial ADMM step size")->capture_default_str();
  cmd->add_option("--s1", s.s1, "omega-step: exact | descent")
      ->check(CLI::IsMember({"exact", "descent"}))
      ->capture_default_str();
  cmd->add_option("--en-route", s.en_route, "elastic net handling: folded | direct")
      ->check(CLI::IsMember({"folded", "direct"}))
      ->capture_default_str();
}

SolverConfig solver_config(const SolverFlags& s) {
  SolverConfig c;
  c.nu = s.nu;
  c.max_iter = s.max_iter;
  c.abs_tol = s.abs_tol;
  c.rel_tol = s.rel_tol;
  c.readout_tol = s.readout_tol;
  c.kappa_init = s.kappa;
  c.s1_mode = s.s1 == "descent" ? S1Mode::InexactDescent : S1Mode::ExactFactorized;
  c.en_route = s.en_route == "direct" ? ElasticNetRoute::DirectProx
                                      : ElasticNetRoute::FoldedQuadratic;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

KernelSpec resolve_kernel(const KernelFlags& f, const Matrix& X_fit) {
  KernelSpec k;
  try {
    k.family = parse_kernel_family(f.family);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  k.degree = f.degree;
  k.offset = f.offset;
  if (k.family == KernelFamily::Gaussian) {
    if (f.sigma == "auto") {
      try {
        k.width = gaussian_width_heuristic(X_fit);
      } catch (const Error& e) {
        throw UsageError(std::string("--sigma auto: ") + e.what());
      }
    } else {
      k.width = parse_number(f.sigma, "--sigma");
    }
  }
  try {
    k.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return k;
}

json kernel_json(const KernelSpec& k) {
  json j{{"family", to_string(k.family)}};
  if (k.family == KernelFamily::Polynomial) {
    j["degree"] = k.degree;
    j["offset"] = k.offset;
  }
  if (k.family == KernelFamily::Gaussian) j["width"] = k.width;
  return j;
}

std::vector<int> one_based(const std::vector<int>& idx) {
  std::vector<int> out(idx);
  for (int& v : out) ++v;
  return out;
}

std::vector<double> to_std(const VectorRef& v) { return {v.data(), v.data() + v.size()}; }

struct TrainingData {
  Matrix X;
  Vector y;
  std::optional<Matrix> Xval;
  std::optional<Vector> yval;
};

TrainingData load_training(const FitFlags& f) {
  TrainingData d;
  d.X = read_csv(f.x_path).data;
  d.y = read_csv_vector(f.y_path);
  if (d.X.rows() != d.y.size())
    throw UsageError(f.x_path + " has " + std::to_string(d.X.rows()) + " rows but " + f.y_path +
                     " has " + std::to_string(d.y.size()));
  if (d.X.rows() < 2) throw UsageError(f.x_path + ": need at least 2 data rows");
  if (d.X.cols() < 1) throw UsageError(f.x_path + ": no columns");
  if (f.xval_path.empty() != f.yval_path.empty())
    throw UsageError("--xval and --yval must be given together");
  if (!f.xval_path.empty()) {
    d.Xval = read_csv(f.xval_path).data;
    d.yval = read_csv_vector(f.yval_path);
    if (d.Xval->cols() != d.X.cols())
      throw UsageError(f.xval_path + ": expected " + std::to_string(d.X.cols()) + " columns");
    if (d.Xval->rows() != d.yval->size() || d.Xval->rows() == 0)
      throw UsageError(f.xval_path + " and " + f.yval_path + " must have the same nonzero length");
  }
  return d;
}

RegularizerSpec resolve_regularizer(const FitFlags& f, int d, std::vector<double>& mu_grid) {
  if (f.reg == "l") return RegularizerSpec::lasso();
  if (f.reg == "gl") {
    if (f.groups_path.empty()) throw UsageError("--reg gl requires --groups");
    const std::string text = read_text_file(f.groups_path);
    try {
      return RegularizerSpec::group_lasso(GroupStructure::from_json(text, d));
    } catch (const Error& e) {
      throw InputError(f.groups_path + ": " + e.what());
    }
  }
  if (f.mu == "grid") {
    mu_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    return RegularizerSpec::elastic_net(mu_grid.front());
  }
  const double mu = parse_number(f.mu, "--mu");
  if (!(mu >= 0.0 && mu <= 1.0)) throw UsageError("--mu must lie in [0, 1]");
  mu_grid = {mu};
  return RegularizerSpec::elastic_net(mu);
}

json history_json(const SolveResult& sol) {
  json h = json::array();
  for (const auto& r : sol.history)
    h.push_back({{"iteration", r.iteration},
                 {"primal_residual", r.primal_residual},
                 {"dual_residual", r.dual_residual},
                 {"kappa", r.kappa}});
  return h;
}

std::string path_csv(const PathResult& path, bool validated) {
  std::ostringstream out;
  out << "tau,mu,support_size,support,objective,iterations,converged,validation_mse\n";
  for (const auto& p : path.points) {
    std::string support;
    for (std::size_t i = 0; i < p.model.support.size(); ++i)
      support += (i ? " " : "") + std::to_string(p.model.support[i] + 1);
    out << format_double(p.tau) << ',' << format_double(p.mu) << ',' << p.model.support.size()
        << ',' << support << ',' << format_double(p.model.objective) << ',' << p.iterations << ','
        << (p.converged ? 1 : 0) << ',' << (validated ? format_double(p.validation_mse) : "")
        << '\n';
  }
  return out.str();
}

// fit and path share everything except what they emit.
int cmd_fit(const FitFlags& f, bool path_mode, std::ostream& out) {
  const SolverConfig base = solver_config(f.solver);
  TrainingData data = load_training(f);
  std::vector<double> mu_grid;
  const RegularizerSpec reg = resolve_regularizer(f, static_cast<int>(data.X.cols()), mu_grid);

  std::optional<Normalization> norm;
  if (f.normalize) norm = Normalization::fit(data.X, data.y);
  const KernelSpec kernel = resolve_kernel(f.kernel, norm ? norm->apply(data.X) : data.X);

  std::vector<double> tau_grid;
  if (f.tau != "auto") {
    tau_grid = parse_list(f.tau, "--tau");
    for (double t : tau_grid)
      if (t < 0.0) throw UsageError("--tau values must be >= 0");
  }
  const bool single = !path_mode && tau_grid.size() == 1 && mu_grid.size() <= 1;
  if (!path_mode && !single && !data.Xval)
    throw UsageError("selecting tau or mu from a grid requires --xval and --yval");
  if (f.tau_count < 2 || f.tau_decades < 1)
    throw UsageError("--tau-count must be >= 2 and --tau-decades >= 1");

  FitOptions fo;
  fo.normalize = f.normalize;
  FittedModel model;
  json report;
  std::optional<PathResult> path;
  if (single) {
    SolverConfig cfg = base;
    cfg.tau = tau_grid.front();
    SolveResult sol;
    model = fit(data.X, data.y, kernel, reg, cfg, fo, &sol);
    report["history"] = history_json(sol);
  } else {
    std::sort(tau_grid.begin(), tau_grid.end(), std::greater<>());
    tau_grid.erase(std::unique(tau_grid.begin(), tau_grid.end()), tau_grid.end());
    PathOptions po;
    po.count = f.tau_count;
    po.decades = f.tau_decades;
    po.tau_grid = tau_grid;
    if (!mu_grid.empty()) po.mu_grid = mu_grid;
    po.fit = fo;
    path = fit_path(data.X, data.y, kernel, reg, base, po);
    if (data.Xval) {
      const std::size_t best = select_by_validation(*path, *data.Xval, *data.yval);
      model = path->points[best].model;
      report["selected_index"] = best;
      report["validation_mse"] = path->points[best].validation_mse;
    }
  }

  if (path_mode) {
    if (f.path_csv.empty()) throw UsageError("path: --out is required");
    write_file_atomic(f.path_csv, path_csv(*path, data.Xval.has_value()));
    if (!f.model_path.empty() && data.Xval) write_file_atomic(f.model_path, model_to_json(model));
    out << "path: " << path->points.size() << " models, " << path->total_iterations()
        << " iterations\n";
    return kExitOk;
  }

  report["support"] = one_based(model.support);
  report["derivative_norms"] = to_std(model.derivative_norms);
  report["objective"] = model.objective;
  report["iterations"] = path ? path->total_iterations() : model.iterations;
  report["converged"] = model.converged;
  report["kernel"] = kernel_json(kernel);
  report["tau"] = model.tau;
  report["nu"] = model.nu;
  report["mu"] = model.mu;
  report["normalized"] = f.normalize;
  report["fitted_values"] = to_std(predict(model, data.X));

  if (!f.model_path.empty()) write_file_atomic(f.model_path, model_to_json(model));
  if (!f.report_path.empty()) write_file_atomic(f.report_path, report.dump(1) + "\n");
  out << "support:";
  for (int a : model.support) out << ' ' << a + 1;
  out << "\nobjective: " << format_double(model.objective) << "\niterations: "
      << report["iterations"].get<int>() << (model.converged ? "" : " (not converged)") << '\n';
  return kExitOk;
}

int cmd_predict(const PredictFlags& f, std::ostream& out) {
  FittedModel model;
  try {
    model = model_from_json(read_text_file(f.model_path));
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(f.model_path + ": " + e.what());
  }
  const CsvTable table = read_csv(f.x_path);
  if (table.header.empty() && table.data.rows() == 0) {
    write_file_atomic(f.out_path, "prediction\n");
    out << "predict: 0 rows\n";
    return kExitOk;
  }
  if (table.data.cols() != model.input_dim)
    throw UsageError(f.x_path + ": expected " + std::to_string(model.input_dim) +
                     " columns, found " + std::to_string(table.data.cols()));
  const Vector yhat = table.data.rows() > 0 ? predict(model, table.data) : Vector();
  write_file_atomic(f.out_path, csv_text({"prediction"}, yhat));
  out << "predict: " << yhat.size() << " rows\n";
  return kExitOk;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  Experiment which;
  std::vector<Method> methods;
  try {
    which = parse_experiment(f.which);
    for (const auto& m : f.methods) methods.push_back(parse_method(m));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  for (int n : f.sizes)
    if (n < 2) throw UsageError("--sizes entries must be >= 2");
  if (f.reps < 1) throw UsageError("--reps must be >= 1");
  if (f.tau_count < 2) throw UsageError("--tau-count must be >= 2");
  if (f.validation_size < 1 || f.test_size < 1)
    throw UsageError("--validation-size and --test-size must be >= 1");

  ExperimentConfig cfg;
  cfg.solver = solver_config(f.solver);
  cfg.tau_count = f.tau_count;
  cfg.validation_size = f.validation_size;
  cfg.test_size = f.test_size;
  cfg.threads = f.threads > 0 ? f.threads : default_thread_count();

  const ExperimentResult res = run_experiment(which, methods, f.sizes, f.reps, f.seed, cfg);
  bool any_ok = false;
  for (const auto& c : res.cells) any_ok = any_ok || c.ok();
  if (!f.raw_path.empty()) write_file_atomic(f.raw_path, res.raw_csv());
  if (!f.aggregate_path.empty()) write_file_atomic(f.aggregate_path, res.aggregate_csv());
  out << res.aggregate_table();
  return any_ok ? kExitOk : kExitSolver;
}

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--x", f.x_path, "training inputs CSV")->required();
  cmd->add_option("--y", f.y_path, "training targets CSV")->required();
  cmd->add_option("--xval", f.xval_path, "validation inputs CSV");
  cmd->add_option("--yval", f.yval_path, "validation targets CSV");
  cmd->add_option("--kernel", f.kernel.family, "linear | polynomial | gaussian")
      ->capture_default_str();
  cmd->add_option("--sigma", f.kernel.sigma, "gaussian width or 'auto'")->capture_default_str();
  cmd->add_option("--degree", f.kernel.degree, "polynomial degree")->capture_default_str();
  cmd->add_option("--offset", f.kernel.offset, "polynomial offset")->capture_default_str();
  cmd->add_option("--reg", f.reg, "l | gl | en")
      ->check(CLI::IsMember({"l", "gl", "en"}))
      ->capture_default_str();
  cmd->add_option("--groups", f.groups_path, "group structure JSON (1-based indices)");
  cmd->add_option("--mu", f.mu, "elastic net mix in [0,1] or 'grid'")->capture_default_str();
  cmd->add_option("--tau", f.tau, "'auto' or comma-separated values")->capture_default_str();
  cmd->add_option("--tau-count", f.tau_count, "automatic grid size")->capture_default_str();
  cmd->add_option("--tau-decades", f.tau_decades, "automatic grid span")->capture_default_str();
  cmd->add_flag("--normalize,!--no-normalize", f.normalize,
                "z-score inputs and center targets")
      ->capture_default_str();
  add_solver_flags(cmd, f.solver);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Derivative-based nonlinear variable selection in kernel spaces"};
  app.name("nvsd");
  app.require_subcommand(1);

  FitFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "fit a sparse model");
  add_fit_flags(fit_cmd, fit_flags);
  fit_cmd->add_option("--model", fit_flags.model_path, "model JSON output");
  fit_cmd->add_option("--report", fit_flags.report_path, "report JSON output");

  FitFlags path_flags;
  auto* path_cmd = app.add_subcommand("path", "compute a regularization path");
  add_fit_flags(path_cmd, path_flags);
  path_cmd->add_option("--out", path_flags.path_csv, "path summary CSV")->required();
  path_cmd->add_option("--model", path_flags.model_path,
                       "model JSON of the validation-selected point");

  PredictFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "predict with a saved model");
  predict_cmd->add_option("--model", predict_flags.model_path, "model JSON")->required();
  predict_cmd->add_option("--x", predict_flags.x_path, "inputs CSV")->required();
  predict_cmd->add_option("--out", predict_flags.out_path, "predictions CSV")->required();

  BenchFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "run a synthetic experiment");
  bench_cmd->add_option("which", bench_flags.which, "e1 | e2 | e3")->required();
  bench_cmd->add_option("--methods", bench_flags.methods, "krls nvsd-l nvsd-gl nvsd-en [+db]")
      ->delimiter(',');
  bench_cmd->add_option("--sizes", bench_flags.sizes, "training sizes")->delimiter(',');
  bench_cmd->add_option("--reps", bench_flags.reps, "replications")->capture_default_str();
  bench_cmd->add_option("--seed", bench_flags.seed, "base seed")->capture_default_str();
  bench_cmd->add_option("--threads", bench_flags.threads, "worker threads (0 = NVSD_THREADS)");
  bench_cmd->add_option("--tau-count", bench_flags.tau_count, "path length")
      ->capture_default_str();
  bench_cmd->add_option("--validation-size", bench_flags.validation_size)->capture_default_str();
  bench_cmd->add_option("--test-size", bench_flags.test_size)->capture_default_str();
  bench_cmd->add_option("--raw", bench_flags.raw_path, "raw results CSV");
  bench_cmd->add_option("--aggregate", bench_flags.aggregate_path, "aggregate CSV");
  add_solver_flags(bench_cmd, bench_flags.solver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "nvsd: " << e.what() << '\n';
    return kExitBadInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit_flags, false, out);
    if (*path_cmd) return cmd_fit(path_flags, true, out);
    if (*predict_cmd) return cmd_predict(predict_flags, out);
    return cmd_bench(bench_flags, out);
  } catch (const InputError& e) {
    err << "nvsd: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const UsageError& e) {
    err << "nvsd: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const Error& e) {
    err << "nvsd: " << e.what() << '\n';
    return kExitSolver;
  }
}

}  // namespace nvsd::cli
