#include "nvsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <json.hpp>

namespace nvsd {

namespace {

using nlohmann::json;

Matrix select_columns(const MatrixRef& X, const std::vector<int>& columns) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = X.col(columns[c]);
  return out;
}

std::vector<int> all_columns(Eigen::Index d) {
  std::vector<int> cols(static_cast<std::size_t>(d));
  for (std::size_t a = 0; a < cols.size(); ++a) cols[a] = static_cast<int>(a);
  return cols;
}

void validate_xy(const MatrixRef& X, const VectorRef& y, Eigen::Index min_rows) {
  validate_data(X, "inputs");
  if (X.rows() != y.size())
    throw Error("inputs have " + std::to_string(X.rows()) + " rows but targets have " +
                std::to_string(y.size()) + " entries");
  if (!y.allFinite()) throw Error("targets: non-finite entries");
  if (X.rows() < min_rows)
    throw Error("need at least " + std::to_string(min_rows) + " training points");
}

// Solves (K + shift I) x = y, escalating a relative jitter when K is singular.
Vector regularized_solve(const Matrix& K, double shift, const VectorRef& y) {
  const Eigen::Index n = K.rows();
  const double scale = std::max(K.trace() / static_cast<double>(n), 1e-300);
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Matrix m = K;
    m.diagonal().array() += shift + jitter;
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) return llt.solve(y);
    jitter = jitter == 0.0 ? 1e-12 * scale : jitter * 10.0;
  }
  throw Error("kernel ridge: system is singular beyond jitter");
}

Vector derivative_norms_of_expansion(const KernelSpec& kernel, const Matrix& X,
                                     const Vector& alpha) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Matrix grads = Matrix::Zero(d, n);  // column i: gradient of f at x_i
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      grads.col(i) += alpha[j] * kernel_grad1(kernel, X.row(i).transpose(), X.row(j).transpose());
  return grads.rowwise().norm() / std::sqrt(static_cast<double>(n));
}

json kernel_to_json(const KernelSpec& k) {
  json j{{"family", to_string(k.family)}};
  if (k.family == KernelFamily::Polynomial) {
    j["degree"] = k.degree;
    j["offset"] = k.offset;
  }
  if (k.family == KernelFamily::Gaussian) j["width"] = k.width;
  return j;
}

KernelSpec kernel_from_json(const json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  if (k.family == KernelFamily::Polynomial) {
    k.degree = j.at("degree").get<int>();
    k.offset = j.at("offset").get<double>();
  }
  if (k.family == KernelFamily::Gaussian) k.width = j.at("width").get<double>();
  k.validate();
  return k;
}

std::vector<double> to_std(const VectorRef& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<int> to_one_based(const std::vector<int>& idx) {
  std::vector<int> out(idx);
  for (int& v : out) ++v;
  return out;
}

std::vector<int> to_zero_based(const json& j) {
  auto out = j.get<std::vector<int>>();
  for (int& v : out) --v;
  return out;
}

}  // namespace

Normalization Normalization::fit(const MatrixRef& X, const VectorRef& y) {
  Normalization norm;
  const double rows = static_cast<double>(X.rows());
  norm.x_mean = X.colwise().mean().transpose();
  norm.x_scale.resize(X.cols());
  for (Eigen::Index a = 0; a < X.cols(); ++a) {
    const double ss = (X.col(a).array() - norm.x_mean[a]).square().sum();
    const double sd = X.rows() > 1 ? std::sqrt(ss / (rows - 1.0)) : 0.0;
    norm.x_scale[a] = sd > 0.0 ? sd : 1.0;
  }
  norm.y_mean = y.size() > 0 ? y.mean() : 0.0;
  return norm;
}

Matrix Normalization::apply(const MatrixRef& X) const {
  if (X.cols() != x_mean.size()) throw Error("normalization: dimension mismatch");
  return (X.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array();
}

FittedModel model_from_solution(const KernelSpec& kernel, const MatrixRef& X_fit,
                                const SolveResult& sol, const RegularizerSpec& reg,
                                const SolverConfig& config,
                                const std::optional<Normalization>& normalization) {
  const Eigen::Index n = X_fit.rows();
  FittedModel m;
  m.kernel = kernel;
  m.input_dim = static_cast<int>(X_fit.cols());
  m.columns = all_columns(X_fit.cols());
  m.x_train = X_fit;
  m.alpha = sol.alpha(n);
  m.beta = sol.beta(n);
  m.support = sol.support;
  m.derivative_norms = sol.derivative_norms;
  m.tau = config.tau;
  m.nu = config.nu;
  m.mu = reg.kind == RegularizerKind::ElasticNet ? reg.mu : 1.0;
  m.normalization = normalization;
  m.objective = sol.objective;
  m.iterations = sol.iterations;
  m.converged = sol.converged;
  return m;
}

FittedModel fit(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel,
                const RegularizerSpec& reg, const SolverConfig& config,
                const FitOptions& options, SolveResult* solve_out) {
  validate_xy(X, y, 2);
  std::optional<Normalization> norm;
  Matrix Xf = X;
  Vector yf = y;
  if (options.normalize) {
    norm = Normalization::fit(X, y);
    Xf = norm->apply(X);
    yf.array() -= norm->y_mean;
  }
  const OperatorSet ops = assemble_operators(kernel, Xf, options.memory_cap);
  AdmmSolver solver(ops, yf);
  SolveResult sol = solver.solve(reg, config);
  FittedModel model = model_from_solution(kernel, Xf, sol, reg, config, norm);
  if (solve_out) *solve_out = std::move(sol);
  return model;
}

Vector predict(const FittedModel& model, const MatrixRef& Xstar) {
  if (Xstar.cols() != model.input_dim)
    throw Error("predict: expected " + std::to_string(model.input_dim) + " columns, got " +
                std::to_string(Xstar.cols()));
  double base = model.offset;
  if (model.normalization) base += model.normalization->y_mean;
  if (model.columns.empty() || model.alpha.size() == 0)
    return Vector::Constant(Xstar.rows(), base);
  Matrix P = select_columns(Xstar, model.columns);
  if (model.normalization) P = model.normalization->apply(P);
  Vector out = kernel_expansion(model.kernel, model.x_train, model.alpha, model.beta, P);
  out.array() += base;
  return out;
}

std::vector<double> auto_tau_grid(AdmmSolver& solver, const RegularizerSpec& reg,
                                  const SolverConfig& config, int count, int decades) {
  if (count < 2) throw Error("tau grid: count must be >= 2");
  if (decades < 1) throw Error("tau grid: decades must be >= 1");
  const OperatorSet& ops = solver.operators();
  const Vector& y = solver.targets();
  if (y.size() == 0 || y.maxCoeff() == y.minCoeff())
    throw Error("tau grid: degenerate targets (all values equal)");
  if (reg.kind == RegularizerKind::ElasticNet && !(reg.mu > 0.0))
    throw Error("tau grid: elastic net with mu = 0 never produces an empty support");

  const Eigen::Index n = ops.n;
  const double rn = static_cast<double>(n);
  // Derivatives of the tau = 0 (kernel ridge) solution at the training points.
  const Vector ridge_alpha = regularized_solve(ops.K, rn * config.nu, y);
  const Vector ridge_derivs = ops.D * ridge_alpha;
  const Vector block_norms = partial_derivative_norms(ridge_derivs, n);

  double peak = 0.0;
  if (reg.kind == RegularizerKind::GroupLasso) {
    for (int g = 0; g < reg.groups.num_groups(); ++g) {
      double sq = 0.0;
      for (int a : reg.groups.group(g)) sq += block_norms[a] * block_norms[a];
      peak = std::max(peak, std::sqrt(sq) / reg.groups.size(g));
    }
  } else {
    peak = block_norms.maxCoeff();
    if (reg.kind == RegularizerKind::ElasticNet) peak /= reg.mu;
  }
  double tau_max = 2.0 * peak;
  if (!(tau_max > 0.0)) tau_max = 1.0;

  // Enlarge until the solver confirms an empty support.
  SolverConfig probe = config;
  std::optional<SolverState> warm;
  for (int attempt = 0;; ++attempt) {
    probe.tau = tau_max;
    const SolveResult sol = solver.solve(reg, probe, warm ? &*warm : nullptr);
    if (sol.support.empty()) break;
    if (attempt >= 40) throw Error("tau grid: could not find a tau with empty support");
    warm = sol.state();
    tau_max *= 2.0;
  }

  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    grid[static_cast<std::size_t>(i)] =
        tau_max * std::pow(10.0, -static_cast<double>(decades) * i / (count - 1));
  return grid;
}

int PathResult::total_iterations() const {
  int total = 0;
  for (const auto& p : points) total += p.iterations;
  return total;
}

PathResult fit_path(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel,
                    const RegularizerSpec& reg, const SolverConfig& config,
                    const PathOptions& options) {
  validate_xy(X, y, 2);
  for (std::size_t i = 1; i < options.tau_grid.size(); ++i)
    if (!(options.tau_grid[i] < options.tau_grid[i - 1]))
      throw Error("tau grid must be strictly decreasing");

  std::optional<Normalization> norm;
  Matrix Xf = X;
  Vector yf = y;
  if (options.fit.normalize) {
    norm = Normalization::fit(X, y);
    Xf = norm->apply(X);
    yf.array() -= norm->y_mean;
  }
  const OperatorSet ops = assemble_operators(kernel, Xf, options.fit.memory_cap);
  AdmmSolver solver(ops, yf);

  PathResult path;
  if (reg.kind == RegularizerKind::ElasticNet) {
    if (options.mu_grid.empty()) throw Error("elastic net path: empty mu grid");
    path.mu_grid = options.mu_grid;
  } else {
    path.mu_grid = {1.0};
  }

  for (double mu : path.mu_grid) {
    RegularizerSpec reg_mu = reg;
    if (reg.kind == RegularizerKind::ElasticNet) reg_mu = RegularizerSpec::elastic_net(mu);
    std::vector<double> grid = options.tau_grid.empty()
                                   ? auto_tau_grid(solver, reg_mu, config, options.count,
                                                   options.decades)
                                   : options.tau_grid;
    std::optional<SolverState> warm;
    for (double tau : grid) {
      SolverConfig cfg = config;
      cfg.tau = tau;
      const SolveResult sol =
          solver.solve(reg_mu, cfg, options.warm_start && warm ? &*warm : nullptr);
      if (options.observer) options.observer(ops, sol);
      PathPoint point;
      point.tau = tau;
      point.mu = mu;
      point.iterations = sol.iterations;
      point.converged = sol.converged;
      point.model = model_from_solution(kernel, Xf, sol, reg_mu, cfg, norm);
      path.points.push_back(std::move(point));
      warm = sol.state();
    }
    path.tau_grids.push_back(std::move(grid));
  }
  return path;
}

double mean_squared_error(const VectorRef& yhat, const VectorRef& y) {
  if (yhat.size() != y.size()) throw Error("mse: length mismatch");
  if (y.size() == 0) throw Error("mse: empty vectors");
  return (yhat - y).squaredNorm() / static_cast<double>(y.size());
}

std::size_t select_by_validation(PathResult& path, const MatrixRef& Xval, const VectorRef& yval) {
  if (path.points.empty()) throw Error("select_by_validation: empty path");
  std::size_t best = 0;
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    auto& p = path.points[i];
    p.validation_mse = mean_squared_error(predict(p.model, Xval), yval);
    if (i == 0) continue;
    const auto& b = path.points[best];
    if (p.validation_mse < b.validation_mse ||
        (p.validation_mse == b.validation_mse && p.tau > b.tau))
      best = i;
  }
  return best;
}

FittedModel krls_fit(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel, double nu,
                     const FitOptions& options) {
  validate_xy(X, y, 1);
  if (!(nu >= 0.0)) throw Error("kernel ridge: nu must be >= 0");
  kernel.validate();
  FittedModel m;
  Matrix Xf = X;
  Vector yf = y;
  if (options.normalize) {
    m.normalization = Normalization::fit(X, y);
    Xf = m.normalization->apply(X);
    yf.array() -= m.normalization->y_mean;
  }
  const Eigen::Index n = Xf.rows();
  const Matrix K = gram_matrix(kernel, Xf, Xf);
  m.kernel = kernel;
  m.input_dim = static_cast<int>(X.cols());
  m.columns = all_columns(X.cols());
  m.x_train = Xf;
  m.alpha = regularized_solve(K, static_cast<double>(n) * nu, yf);
  m.beta = Vector::Zero(Xf.cols() * n);
  m.support = all_columns(X.cols());
  m.derivative_norms = derivative_norms_of_expansion(kernel, Xf, m.alpha);
  m.tau = 0.0;
  m.nu = nu;
  return m;
}

Vector krls_predict(const FittedModel& model, const MatrixRef& Xstar) {
  return predict(model, Xstar);
}

FittedModel debias(const MatrixRef& X, const VectorRef& y, const FittedModel& sparse_model,
                   const KernelSpec& kernel, double nu, const FitOptions& options) {
  validate_xy(X, y, 1);
  const auto d = X.cols();
  if (sparse_model.input_dim != d) throw Error("debias: model and data dimensions differ");
  FittedModel m;
  if (sparse_model.support.empty()) {
    m.kernel = kernel;
    m.input_dim = static_cast<int>(d);
    m.x_train.resize(0, 0);
    m.offset = y.mean();
    m.derivative_norms = Vector::Zero(d);
    m.nu = nu;
  } else {
    const Matrix Xs = select_columns(X, sparse_model.support);
    m = krls_fit(Xs, y, kernel, nu, options);
    Vector full_norms = Vector::Zero(d);
    for (std::size_t c = 0; c < sparse_model.support.size(); ++c)
      full_norms[sparse_model.support[c]] = m.derivative_norms[static_cast<Eigen::Index>(c)];
    m.derivative_norms = full_norms;
    m.input_dim = static_cast<int>(d);
    m.columns = sparse_model.support;
  }
  m.support = sparse_model.support;
  m.tau = sparse_model.tau;
  m.mu = sparse_model.mu;
  return m;
}

std::string model_to_json(const FittedModel& model) {
  json j;
  j["format"] = "nvsd-model";
  j["version"] = 1;
  j["kernel"] = kernel_to_json(model.kernel);
  j["input_dim"] = model.input_dim;
  j["columns"] = to_one_based(model.columns);
  json rows = json::array();
  for (Eigen::Index i = 0; i < model.x_train.rows(); ++i)
    rows.push_back(to_std(model.x_train.row(i).transpose()));
  j["x_train"] = rows;
  j["alpha"] = to_std(model.alpha);
  j["beta"] = to_std(model.beta);
  j["support"] = to_one_based(model.support);
  j["derivative_norms"] = to_std(model.derivative_norms);
  j["tau"] = model.tau;
  j["nu"] = model.nu;
  j["mu"] = model.mu;
  j["offset"] = model.offset;
  if (model.normalization) {
    j["normalization"] = {{"x_mean", to_std(model.normalization->x_mean)},
                          {"x_scale", to_std(model.normalization->x_scale)},
                          {"y_mean", model.normalization->y_mean}};
  } else {
    j["normalization"] = nullptr;
  }
  return j.dump(1);
}

FittedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model: invalid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "nvsd-model") throw Error("model: not an nvsd model document");
    FittedModel m;
    m.kernel = kernel_from_json(j.at("kernel"));
    m.input_dim = j.at("input_dim").get<int>();
    m.columns = to_zero_based(j.at("columns"));
    const auto& rows = j.at("x_train");
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto width = static_cast<Eigen::Index>(m.columns.size());
    m.x_train.resize(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector row = to_eigen(rows[static_cast<std::size_t>(i)]);
      if (row.size() != width) throw Error("model: x_train row has the wrong width");
      m.x_train.row(i) = row.transpose();
    }
    m.alpha = to_eigen(j.at("alpha"));
    m.beta = to_eigen(j.at("beta"));
    m.support = to_zero_based(j.at("support"));
    m.derivative_norms = to_eigen(j.at("derivative_norms"));
    m.tau = j.at("tau").get<double>();
    m.nu = j.at("nu").get<double>();
    m.mu = j.at("mu").get<double>();
    m.offset = j.at("offset").get<double>();
    if (!j.at("normalization").is_null()) {
      Normalization norm;
      norm.x_mean = to_eigen(j["normalization"].at("x_mean"));
      norm.x_scale = to_eigen(j["normalization"].at("x_scale"));
      norm.y_mean = j["normalization"].at("y_mean").get<double>();
      m.normalization = norm;
    }
    if (m.alpha.size() != n || (m.beta.size() != 0 && m.beta.size() != n * width))
      throw Error("model: coefficient lengths do not match x_train");
    for (int c : m.columns)
      if (c < 0 || c >= m.input_dim) throw Error("model: column index out of range");
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("model: malformed document: ") + e.what());
  }
}

}  // namespace nvsd
