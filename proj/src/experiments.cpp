#include "nvsd/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "nvsd/io.hpp"

namespace nvsd {

namespace {

constexpr double kNoiseStd = 0.1;  // variance 0.01
constexpr double kPairCorrelation = 0.95;

const std::vector<int> kTrueSupport = {0, 1, 2, 6, 7, 8};

// Correlated pairs in E2 (0-based): relevant ones first.
constexpr int kE2Pairs[][2] = {{0, 6}, {1, 7}, {2, 8}, {3, 9}, {4, 10},
                               {5, 11}, {12, 15}, {13, 16}, {14, 17}};

struct Rng {
  std::mt19937_64 engine;
  std::normal_distribution<double> normal{0.0, 1.0};

  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine.seed(seq);
  }
  double operator()() { return normal(engine); }
};

SyntheticDataset empty_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw Error("generator: n must be >= 1");
  SyntheticDataset ds;
  ds.X.resize(n, kSyntheticDim);
  ds.y.resize(n);
  ds.true_support = kTrueSupport;
  ds.groups = GroupStructure::consecutive(kSyntheticDim, 3);
  ds.seed = seed;
  return ds;
}

double sum_cube(const VectorRef& x, int first) {
  const double s = x[first] + x[first + 1] + x[first + 2];
  return s * s * s;
}

// Sum of x_i x_j x_k over 1 <= i <= j <= k <= 3 within one triple.
double ordered_cubic(const VectorRef& x, int first) {
  double acc = 0.0;
  for (int i = first; i < first + 3; ++i)
    for (int j = i; j < first + 3; ++j)
      for (int k = j; k < first + 3; ++k) acc += x[i] * x[j] * x[k];
  return acc;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
  return s;
}

std::string csv_number(double v) { return format_double(v); }

struct RidgeChoice {
  FittedModel model;
  double nu = 0.0;
};

RidgeChoice best_ridge(const Matrix& X, const Vector& y, const Matrix& Xval, const Vector& yval,
                       const KernelSpec& kernel, const ExperimentConfig& cfg) {
  RidgeChoice best;
  double best_mse = std::numeric_limits<double>::infinity();
  for (double nu : cfg.ridge_nu_grid) {
    FittedModel m = krls_fit(X, y, kernel, nu, FitOptions{cfg.normalize});
    const double mse = mean_squared_error(predict(m, Xval), yval);
    if (mse < best_mse) {
      best_mse = mse;
      best.model = std::move(m);
      best.nu = nu;
    }
  }
  if (!std::isfinite(best_mse)) throw Error("kernel ridge: no finite validation error");
  return best;
}

struct Split {
  SyntheticDataset train, validation, test;
};

struct CellTask {
  int rep;
  int size_index;
  int method_index;
};

void run_cell(const Split& split, int n, const Method& method, const KernelSpec& kernel,
              const ExperimentConfig& cfg, CellResult& out) {
  const Matrix X = split.train.X.topRows(n);
  const Vector y = split.train.y.head(n);
  const auto& val = split.validation;
  FittedModel model;

  if (method.base == MethodBase::Krls) {
    RidgeChoice r = best_ridge(X, y, val.X, val.y, kernel, cfg);
    model = std::move(r.model);
    out.tau = 0.0;
    out.mu = 0.0;
    out.iterations = 0;
  } else {
    RegularizerSpec reg;
    switch (method.base) {
      case MethodBase::NvsdL: reg = RegularizerSpec::lasso(); break;
      case MethodBase::NvsdGL: reg = RegularizerSpec::group_lasso(split.train.groups); break;
      default: reg = RegularizerSpec::elastic_net(cfg.mu_grid.empty() ? 0.5 : cfg.mu_grid[0]);
    }
    PathOptions po;
    po.count = cfg.tau_count;
    po.decades = cfg.tau_decades;
    po.mu_grid = cfg.mu_grid;
    po.fit.normalize = cfg.normalize;
    po.observer = cfg.observer;
    PathResult path = fit_path(X, y, kernel, reg, cfg.solver, po);
    const std::size_t best = select_by_validation(path, val.X, val.y);
    model = path.points[best].model;
    out.tau = path.points[best].tau;
    out.mu = method.base == MethodBase::NvsdEN ? path.points[best].mu : 1.0;
    out.iterations = path.total_iterations();
    if (method.debias) {
      if (model.support.empty()) {
        model = debias(X, y, model, kernel, 0.0, FitOptions{cfg.normalize});
      } else {
        Matrix Xs(n, static_cast<Eigen::Index>(model.support.size()));
        Matrix Vs(val.X.rows(), Xs.cols());
        for (std::size_t c = 0; c < model.support.size(); ++c) {
          Xs.col(static_cast<Eigen::Index>(c)) = X.col(model.support[c]);
          Vs.col(static_cast<Eigen::Index>(c)) = val.X.col(model.support[c]);
        }
        const double nu = best_ridge(Xs, y, Vs, val.y, kernel, cfg).nu;
        model = debias(X, y, model, kernel, nu, FitOptions{cfg.normalize});
      }
    }
  }

  out.rmse = rmse(predict(model, split.test.X), split.test.y);
  out.selection_error = tanimoto_distance(model.support, split.train.true_support);
  out.support_size = static_cast<int>(model.support.size());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::E1: return "e1";
    case Experiment::E2: return "e2";
    case Experiment::E3: return "e3";
  }
  return "unknown";
}

Experiment parse_experiment(const std::string& name) {
  if (name == "e1" || name == "E1") return Experiment::E1;
  if (name == "e2" || name == "E2") return Experiment::E2;
  if (name == "e3" || name == "E3") return Experiment::E3;
  throw Error("unknown experiment '" + name + "' (expected e1, e2 or e3)");
}

double e1_target(const VectorRef& x) {
  if (x.size() < 9) throw Error("e1_target: need at least 9 inputs");
  return ordered_cubic(x, 0) + ordered_cubic(x, 6);
}

double e2_target(const VectorRef& x) {
  if (x.size() < 9) throw Error("e2_target: need at least 9 inputs");
  return sum_cube(x, 0) + sum_cube(x, 6);
}

double e3_target(double z1, double z3) {
  const double r = z1 * z1 + z3 * z3;
  return 10.0 * r * std::exp(-2.0 * r);
}

SyntheticDataset gen_e1(int n, std::uint64_t seed, std::uint64_t stream) {
  SyntheticDataset ds = empty_dataset(n, seed);
  Rng rng(seed, stream);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < kSyntheticDim; ++a) ds.X(i, a) = rng();
    ds.y[i] = e1_target(ds.X.row(i).transpose()) + kNoiseStd * rng();
  }
  return ds;
}

SyntheticDataset gen_e2(int n, std::uint64_t seed, std::uint64_t stream) {
  SyntheticDataset ds = empty_dataset(n, seed);
  Rng rng(seed, stream);
  const double ortho = std::sqrt(1.0 - kPairCorrelation * kPairCorrelation);
  for (int i = 0; i < n; ++i) {
    for (const auto& pair : kE2Pairs) {
      const double u = rng();
      const double w = rng();
      ds.X(i, pair[0]) = u;
      ds.X(i, pair[1]) = kPairCorrelation * u + ortho * w;
    }
    ds.y[i] = e2_target(ds.X.row(i).transpose()) + kNoiseStd * rng();
  }
  return ds;
}

SyntheticDataset gen_e3(int n, std::uint64_t seed, std::uint64_t stream) {
  SyntheticDataset ds = empty_dataset(n, seed);
  Rng rng(seed, stream);
  const double measurement_std = std::sqrt(0.1);
  double z[6];
  for (int i = 0; i < n; ++i) {
    for (double& zi : z) zi = rng();
    for (int f = 0; f < 6; ++f)
      for (int j = 0; j < 3; ++j) ds.X(i, 3 * f + j) = z[f] + measurement_std * rng();
    ds.y[i] = e3_target(z[0], z[2]) + kNoiseStd * rng();
  }
  return ds;
}

SyntheticDataset generate(Experiment e, int n, std::uint64_t seed, std::uint64_t stream) {
  switch (e) {
    case Experiment::E1: return gen_e1(n, seed, stream);
    case Experiment::E2: return gen_e2(n, seed, stream);
    case Experiment::E3: return gen_e3(n, seed, stream);
  }
  throw Error("unknown experiment");
}

KernelSpec experiment_kernel(Experiment e) {
  return e == Experiment::E3 ? KernelSpec::gaussian(4.0) : KernelSpec::polynomial(3, 1.0);
}

double rmse(const VectorRef& yhat, const VectorRef& y) {
  return std::sqrt(mean_squared_error(yhat, y));
}

double tanimoto_distance(const std::vector<int>& selected, const std::vector<int>& truth) {
  std::vector<int> s(selected), t(truth);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  if (s.empty() && t.empty()) return 0.0;
  std::vector<int> common;
  std::set_intersection(s.begin(), s.end(), t.begin(), t.end(), std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  const double uni = static_cast<double>(s.size() + t.size()) - inter;
  return 1.0 - inter / uni;
}

std::string Method::name() const {
  std::string base_name;
  switch (base) {
    case MethodBase::Krls: base_name = "krls"; break;
    case MethodBase::NvsdL: base_name = "nvsd-l"; break;
    case MethodBase::NvsdGL: base_name = "nvsd-gl"; break;
    case MethodBase::NvsdEN: base_name = "nvsd-en"; break;
  }
  return debias ? base_name + "+db" : base_name;
}

Method parse_method(const std::string& token) {
  std::string t = token;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  Method m;
  const std::string suffix = "+db";
  if (t.size() > suffix.size() && t.compare(t.size() - suffix.size(), suffix.size(), suffix) == 0) {
    m.debias = true;
    t.resize(t.size() - suffix.size());
  }
  if (t == "krls") {
    if (m.debias) throw Error("method 'krls+db': kernel ridge has nothing to debias");
    m.base = MethodBase::Krls;
  } else if (t == "nvsd-l") {
    m.base = MethodBase::NvsdL;
  } else if (t == "nvsd-gl") {
    m.base = MethodBase::NvsdGL;
  } else if (t == "nvsd-en") {
    m.base = MethodBase::NvsdEN;
  } else {
    throw Error("unknown method '" + token + "' (expected krls, nvsd-l, nvsd-gl or nvsd-en)");
  }
  return m;
}

int default_thread_count() {
  if (const char* env = std::getenv("NVSD_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

ExperimentResult run_experiment(Experiment which, const std::vector<Method>& methods,
                                const std::vector<int>& train_sizes, int reps,
                                std::uint64_t base_seed, const ExperimentConfig& config) {
  if (methods.empty()) throw Error("run_experiment: no methods");
  if (train_sizes.empty()) throw Error("run_experiment: no train sizes");
  if (reps < 1) throw Error("run_experiment: reps must be >= 1");
  for (int n : train_sizes)
    if (n < 2) throw Error("run_experiment: train sizes must be >= 2");
  if (config.validation_size < 1 || config.test_size < 1)
    throw Error("run_experiment: validation and test sizes must be >= 1");
  config.solver.validate();

  ExperimentResult result;
  result.experiment = which;
  result.methods = methods;
  result.train_sizes = train_sizes;
  const KernelSpec kernel = experiment_kernel(which);
  const int max_n = *std::max_element(train_sizes.begin(), train_sizes.end());

  std::vector<Split> splits(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
    auto& s = splits[static_cast<std::size_t>(r)];
    s.train = generate(which, max_n, seed, 0);
    s.validation = generate(which, config.validation_size, seed, 1);
    s.test = generate(which, config.test_size, seed, 2);
  }

  std::vector<CellTask> tasks;
  for (int r = 0; r < reps; ++r)
    for (int s = 0; s < static_cast<int>(train_sizes.size()); ++s)
      for (int m = 0; m < static_cast<int>(methods.size()); ++m) tasks.push_back({r, s, m});
  result.cells.resize(tasks.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const CellTask& t = tasks[i];
      CellResult& cell = result.cells[i];
      const int n = train_sizes[static_cast<std::size_t>(t.size_index)];
      const Method& method = methods[static_cast<std::size_t>(t.method_index)];
      cell.experiment = to_string(which);
      cell.method = method.name();
      cell.train_size = n;
      cell.replication = t.rep;
      cell.seed = base_seed + static_cast<std::uint64_t>(t.rep);
      try {
        run_cell(splits[static_cast<std::size_t>(t.rep)], n, method, kernel, config, cell);
      } catch (const std::exception& e) {
        cell.status = "failed: " + sanitize(e.what());
        const double nan = std::numeric_limits<double>::quiet_NaN();
        cell.rmse = cell.selection_error = cell.tau = cell.mu = nan;
        cell.support_size = 0;
      }
    }
  };
  const int threads = std::clamp(config.threads, 1, static_cast<int>(tasks.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return result;
}

std::vector<AggregateRow> ExperimentResult::aggregate() const {
  static const char* metrics[] = {"rmse", "selection_error", "support_size"};
  std::vector<AggregateRow> rows;
  for (const char* metric : metrics) {
    for (const Method& m : methods) {
      AggregateRow row;
      row.metric = metric;
      row.method = m.name();
      for (int n : train_sizes) {
        std::vector<double> values;
        for (const auto& c : cells) {
          if (c.method != row.method || c.train_size != n || !c.ok()) continue;
          const std::string key = metric;
          values.push_back(key == "rmse"              ? c.rmse
                           : key == "selection_error" ? c.selection_error
                                                      : static_cast<double>(c.support_size));
        }
        row.mean.push_back(mean_of(values));
        row.sd.push_back(sd_of(values));
        row.count.push_back(static_cast<int>(values.size()));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ExperimentResult::raw_csv() const {
  std::ostringstream out;
  out << "experiment,method,train_size,replication,seed,rmse,selection_error,support_size,tau,mu,"
         "iterations,status\n";
  for (const auto& c : cells) {
    out << c.experiment << ',' << c.method << ',' << c.train_size << ',' << c.replication << ','
        << c.seed << ',' << csv_number(c.rmse) << ',' << csv_number(c.selection_error) << ','
        << c.support_size << ',' << csv_number(c.tau) << ',' << csv_number(c.mu) << ','
        << c.iterations << ',' << c.status << '\n';
  }
  return out.str();
}

std::string ExperimentResult::aggregate_csv() const {
  std::ostringstream out;
  out << "experiment,metric,method";
  for (int n : train_sizes) out << ",n" << n << "_mean,n" << n << "_sd";
  out << '\n';
  for (const auto& row : aggregate()) {
    out << to_string(experiment) << ',' << row.metric << ',' << row.method;
    for (std::size_t s = 0; s < train_sizes.size(); ++s)
      out << ',' << csv_number(row.mean[s]) << ',' << csv_number(row.sd[s]);
    out << '\n';
  }
  return out.str();
}

std::string ExperimentResult::aggregate_table() const {
  std::ostringstream out;
  out << std::left << std::setw(16) << "metric" << std::setw(12) << "method";
  for (int n : train_sizes) out << std::right << std::setw(18) << ("n=" + std::to_string(n));
  out << '\n';
  for (const auto& row : aggregate()) {
    out << std::left << std::setw(16) << row.metric << std::setw(12) << row.method;
    for (std::size_t s = 0; s < train_sizes.size(); ++s) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << row.mean[s] << " (" << std::setprecision(2)
           << row.sd[s] << ")";
      out << std::right << std::setw(18) << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace nvsd
