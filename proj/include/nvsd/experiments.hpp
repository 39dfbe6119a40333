#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nvsd/model.hpp"

namespace nvsd {

enum class Experiment { E1, E2, E3 };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);

inline constexpr int kSyntheticDim = 18;

struct SyntheticDataset {
  Matrix X;                       // n x 18
  Vector y;
  std::vector<int> true_support;  // 0-based: {0, 1, 2, 6, 7, 8}
  GroupStructure groups;          // six consecutive triples
  std::uint64_t seed = 0;
};

// Noiseless targets. e1/e2 read dims 1-3 and 7-9 of an 18-vector; e3 takes
// the two latent factors that drive the response.
double e1_target(const VectorRef& x);
double e2_target(const VectorRef& x);
double e3_target(double z1, double z3);

// `stream` separates independent draws from one seed (train, validation,
// test). Rows are drawn sequentially, so a smaller n is a prefix of a larger.
SyntheticDataset gen_e1(int n, std::uint64_t seed, std::uint64_t stream = 0);
SyntheticDataset gen_e2(int n, std::uint64_t seed, std::uint64_t stream = 0);
SyntheticDataset gen_e3(int n, std::uint64_t seed, std::uint64_t stream = 0);
SyntheticDataset generate(Experiment e, int n, std::uint64_t seed, std::uint64_t stream = 0);

/// Kernel used for each experiment: cubic polynomial (offset 1) for E1/E2,
/// Gaussian with width 4 for E3.
KernelSpec experiment_kernel(Experiment e);

double rmse(const VectorRef& yhat, const VectorRef& y);

/// 1 - |S n T| / |S u T| on index sets; 0 when both are empty.
double tanimoto_distance(const std::vector<int>& selected, const std::vector<int>& truth);

enum class MethodBase { Krls, NvsdL, NvsdGL, NvsdEN };

struct Method {
  MethodBase base = MethodBase::Krls;
  bool debias = false;

  std::string name() const;
};

/// "krls", "nvsd-l", "nvsd-gl", "nvsd-en", the last three optionally with a
/// "+db" suffix.
Method parse_method(const std::string& token);

struct ExperimentConfig {
  SolverConfig solver;
  int tau_count = 50;
  int tau_decades = 3;
  std::vector<double> mu_grid = {0.1, 0.3, 0.5, 0.7, 0.9};
  // Ridge strengths tried for the kernel ridge baseline and the debiasing
  // refit; chosen by validation MSE.
  std::vector<double> ridge_nu_grid = {1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  int validation_size = 1000;
  int test_size = 1000;
  bool normalize = false;
  int threads = 1;
  // Forwarded to every path solve (see PathOptions::observer). Must be
  // thread-safe when threads > 1.
  std::function<void(const OperatorSet&, const SolveResult&)> observer;
};

struct CellResult {
  std::string experiment;
  std::string method;
  int train_size = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double selection_error = 0.0;
  int support_size = 0;
  double tau = 0.0;
  double mu = 0.0;
  int iterations = 0;
  std::string status = "ok";  // "ok" or "failed: <reason>"

  bool ok() const { return status == "ok"; }
};

struct AggregateRow {
  std::string metric;  // rmse, selection_error, support_size
  std::string method;
  std::vector<double> mean;  // per train size
  std::vector<double> sd;
  std::vector<int> count;
};

struct ExperimentResult {
  Experiment experiment = Experiment::E1;
  std::vector<Method> methods;
  std::vector<int> train_sizes;
  std::vector<CellResult> cells;  // replication-major, then size, then method

  std::vector<AggregateRow> aggregate() const;
  std::string raw_csv() const;
  std::string aggregate_csv() const;
  std::string aggregate_table() const;
};

/// Replications use seed base_seed + r. Cells run on up to config.threads
/// threads; results are ordered independently of scheduling.
ExperimentResult run_experiment(Experiment which, const std::vector<Method>& methods,
                                const std::vector<int>& train_sizes, int reps,
                                std::uint64_t base_seed, const ExperimentConfig& config);

/// Thread count from NVSD_THREADS, else the hardware concurrency (at least 1).
int default_thread_count();

}  // namespace nvsd
