#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nvsd/admm.hpp"
#include "nvsd/kernel.hpp"
#include "nvsd/prox.hpp"

namespace nvsd {

/// Per-feature z-scoring of the inputs and centering of the target.
struct Normalization {
  Vector x_mean;
  Vector x_scale;
  double y_mean = 0.0;

  static Normalization fit(const MatrixRef& X, const VectorRef& y);
  Matrix apply(const MatrixRef& X) const;
};

// A fitted function
//   f(x) = offset + y_mean + sum_j alpha_j k(x_j, x) + sum_j sum_a beta_{aj} d/ds_a k(s, x)|_{s=x_j}
// where x is the (optionally normalized) input restricted to `columns`.
struct FittedModel {
  KernelSpec kernel;
  int input_dim = 0;         // columns expected from callers
  std::vector<int> columns;  // 0-based input columns the kernel sees
  Matrix x_train;            // n x columns.size(), normalized when normalization is set
  Vector alpha;
  Vector beta;               // blocks of length n, one per column
  std::vector<int> support;  // 0-based input variables
  Vector derivative_norms;   // per input variable (input_dim entries)
  double tau = 0.0;
  double nu = 0.0;
  double mu = 1.0;
  double offset = 0.0;
  std::optional<Normalization> normalization;

  // Diagnostics carried along from the solver; not needed for prediction.
  double objective = 0.0;
  int iterations = 0;
  bool converged = true;
};

struct FitOptions {
  bool normalize = false;
  std::size_t memory_cap = kDefaultOperatorMemoryCap;
};

/// Sparse fit at one tau. The solver result is returned through `solve_out`
/// when given.
FittedModel fit(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel,
                const RegularizerSpec& reg, const SolverConfig& config,
                const FitOptions& options = {}, SolveResult* solve_out = nullptr);

/// Builds a model from a solver result on already-prepared (normalized) data.
FittedModel model_from_solution(const KernelSpec& kernel, const MatrixRef& X_fit,
                                const SolveResult& sol, const RegularizerSpec& reg,
                                const SolverConfig& config,
                                const std::optional<Normalization>& normalization);

Vector predict(const FittedModel& model, const MatrixRef& Xstar);

/// Descending log-spaced tau grid whose first point yields an empty support.
std::vector<double> auto_tau_grid(AdmmSolver& solver, const RegularizerSpec& reg,
                                  const SolverConfig& config, int count = 50, int decades = 3);

struct PathPoint {
  double tau = 0.0;
  double mu = 1.0;
  FittedModel model;
  int iterations = 0;
  bool converged = false;
  double validation_mse = 0.0;
};

struct PathResult {
  std::vector<double> mu_grid;                 // one entry (1.0) for L / GL
  std::vector<std::vector<double>> tau_grids;  // one descending grid per mu
  std::vector<PathPoint> points;               // mu-major, tau descending

  int total_iterations() const;
};

struct PathOptions {
  int count = 50;
  int decades = 3;
  std::vector<double> tau_grid;  // explicit grid; auto when empty
  std::vector<double> mu_grid = {0.1, 0.3, 0.5, 0.7, 0.9};  // elastic net only
  bool warm_start = true;
  FitOptions fit;
  // Called after every solve on the path with the operators it used.
  std::function<void(const OperatorSet&, const SolveResult&)> observer;
};

/// Regularization path in decreasing tau with warm starts. For the elastic
/// net an outer loop runs over the mu grid.
PathResult fit_path(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel,
                    const RegularizerSpec& reg, const SolverConfig& config,
                    const PathOptions& options = {});

double mean_squared_error(const VectorRef& yhat, const VectorRef& y);

/// Fills validation_mse on every point and returns the index of the best one
/// (ties go to the larger tau).
std::size_t select_by_validation(PathResult& path, const MatrixRef& Xval, const VectorRef& yval);

/// Kernel ridge: alpha = (K + n nu I)^{-1} y, beta = 0, all variables kept.
FittedModel krls_fit(const MatrixRef& X, const VectorRef& y, const KernelSpec& kernel, double nu,
                     const FitOptions& options = {});
Vector krls_predict(const FittedModel& model, const MatrixRef& Xstar);

/// Kernel ridge refit restricted to the sparse model's support. An empty
/// support yields the constant training-mean predictor.
FittedModel debias(const MatrixRef& X, const VectorRef& y, const FittedModel& sparse_model,
                   const KernelSpec& kernel, double nu, const FitOptions& options = {});

std::string model_to_json(const FittedModel& model);
FittedModel model_from_json(const std::string& text);

}  // namespace nvsd
