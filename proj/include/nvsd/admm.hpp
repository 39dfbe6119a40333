#pragma once

#include <functional>
#include <list>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "nvsd/kernel.hpp"
#include "nvsd/prox.hpp"

namespace nvsd {

enum class S1Mode { ExactFactorized, InexactDescent };

// How the squared part of the elastic-net penalty is handled. Folded moves it
// into the quadratic omega-step and leaves a plain block threshold for the
// phi-step; DirectProx keeps it in the phi-step via the closed-form
// elastic-net prox.
enum class ElasticNetRoute { FoldedQuadratic, DirectProx };

/// Residual balancing for the ADMM step size.
struct ResidualBalance {
  bool enabled = true;
  double factor = 10.0;  // imbalance ratio that triggers a change
  double scale = 2.0;    // multiplicative change of kappa
  // Compare residuals divided by their stopping tolerances instead of the
  // raw residuals.
  bool normalized = false;
  // Kappa is frozen after this many iterations of a solve so the fixed-step
  // convergence guarantee applies; adaptive changes can otherwise cycle.
  // 0 never freezes.
  int freeze_after = 0;
};

/// Steepest-descent steps taken at ADMM iteration k in InexactDescent mode.
int default_descent_schedule(int iteration);

struct SolverConfig {
  double tau = 0.0;
  double nu = 1e-4;
  double kappa_init = 1.0;
  double abs_tol = 1e-6;
  double rel_tol = 1e-4;
  // Extra stopping condition: every block of Z*omega - phi has root-mean-square
  // at most this, so derivative norms read from phi and from (alpha, beta)
  // agree. 0 disables it.
  double readout_tol = 1e-6;
  int max_iter = 2000;
  S1Mode s1_mode = S1Mode::ExactFactorized;
  std::function<int(int)> s1_descent_schedule = default_descent_schedule;
  ResidualBalance balance{.normalized = true, .freeze_after = 200};
  ElasticNetRoute en_route = ElasticNetRoute::FoldedQuadratic;
  bool record_objective = false;

  void validate() const;
};

struct SolverState {
  Vector omega;   // [alpha; beta]
  Vector phi;     // derivative blocks, d x n
  Vector lambda;  // scaled dual, same layout as phi
  double kappa = 1.0;
  int iteration = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double primal_tolerance = 0.0;
  double dual_tolerance = 0.0;
  double kappa = 0.0;
  double objective = 0.0;  // NaN unless SolverConfig::record_objective
};

struct SolveResult {
  Vector omega;
  Vector phi;
  Vector lambda;
  double kappa = 1.0;
  std::vector<int> support;  // 0-based variable indices with nonzero phi block
  Vector derivative_norms;   // ||phi_a|| / sqrt(n)
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> history;

  SolverState state() const;
  Vector alpha(Eigen::Index n) const { return omega.head(n); }
  Vector beta(Eigen::Index n) const { return omega.tail(omega.size() - n); }
};

/// (1/n)||y - F w||^2 + tau * J(Z w) + nu * w'Q w.
double objective_value(const OperatorSet& ops, const VectorRef& y, const RegularizerSpec& reg,
                       double tau, double nu, const VectorRef& omega);

/// phi-step: the prox of the regularizer at Z*omega + lambda (direct routes).
Vector s2_update(const VectorRef& z_omega_plus_lambda, const RegularizerSpec& reg, double tau,
                 double kappa, Eigen::Index n);

/// lambda + (Z*omega - phi); lambda is returned unchanged when Z*omega == phi.
Vector s3_update(const VectorRef& lambda, const VectorRef& z_omega, const VectorRef& phi);

/// Residual balancing: doubles kappa when the primal residual dominates,
/// halves it when the dual residual does, and rescales the scaled dual
/// accordingly. With balance.normalized the residuals are first divided by
/// primal_scale and dual_scale (the stopping tolerances). Returns the new kappa.
double step_size_update(SolverState& state, const ResidualBalance& balance,
                        double primal_scale = 1.0, double dual_scale = 1.0);

// ADMM for
//   min_w (1/n)||y - F w||^2 + tau J(Z w) + nu w'Q w
// split as Z w = phi. Holds the data-dependent pieces of the omega-step so a
// sequence of solves on the same (ops, y) reuses them: the quadratic matrix
// is A + c B with A = nu (Q + Q') + (2/n) F'F and B = Z'Z, and Cholesky
// factors are cached per c.
class AdmmSolver {
 public:
  AdmmSolver(const OperatorSet& ops, const VectorRef& y, std::size_t factor_cache_size = 6);

  SolveResult solve(const RegularizerSpec& reg, const SolverConfig& config,
                    const SolverState* warm_start = nullptr);

  /// Solves (nu(Q+Q') + (2/n)F'F + c Z'Z + eps I) w = (2/n)F'y + kappa Z'(phi - lambda)
  /// with c = kappa + extra_curvature.
  Vector s1_exact(double nu, const VectorRef& phi, const VectorRef& lambda, double kappa,
                  double extra_curvature = 0.0);

  /// `steps` steepest-descent steps on the same system starting from omega.
  Vector s1_descent(double nu, const VectorRef& phi, const VectorRef& lambda, double kappa,
                    double extra_curvature, Vector omega, int steps);

  const OperatorSet& operators() const { return ops_; }
  const Vector& targets() const { return y_; }
  /// Number of Cholesky factorizations computed so far.
  int factorizations() const { return factorizations_; }

 private:
  struct CachedFactor {
    double curvature;
    Eigen::LLT<Matrix> llt;
  };

  void prepare(double nu);
  const Eigen::LLT<Matrix>& factor(double curvature);
  Vector rhs(const VectorRef& phi, const VectorRef& lambda, double kappa) const;
  void descend(Vector& omega, const Vector& b, double curvature, int steps) const;

  const OperatorSet& ops_;
  Vector y_;
  Vector fty_;  // (2/n) F'y
  Matrix zz_;   // Z'Z
  Matrix a_;    // nu (Q + Q') + (2/n) F'F
  std::optional<double> nu_;
  std::size_t cache_size_;
  std::list<CachedFactor> cache_;
  int factorizations_ = 0;
};

/// One-shot convenience wrapper around AdmmSolver.
SolveResult solve(const OperatorSet& ops, const VectorRef& y, const RegularizerSpec& reg,
                  const SolverConfig& config, const SolverState* warm_start = nullptr);

}  // namespace nvsd
