#include "nvsd/admm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nvsd {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-6;

// Threshold weight of the l2 term in the phi-step: 1 for L, mu for EN.
double lasso_weight(const RegularizerSpec& reg) {
  return reg.kind == RegularizerKind::ElasticNet ? reg.mu : 1.0;
}

// out = Z' [a b] with a single pass over the columns of Z.
void transpose_product2(const Matrix& Z, const Vector& a, const Vector& b, Matrix& out) {
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    const auto col = Z.col(j);
    out(j, 0) = col.dot(a);
    out(j, 1) = col.dot(b);
  }
}

}  // namespace

int default_descent_schedule(int iteration) {
  return std::min(5 + (iteration + 9) / 10, 50);
}

void SolverConfig::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error("solver: tau must be finite and >= 0");
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw Error("solver: nu must be finite and >= 0");
  if (!(kappa_init > 0.0)) throw Error("solver: kappa_init must be > 0");
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw Error("solver: tolerances must be > 0");
  if (!(readout_tol >= 0.0)) throw Error("solver: readout_tol must be >= 0");
  if (max_iter < 1) throw Error("solver: max_iter must be >= 1");
  if (balance.enabled && (!(balance.factor > 1.0) || !(balance.scale > 1.0)))
    throw Error("solver: residual balance factor and scale must exceed 1");
  if (balance.freeze_after < 0) throw Error("solver: balance.freeze_after must be >= 0");
  if (s1_mode == S1Mode::InexactDescent && !s1_descent_schedule)
    throw Error("solver: inexact mode needs a descent schedule");
}

SolverState SolveResult::state() const {
  SolverState s;
  s.omega = omega;
  s.phi = phi;
  s.lambda = lambda;
  s.kappa = kappa;
  s.iteration = iterations;
  if (!history.empty()) {
    s.primal_residual = history.back().primal_residual;
    s.dual_residual = history.back().dual_residual;
  }
  return s;
}

double objective_value(const OperatorSet& ops, const VectorRef& y, const RegularizerSpec& reg,
                       double tau, double nu, const VectorRef& omega) {
  if (omega.size() != ops.dim() || y.size() != ops.n)
    throw Error("objective: shape mismatch");
  const double rn = static_cast<double>(ops.n);
  const double loss = (y - ops.F * omega).squaredNorm() / rn;
  const Vector z_omega = ops.Z * omega;
  const double penalty = tau > 0.0 ? tau * regularizer_value(reg, z_omega, ops.n) : 0.0;
  const double hilbert = nu > 0.0 ? nu * omega.dot(ops.Q * omega) : 0.0;
  return loss + penalty + hilbert;
}

Vector s2_update(const VectorRef& v, const RegularizerSpec& reg, double tau, double kappa,
                 Eigen::Index n) {
  if (!(kappa > 0.0)) throw Error("s2: kappa must be > 0");
  const double base = tau / (kappa * std::sqrt(static_cast<double>(n)));
  switch (reg.kind) {
    case RegularizerKind::Lasso:
      return prox_lasso(v, n, base);
    case RegularizerKind::GroupLasso:
      return prox_group_lasso(v, n, base, reg.groups);
    case RegularizerKind::ElasticNet:
      return prox_elastic_net(v, tau, reg.mu, kappa, n);
  }
  return v;
}

Vector s3_update(const VectorRef& lambda, const VectorRef& z_omega, const VectorRef& phi) {
  if (lambda.size() != z_omega.size() || lambda.size() != phi.size())
    throw Error("s3: shape mismatch");
  return lambda + (z_omega - phi);
}

double step_size_update(SolverState& state, const ResidualBalance& balance,
                        double primal_scale, double dual_scale) {
  if (!balance.enabled) return state.kappa;
  double primal = state.primal_residual;
  double dual = state.dual_residual;
  if (balance.normalized) {
    primal /= primal_scale;
    dual /= dual_scale;
  }
  double ratio = 1.0;
  if (primal > balance.factor * dual)
    ratio = balance.scale;
  else if (dual > balance.factor * primal)
    ratio = 1.0 / balance.scale;
  if (ratio != 1.0) {
    state.kappa *= ratio;
    state.lambda /= ratio;
  }
  return state.kappa;
}

AdmmSolver::AdmmSolver(const OperatorSet& ops, const VectorRef& y, std::size_t factor_cache_size)
    : ops_(ops), y_(y), cache_size_(std::max<std::size_t>(1, factor_cache_size)) {
  if (y.size() != ops.n)
    throw Error("solver: target length " + std::to_string(y.size()) + " does not match n=" +
                std::to_string(ops.n));
  if (!y.allFinite()) throw Error("solver: non-finite targets");
  const double rn = static_cast<double>(ops.n);
  fty_ = (2.0 / rn) * (ops.F.transpose() * y_);
  const Eigen::Index big = ops.dim();
  zz_.setZero(big, big);
  zz_.selfadjointView<Eigen::Lower>().rankUpdate(ops.Z.transpose());
  zz_.triangularView<Eigen::StrictlyUpper>() = zz_.transpose();
}

void AdmmSolver::prepare(double nu) {
  if (nu_ && *nu_ == nu) return;
  const double rn = static_cast<double>(ops_.n);
  const Eigen::Index big = ops_.dim();
  a_.setZero(big, big);
  a_.selfadjointView<Eigen::Lower>().rankUpdate(ops_.F.transpose(), 2.0 / rn);
  a_.triangularView<Eigen::StrictlyUpper>() = a_.transpose();
  if (nu != 0.0) a_ += nu * (ops_.Q + ops_.Q.transpose());
  nu_ = nu;
  cache_.clear();
}

const Eigen::LLT<Matrix>& AdmmSolver::factor(double curvature) {
  for (auto it = cache_.begin(); it != cache_.end(); ++it) {
    if (it->curvature == curvature) {
      cache_.splice(cache_.begin(), cache_, it);
      return cache_.front().llt;
    }
  }
  const Eigen::Index big = ops_.dim();
  Matrix m = a_;
  if (curvature != 0.0) m += curvature * zz_;
  const double scale = std::max(m.trace() / static_cast<double>(big),
                                std::numeric_limits<double>::min());
  for (double jitter = kJitterStart; jitter <= kJitterMax * 1.0001; jitter *= 10.0) {
    Matrix shifted = m;
    shifted.diagonal().array() += jitter * scale;
    Eigen::LLT<Matrix> llt(std::move(shifted));
    ++factorizations_;
    if (llt.info() == Eigen::Success) {
      if (cache_.size() >= cache_size_) cache_.pop_back();
      cache_.push_front(CachedFactor{curvature, std::move(llt)});
      return cache_.front().llt;
    }
  }
  throw Error("solver: omega-step matrix could not be factorized even with jitter");
}

Vector AdmmSolver::rhs(const VectorRef& phi, const VectorRef& lambda, double kappa) const {
  if (kappa == 0.0) return fty_;
  return fty_ + kappa * (ops_.Z.transpose() * (phi - lambda));
}

Vector AdmmSolver::s1_exact(double nu, const VectorRef& phi, const VectorRef& lambda,
                            double kappa, double extra_curvature) {
  prepare(nu);
  return factor(kappa + extra_curvature).solve(rhs(phi, lambda, kappa));
}

Vector AdmmSolver::s1_descent(double nu, const VectorRef& phi, const VectorRef& lambda,
                              double kappa, double extra_curvature, Vector omega, int steps) {
  prepare(nu);
  descend(omega, rhs(phi, lambda, kappa), kappa + extra_curvature, steps);
  return omega;
}

// Exact line search along the negative gradient of 0.5 w'Mw - b'w.
void AdmmSolver::descend(Vector& omega, const Vector& b, double curvature, int steps) const {
  for (int s = 0; s < steps; ++s) {
    Vector g = a_ * omega - b;
    if (curvature != 0.0) g.noalias() += curvature * (zz_ * omega);
    const double gg = g.squaredNorm();
    if (gg == 0.0) return;
    Vector mg = a_ * g;
    if (curvature != 0.0) mg.noalias() += curvature * (zz_ * g);
    const double gmg = g.dot(mg);
    if (!(gmg > 0.0)) return;
    omega -= (gg / gmg) * g;
  }
}

SolveResult AdmmSolver::solve(const RegularizerSpec& reg, const SolverConfig& config,
                              const SolverState* warm_start) {
  config.validate();
  reg.validate(static_cast<int>(ops_.d));
  prepare(config.nu);

  const Eigen::Index n = ops_.n;
  const Eigen::Index dn = ops_.d * n;
  const Eigen::Index big = ops_.dim();
  const double rn = static_cast<double>(n);
  const double tau = config.tau;
  const bool folded =
      reg.kind == RegularizerKind::ElasticNet && config.en_route == ElasticNetRoute::FoldedQuadratic;
  const double extra_curvature = folded ? 2.0 * tau * (1.0 - reg.mu) / rn : 0.0;

  SolverState st;
  if (warm_start) {
    if (warm_start->omega.size() != big || warm_start->phi.size() != dn ||
        warm_start->lambda.size() != dn || !(warm_start->kappa > 0.0))
      throw Error("solver: warm start does not match the problem shape");
    st = *warm_start;
  } else {
    st.omega.setZero(big);
    st.phi.setZero(dn);
    st.lambda.setZero(dn);
    st.kappa = config.kappa_init;
  }
  st.iteration = 0;

  // Z'phi and Z'lambda carried between iterations; one pass over Z per update.
  Matrix zt_blocks(big, 2);
  transpose_product2(ops_.Z, st.phi, st.lambda, zt_blocks);

  const double sqrt_dn = std::sqrt(static_cast<double>(dn));
  const double sqrt_big = std::sqrt(static_cast<double>(big));
  const double l2_threshold_weight = lasso_weight(reg);

  SolveResult result;
  result.history.reserve(static_cast<std::size_t>(std::min(config.max_iter, 4096)));
  Vector z_omega(dn);
  bool converged = false;
  for (int k = 1; k <= config.max_iter; ++k) {
    st.iteration = k;
    const Vector b = fty_ + st.kappa * (zt_blocks.col(0) - zt_blocks.col(1));
    if (config.s1_mode == S1Mode::ExactFactorized) {
      st.omega = factor(st.kappa + extra_curvature).solve(b);
    } else {
      descend(st.omega, b, st.kappa + extra_curvature,
              std::max(1, config.s1_descent_schedule(k)));
    }
    z_omega.noalias() = ops_.Z * st.omega;

    const Vector v = z_omega + st.lambda;
    Vector phi_next;
    if (folded) {
      phi_next = prox_lasso(v, n, tau * l2_threshold_weight / (st.kappa * std::sqrt(rn)));
    } else {
      phi_next = s2_update(v, reg, tau, st.kappa, n);
    }
    st.lambda = s3_update(st.lambda, z_omega, phi_next);

    const Vector zt_phi_prev = zt_blocks.col(0);
    transpose_product2(ops_.Z, phi_next, st.lambda, zt_blocks);
    st.phi = std::move(phi_next);

    st.primal_residual = (z_omega - st.phi).norm();
    st.dual_residual = st.kappa * (zt_blocks.col(0) - zt_phi_prev).norm();
    const double eps_pri =
        sqrt_dn * config.abs_tol + config.rel_tol * std::max(z_omega.norm(), st.phi.norm());
    const double eps_dual =
        sqrt_big * config.abs_tol + config.rel_tol * st.kappa * zt_blocks.col(1).norm();

    if (!std::isfinite(st.primal_residual) || !std::isfinite(st.dual_residual))
      throw Error("solver: divergence (non-finite residuals at iteration " + std::to_string(k) +
                  ")");

    IterationRecord rec;
    rec.iteration = k;
    rec.primal_residual = st.primal_residual;
    rec.dual_residual = st.dual_residual;
    rec.primal_tolerance = eps_pri;
    rec.dual_tolerance = eps_dual;
    rec.kappa = st.kappa;
    rec.objective = config.record_objective
                        ? objective_value(ops_, y_, reg, tau, config.nu, st.omega)
                        : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);

    const bool readout_ok =
        config.readout_tol <= 0.0 ||
        partial_derivative_norms(z_omega - st.phi, n).maxCoeff() <= config.readout_tol;
    if (st.primal_residual <= eps_pri && st.dual_residual <= eps_dual && readout_ok) {
      converged = true;
      break;
    }
    const double kappa_before = st.kappa;
    if (config.balance.freeze_after <= 0 || k < config.balance.freeze_after)
      step_size_update(st, config.balance, eps_pri, eps_dual);
    if (st.kappa != kappa_before) zt_blocks.col(1) *= kappa_before / st.kappa;
  }

  result.omega = st.omega;
  result.phi = st.phi;
  result.lambda = st.lambda;
  result.kappa = st.kappa;
  result.iterations = st.iteration;
  result.converged = converged;
  result.derivative_norms = partial_derivative_norms(result.phi, n);
  result.support = support_of(result.derivative_norms);
  result.objective = objective_value(ops_, y_, reg, tau, config.nu, result.omega);
  if (!std::isfinite(result.objective)) throw Error("solver: divergence (non-finite objective)");
  return result;
}

SolveResult solve(const OperatorSet& ops, const VectorRef& y, const RegularizerSpec& reg,
                  const SolverConfig& config, const SolverState* warm_start) {
  AdmmSolver solver(ops, y);
  return solver.solve(reg, config, warm_start);
}

}  // namespace nvsd
