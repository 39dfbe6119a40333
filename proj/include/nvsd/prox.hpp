#pragma once

#include <string>
#include <vector>

#include "nvsd/kernel.hpp"

namespace nvsd {

// A partition of the input variables {0..d-1} into disjoint groups. Groups
// need not be consecutive. Indices are 0-based here; files use 1-based.
class GroupStructure {
 public:
  GroupStructure() = default;
  GroupStructure(std::vector<std::vector<int>> groups, int d);

  /// One group per variable.
  static GroupStructure singletons(int d);
  /// Consecutive groups of `size` variables; d must be a multiple of size.
  static GroupStructure consecutive(int d, int size);
  /// Parse a JSON array of arrays of 1-based variable indices.
  static GroupStructure from_json(const std::string& text, int d);
  std::string to_json() const;

  int num_groups() const { return static_cast<int>(groups_.size()); }
  int dim() const { return d_; }
  const std::vector<int>& group(int g) const { return groups_[static_cast<std::size_t>(g)]; }
  int size(int g) const { return static_cast<int>(group(g).size()); }
  const std::vector<std::vector<int>>& groups() const { return groups_; }

 private:
  std::vector<std::vector<int>> groups_;
  int d_ = 0;
};

enum class RegularizerKind { Lasso, GroupLasso, ElasticNet };

struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::Lasso;
  GroupStructure groups;  // GroupLasso only
  double mu = 1.0;        // ElasticNet only, in [0, 1]

  static RegularizerSpec lasso();
  static RegularizerSpec group_lasso(GroupStructure groups);
  static RegularizerSpec elastic_net(double mu);

  void validate(int d) const;
};

std::string to_string(RegularizerKind kind);

// Block vectors (phi, lambda, Z*omega) hold d consecutive blocks of length n;
// block a covers entries [a*n, (a+1)*n).

/// Block soft-thresholding: each block is scaled by max(0, 1 - t/||v_a||).
Vector prox_lasso(const VectorRef& v, Eigen::Index n, double threshold);

/// Group soft-thresholding with per-group threshold base_threshold * p_g.
Vector prox_group_lasso(const VectorRef& v, Eigen::Index n, double base_threshold,
                        const GroupStructure& groups);

/// Closed-form prox of (tau/kappa) * [mu/sqrt(n) sum ||phi_a|| + (1-mu)/n sum ||phi_a||^2].
Vector prox_elastic_net(const VectorRef& v, double tau, double mu, double kappa, Eigen::Index n);

/// Empirical regularizer evaluated on derivative blocks phi.
double regularizer_value(const RegularizerSpec& reg, const VectorRef& phi, Eigen::Index n);

/// ||phi_a||_2 / sqrt(n) for every block.
Vector partial_derivative_norms(const VectorRef& phi, Eigen::Index n);

/// Indices of strictly positive entries.
std::vector<int> support_of(const VectorRef& norms);

}  // namespace nvsd
