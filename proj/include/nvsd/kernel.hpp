#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace nvsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using MatrixRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Raised for malformed arguments anywhere in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class KernelFamily { Linear, Polynomial, Gaussian };

// Kernel family plus its hyper-parameters. Fields that do not apply to the
// chosen family are ignored.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  int degree = 3;       // polynomial
  double offset = 1.0;  // polynomial
  double width = 1.0;   // gaussian

  static KernelSpec linear();
  static KernelSpec polynomial(int degree, double offset = 1.0);
  static KernelSpec gaussian(double width);

  /// Throws Error if the hyper-parameters are out of range.
  void validate() const;
};

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

/// k(x, x').
double kernel_eval(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp);

/// Gradient of k(s, x') with respect to s, evaluated at s = x.
Vector kernel_grad1(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp);

/// Mixed second derivatives d^2 k(s, r) / ds_a dr_b at s = x, r = x'.
Matrix kernel_cross_hessian(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp);

/// G(i, j) = k(a_i, b_j) for the rows of A and B.
Matrix gram_matrix(const KernelSpec& spec, const MatrixRef& A, const MatrixRef& B);

/// For every row x of `points`:
///   sum_j alpha_j k(c_j, x) + sum_j sum_a beta(a*n + j) d/ds_a k(s, x)|_{s = c_j}
/// with c_j the rows of `centers` (n of them). `beta` may be empty.
Vector kernel_expansion(const KernelSpec& spec, const MatrixRef& centers, const VectorRef& alpha,
                        const VectorRef& beta, const MatrixRef& points);

/// Dense matrices of the finite-dimensional problem for one training set.
///
/// Block layout (n points, d inputs, N = n + d*n):
///   K  n x n        K(i, j)            = k(x_i, x_j)
///   D  dn x n       D(a*n + i, j)      = d/ds_a k(s, x_j) at s = x_i
///   L  dn x dn      L(a*n + i, b*n + j) = d^2 k(s, r) / ds_a dr_b at (x_i, x_j)
///   F  n x N        [K  D^T]
///   Z  dn x N       [D  L]
///   Q  N x N        [[K, 0], [2D, L]]
struct OperatorSet {
  Matrix K, D, L, F, Z, Q;
  Eigen::Index n = 0;
  Eigen::Index d = 0;

  Eigen::Index dim() const { return n + d * n; }
};

/// Default cap on the estimated size of an OperatorSet (4 GiB).
inline constexpr std::size_t kDefaultOperatorMemoryCap = std::size_t{4} << 30;

/// Bytes needed to hold the operators for an n x d training set.
std::size_t operator_memory_estimate(Eigen::Index n, Eigen::Index d);

OperatorSet assemble_operators(const KernelSpec& spec, const MatrixRef& X,
                               std::size_t memory_cap = kDefaultOperatorMemoryCap);

/// Pooled median of each point's distances to its nearest `neighbors` points.
double gaussian_width_heuristic(const MatrixRef& X, int neighbors = 20);

/// Throws Error unless X has at least one row and column and finite entries.
void validate_data(const MatrixRef& X, const char* what = "data matrix");

}  // namespace nvsd
