#include "nvsd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nvsd {

namespace {

double ipow(double base, int exponent) {
  double result = 1.0;
  for (int i = 0; i < exponent; ++i) result *= base;
  return result;
}

void check_dims(const VectorRef& x, const VectorRef& xp) {
  if (x.size() != xp.size())
    throw Error("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                std::to_string(xp.size()) + ")");
}

double sq_distance(const VectorRef& x, const VectorRef& xp) {
  double acc = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    const double delta = x[a] - xp[a];
    acc += delta * delta;
  }
  return acc;
}

double dot(const VectorRef& x, const VectorRef& xp) {
  double acc = 0.0;
  for (Eigen::Index a = 0; a < x.size(); ++a) acc += x[a] * xp[a];
  return acc;
}

double eval_unchecked(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp) {
  switch (spec.family) {
    case KernelFamily::Linear:
      return dot(x, xp);
    case KernelFamily::Polynomial:
      return ipow(dot(x, xp) + spec.offset, spec.degree);
    case KernelFamily::Gaussian:
      return std::exp(-sq_distance(x, xp) / (2.0 * spec.width * spec.width));
  }
  return 0.0;
}

void grad_into(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp,
               Eigen::Ref<Vector> out) {
  const Eigen::Index d = x.size();
  switch (spec.family) {
    case KernelFamily::Linear:
      out = xp;
      return;
    case KernelFamily::Polynomial: {
      const double coef = spec.degree * ipow(dot(x, xp) + spec.offset, spec.degree - 1);
      for (Eigen::Index a = 0; a < d; ++a) out[a] = coef * xp[a];
      return;
    }
    case KernelFamily::Gaussian: {
      const double s2 = spec.width * spec.width;
      const double k = std::exp(-sq_distance(x, xp) / (2.0 * s2));
      for (Eigen::Index a = 0; a < d; ++a) out[a] = k * (xp[a] - x[a]) / s2;
      return;
    }
  }
}

// Every entry is written as a commutative product of terms that are invariant
// under (x, x', a, b) -> (x', x, b, a), so the swapped call reproduces it
// bit for bit.
void hessian_into(const KernelSpec& spec, const VectorRef& s, const VectorRef& r,
                  Eigen::Ref<Matrix> out) {
  const Eigen::Index d = s.size();
  switch (spec.family) {
    case KernelFamily::Linear:
      out.setIdentity();
      return;
    case KernelFamily::Polynomial: {
      const int p = spec.degree;
      const double u = dot(s, r) + spec.offset;
      const double first = p * ipow(u, p - 1);
      const double second = p > 1 ? double(p) * double(p - 1) * ipow(u, p - 2) : 0.0;
      for (Eigen::Index b = 0; b < d; ++b)
        for (Eigen::Index a = 0; a < d; ++a)
          out(a, b) = second * (s[b] * r[a]) + (a == b ? first : 0.0);
      return;
    }
    case KernelFamily::Gaussian: {
      const double s2 = spec.width * spec.width;
      const double s4 = s2 * s2;
      const double k = std::exp(-sq_distance(s, r) / (2.0 * s2));
      for (Eigen::Index b = 0; b < d; ++b) {
        const double db = s[b] - r[b];
        for (Eigen::Index a = 0; a < d; ++a) {
          const double da = s[a] - r[a];
          out(a, b) = a == b ? k * (s2 - da * da) / s4 : k * (-(da * db)) / s4;
        }
      }
      return;
    }
  }
}

}  // namespace

KernelSpec KernelSpec::linear() {
  KernelSpec spec;
  spec.family = KernelFamily::Linear;
  return spec;
}

KernelSpec KernelSpec::polynomial(int degree, double offset) {
  KernelSpec spec;
  spec.family = KernelFamily::Polynomial;
  spec.degree = degree;
  spec.offset = offset;
  spec.validate();
  return spec;
}

KernelSpec KernelSpec::gaussian(double width) {
  KernelSpec spec;
  spec.family = KernelFamily::Gaussian;
  spec.width = width;
  spec.validate();
  return spec;
}

void KernelSpec::validate() const {
  switch (family) {
    case KernelFamily::Linear:
      return;
    case KernelFamily::Polynomial:
      if (degree < 1) throw Error("polynomial kernel: degree must be >= 1");
      if (!(offset >= 0.0) || !std::isfinite(offset))
        throw Error("polynomial kernel: offset must be finite and >= 0");
      return;
    case KernelFamily::Gaussian:
      if (!(width > 0.0) || !std::isfinite(width))
        throw Error("gaussian kernel: width must be finite and > 0");
      return;
  }
}

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Polynomial: return "polynomial";
    case KernelFamily::Gaussian: return "gaussian";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "linear") return KernelFamily::Linear;
  if (name == "polynomial" || name == "poly") return KernelFamily::Polynomial;
  if (name == "gaussian" || name == "rbf") return KernelFamily::Gaussian;
  throw Error("unknown kernel family '" + name + "'");
}

double kernel_eval(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp) {
  check_dims(x, xp);
  return eval_unchecked(spec, x, xp);
}

Vector kernel_grad1(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp) {
  check_dims(x, xp);
  Vector out(x.size());
  grad_into(spec, x, xp, out);
  return out;
}

Matrix kernel_cross_hessian(const KernelSpec& spec, const VectorRef& x, const VectorRef& xp) {
  check_dims(x, xp);
  Matrix out(x.size(), x.size());
  hessian_into(spec, x, xp, out);
  return out;
}

void validate_data(const MatrixRef& X, const char* what) {
  if (X.rows() < 1 || X.cols() < 1)
    throw Error(std::string(what) + ": needs at least one row and one column");
  if (!X.allFinite()) throw Error(std::string(what) + ": non-finite entries");
}

std::size_t operator_memory_estimate(Eigen::Index n, Eigen::Index d) {
  const auto nn = static_cast<std::size_t>(n);
  const auto dn = static_cast<std::size_t>(d) * nn;
  const std::size_t big = nn + dn;
  // K, D, L, F, Z, Q
  const std::size_t entries = nn * nn + dn * nn + dn * dn + nn * big + dn * big + big * big;
  return entries * sizeof(double);
}

OperatorSet assemble_operators(const KernelSpec& spec, const MatrixRef& X,
                               std::size_t memory_cap) {
  spec.validate();
  validate_data(X, "training inputs");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (operator_memory_estimate(n, d) > memory_cap)
    throw Error("operator matrices for n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                " exceed the memory cap of " + std::to_string(memory_cap) + " bytes");

  OperatorSet ops;
  ops.n = n;
  ops.d = d;
  const Eigen::Index dn = d * n;
  ops.K.resize(n, n);
  ops.D.resize(dn, n);
  ops.L.resize(dn, dn);

  const Matrix Xt = X.transpose();  // column i is point i
  Vector grad(d);
  Matrix hess(d, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto xi = Xt.col(i);
      const auto xj = Xt.col(j);
      ops.K(i, j) = eval_unchecked(spec, xi, xj);
      grad_into(spec, xi, xj, grad);
      for (Eigen::Index a = 0; a < d; ++a) ops.D(a * n + i, j) = grad[a];
      hessian_into(spec, xi, xj, hess);
      for (Eigen::Index b = 0; b < d; ++b)
        for (Eigen::Index a = 0; a < d; ++a) ops.L(a * n + i, b * n + j) = hess(a, b);
    }
  }

  const Eigen::Index big = n + dn;
  ops.F.resize(n, big);
  ops.F << ops.K, ops.D.transpose();
  ops.Z.resize(dn, big);
  ops.Z << ops.D, ops.L;
  ops.Q.setZero(big, big);
  ops.Q.topLeftCorner(n, n) = ops.K;
  ops.Q.bottomLeftCorner(dn, n) = 2.0 * ops.D;
  ops.Q.bottomRightCorner(dn, dn) = ops.L;
  return ops;
}

Matrix gram_matrix(const KernelSpec& spec, const MatrixRef& A, const MatrixRef& B) {
  spec.validate();
  if (A.cols() != B.cols()) throw Error("gram matrix: dimension mismatch");
  const Matrix At = A.transpose();
  const Matrix Bt = B.transpose();
  Matrix G(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) G(i, j) = eval_unchecked(spec, At.col(i), Bt.col(j));
  return G;
}

Vector kernel_expansion(const KernelSpec& spec, const MatrixRef& centers, const VectorRef& alpha,
                        const VectorRef& beta, const MatrixRef& points) {
  spec.validate();
  const Eigen::Index n = centers.rows();
  const Eigen::Index d = centers.cols();
  if (points.cols() != d) throw Error("kernel expansion: dimension mismatch");
  if (alpha.size() != n) throw Error("kernel expansion: alpha has the wrong length");
  const bool has_beta = beta.size() > 0;
  if (has_beta && beta.size() != d * n) throw Error("kernel expansion: beta has the wrong length");

  const Matrix Ct = centers.transpose();
  const Matrix Pt = points.transpose();
  // B(a, j) = beta_{aj}; proj(j) = <beta_j, c_j> for the gaussian shift.
  Matrix B;
  Vector proj;
  if (has_beta) {
    B = Eigen::Map<const Matrix>(beta.data(), n, d).transpose();
    proj = (B.array() * Ct.array()).colwise().sum().transpose();
  }

  Vector out = Vector::Zero(points.rows());
  for (Eigen::Index m = 0; m < points.rows(); ++m) {
    const auto x = Pt.col(m);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto c = Ct.col(j);
      switch (spec.family) {
        case KernelFamily::Linear: {
          acc += alpha[j] * dot(c, x);
          if (has_beta) acc += B.col(j).dot(x);
          break;
        }
        case KernelFamily::Polynomial: {
          const double u = dot(c, x) + spec.offset;
          acc += alpha[j] * ipow(u, spec.degree);
          if (has_beta) acc += spec.degree * ipow(u, spec.degree - 1) * B.col(j).dot(x);
          break;
        }
        case KernelFamily::Gaussian: {
          const double s2 = spec.width * spec.width;
          const double k = std::exp(-sq_distance(c, x) / (2.0 * s2));
          acc += alpha[j] * k;
          if (has_beta) acc += k * (B.col(j).dot(x) - proj[j]) / s2;
          break;
        }
      }
    }
    out[m] = acc;
  }
  return out;
}

double gaussian_width_heuristic(const MatrixRef& X, int neighbors) {
  validate_data(X, "width heuristic input");
  const Eigen::Index n = X.rows();
  if (n < 2) throw Error("width heuristic: needs at least two points");
  if (neighbors < 1) throw Error("width heuristic: neighbors must be >= 1");
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(neighbors, n - 1));

  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(n) * k);
  std::vector<double> row;
  row.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row.push_back((X.row(i) - X.row(j)).norm());
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
    pooled.insert(pooled.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k));
  }

  std::sort(pooled.begin(), pooled.end());
  const std::size_t m = pooled.size();
  const double median = m % 2 == 1 ? pooled[m / 2] : 0.5 * (pooled[m / 2 - 1] + pooled[m / 2]);
  if (!(median > 0.0)) throw Error("width heuristic: degenerate data (zero median distance)");
  return median;
}

}  // namespace nvsd
