#include "nvsd/prox.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace nvsd {

namespace {

void check_blocks(const VectorRef& v, Eigen::Index n) {
  if (n < 1 || v.size() % n != 0)
    throw Error("block vector of length " + std::to_string(v.size()) +
                " is not a whole number of blocks of length " + std::to_string(n));
}

// Shared by all three maps so degenerate parameter choices reproduce the
// lasso output exactly.
double shrink_factor(double norm, double threshold) {
  if (!(norm > 0.0)) return 0.0;
  return std::max(0.0, 1.0 - threshold / norm);
}

void apply_block_threshold(const VectorRef& v, Eigen::Index n, double threshold, Vector& out) {
  const Eigen::Index blocks = v.size() / n;
  for (Eigen::Index a = 0; a < blocks; ++a) {
    const auto block = v.segment(a * n, n);
    const double factor = shrink_factor(block.norm(), threshold);
    if (factor == 0.0)
      out.segment(a * n, n).setZero();
    else
      out.segment(a * n, n) = block * factor;
  }
}

}  // namespace

GroupStructure::GroupStructure(std::vector<std::vector<int>> groups, int d)
    : groups_(std::move(groups)), d_(d) {
  if (d < 1) throw Error("groups: dimension must be >= 1");
  std::vector<int> seen(static_cast<std::size_t>(d), 0);
  for (const auto& g : groups_) {
    if (g.empty()) throw Error("groups: empty group");
    for (int a : g) {
      if (a < 0 || a >= d)
        throw Error("groups: variable index " + std::to_string(a + 1) + " outside 1.." +
                    std::to_string(d));
      if (seen[static_cast<std::size_t>(a)]++)
        throw Error("groups: variable " + std::to_string(a + 1) + " appears in two groups");
    }
  }
  for (int a = 0; a < d; ++a)
    if (!seen[static_cast<std::size_t>(a)])
      throw Error("groups: variable " + std::to_string(a + 1) + " is not in any group");
}

GroupStructure GroupStructure::singletons(int d) {
  std::vector<std::vector<int>> groups;
  for (int a = 0; a < d; ++a) groups.push_back({a});
  return GroupStructure(std::move(groups), d);
}

GroupStructure GroupStructure::consecutive(int d, int size) {
  if (size < 1 || d % size != 0)
    throw Error("groups: " + std::to_string(d) + " variables cannot form groups of " +
                std::to_string(size));
  std::vector<std::vector<int>> groups;
  for (int start = 0; start < d; start += size) {
    std::vector<int> g;
    for (int a = start; a < start + size; ++a) g.push_back(a);
    groups.push_back(std::move(g));
  }
  return GroupStructure(std::move(groups), d);
}

GroupStructure GroupStructure::from_json(const std::string& text, int d) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("groups: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error("groups: expected an array of arrays");
  std::vector<std::vector<int>> groups;
  for (const auto& entry : doc) {
    if (!entry.is_array()) throw Error("groups: expected an array of arrays");
    std::vector<int> g;
    for (const auto& idx : entry) {
      if (!idx.is_number_integer()) throw Error("groups: indices must be integers");
      g.push_back(idx.get<int>() - 1);
    }
    groups.push_back(std::move(g));
  }
  return GroupStructure(std::move(groups), d);
}

std::string GroupStructure::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& g : groups_) {
    nlohmann::json entry = nlohmann::json::array();
    for (int a : g) entry.push_back(a + 1);
    doc.push_back(entry);
  }
  return doc.dump();
}

RegularizerSpec RegularizerSpec::lasso() { return {}; }

RegularizerSpec RegularizerSpec::group_lasso(GroupStructure groups) {
  RegularizerSpec reg;
  reg.kind = RegularizerKind::GroupLasso;
  reg.groups = std::move(groups);
  return reg;
}

RegularizerSpec RegularizerSpec::elastic_net(double mu) {
  RegularizerSpec reg;
  reg.kind = RegularizerKind::ElasticNet;
  reg.mu = mu;
  if (!(mu >= 0.0 && mu <= 1.0)) throw Error("elastic net: mu must lie in [0, 1]");
  return reg;
}

void RegularizerSpec::validate(int d) const {
  if (kind == RegularizerKind::GroupLasso && groups.dim() != d)
    throw Error("group lasso: group structure covers " + std::to_string(groups.dim()) +
                " variables, data has " + std::to_string(d));
  if (kind == RegularizerKind::ElasticNet && !(mu >= 0.0 && mu <= 1.0))
    throw Error("elastic net: mu must lie in [0, 1]");
}

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::Lasso: return "l";
    case RegularizerKind::GroupLasso: return "gl";
    case RegularizerKind::ElasticNet: return "en";
  }
  return "unknown";
}

Vector prox_lasso(const VectorRef& v, Eigen::Index n, double threshold) {
  check_blocks(v, n);
  if (!(threshold >= 0.0)) throw Error("prox_lasso: threshold must be >= 0");
  Vector out(v.size());
  apply_block_threshold(v, n, threshold, out);
  return out;
}

Vector prox_group_lasso(const VectorRef& v, Eigen::Index n, double base_threshold,
                        const GroupStructure& groups) {
  check_blocks(v, n);
  if (!(base_threshold >= 0.0)) throw Error("prox_group_lasso: threshold must be >= 0");
  if (groups.dim() * n != v.size())
    throw Error("prox_group_lasso: group structure does not match the block vector");
  Vector out(v.size());
  for (int g = 0; g < groups.num_groups(); ++g) {
    double sq = 0.0;
    for (int a : groups.group(g)) sq += v.segment(a * n, n).squaredNorm();
    const double factor = shrink_factor(std::sqrt(sq), base_threshold * groups.size(g));
    for (int a : groups.group(g)) {
      if (factor == 0.0)
        out.segment(a * n, n).setZero();
      else
        out.segment(a * n, n) = v.segment(a * n, n) * factor;
    }
  }
  return out;
}

Vector prox_elastic_net(const VectorRef& v, double tau, double mu, double kappa,
                        Eigen::Index n) {
  check_blocks(v, n);
  if (!(kappa > 0.0)) throw Error("prox_elastic_net: kappa must be > 0");
  if (!(tau >= 0.0)) throw Error("prox_elastic_net: tau must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw Error("prox_elastic_net: mu must lie in [0, 1]");
  const double rn = static_cast<double>(n);
  const double threshold = tau * mu / (kappa * std::sqrt(rn));
  const double shrink = 2.0 * tau * (1.0 - mu) / (kappa * rn) + 1.0;
  Vector out(v.size());
  apply_block_threshold(v, n, threshold, out);
  out /= shrink;
  return out;
}

double regularizer_value(const RegularizerSpec& reg, const VectorRef& phi, Eigen::Index n) {
  check_blocks(phi, n);
  const double rn = static_cast<double>(n);
  const Eigen::Index d = phi.size() / n;
  switch (reg.kind) {
    case RegularizerKind::Lasso: {
      double acc = 0.0;
      for (Eigen::Index a = 0; a < d; ++a) acc += phi.segment(a * n, n).norm();
      return acc / std::sqrt(rn);
    }
    case RegularizerKind::GroupLasso: {
      double acc = 0.0;
      for (int g = 0; g < reg.groups.num_groups(); ++g) {
        double sq = 0.0;
        for (int a : reg.groups.group(g)) sq += phi.segment(a * n, n).squaredNorm();
        acc += reg.groups.size(g) * std::sqrt(sq);
      }
      return acc / std::sqrt(rn);
    }
    case RegularizerKind::ElasticNet: {
      double l1 = 0.0, l2 = 0.0;
      for (Eigen::Index a = 0; a < d; ++a) {
        const double sq = phi.segment(a * n, n).squaredNorm();
        l1 += std::sqrt(sq);
        l2 += sq;
      }
      return reg.mu / std::sqrt(rn) * l1 + (1.0 - reg.mu) / rn * l2;
    }
  }
  return 0.0;
}

Vector partial_derivative_norms(const VectorRef& phi, Eigen::Index n) {
  check_blocks(phi, n);
  const Eigen::Index d = phi.size() / n;
  Vector norms(d);
  const double root_n = std::sqrt(static_cast<double>(n));
  for (Eigen::Index a = 0; a < d; ++a) norms[a] = phi.segment(a * n, n).norm() / root_n;
  return norms;
}

std::vector<int> support_of(const VectorRef& norms) {
  std::vector<int> support;
  for (Eigen::Index a = 0; a < norms.size(); ++a)
    if (norms[a] > 0.0) support.push_back(static_cast<int>(a));
  return support;
}

}  // namespace nvsd
