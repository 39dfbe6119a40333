#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nvsd/prox.hpp"
#include "test_util.hpp"

namespace nvsd {
namespace {

using test::numeric_block_prox;
using test::random_vector;

// Applies the numeric block oracle to every block (or group) of v.
Vector oracle_lasso(const Vector& v, Eigen::Index n, double t) {
  Vector out(v.size());
  for (Eigen::Index a = 0; a < v.size() / n; ++a)
    out.segment(a * n, n) = numeric_block_prox(v.segment(a * n, n), t, 0.0);
  return out;
}

Vector oracle_group(const Vector& v, Eigen::Index n, double base, const GroupStructure& groups) {
  Vector out(v.size());
  for (int g = 0; g < groups.num_groups(); ++g) {
    const auto& idx = groups.group(g);
    Vector stacked(static_cast<Eigen::Index>(idx.size()) * n);
    for (std::size_t k = 0; k < idx.size(); ++k)
      stacked.segment(static_cast<Eigen::Index>(k) * n, n) = v.segment(idx[k] * n, n);
    const Vector p = numeric_block_prox(stacked, base * groups.size(g), 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.segment(idx[k] * n, n) = p.segment(static_cast<Eigen::Index>(k) * n, n);
  }
  return out;
}

Vector oracle_en(const Vector& v, double tau, double mu, double kappa, Eigen::Index n) {
  const double c = tau * mu / (kappa * std::sqrt(static_cast<double>(n)));
  const double e = tau * (1 - mu) / (kappa * static_cast<double>(n));
  Vector out(v.size());
  for (Eigen::Index a = 0; a < v.size() / n; ++a)
    out.segment(a * n, n) = numeric_block_prox(v.segment(a * n, n), c, e);
  return out;
}

TEST(ProxLasso, Examples) {
  std::mt19937_64 rng(1);
  const Vector v = random_vector(12, rng);
  EXPECT_EQ(prox_lasso(v, 4, 0.0), v);
  Vector small(2);
  small << 0.3, 0.4;  // norm 0.5
  const Vector z = prox_lasso(small, 2, 0.7);
  EXPECT_EQ(z(0), 0.0);
  EXPECT_EQ(z(1), 0.0);
  EXPECT_THROW(prox_lasso(v, 4, -1.0), Error);
  EXPECT_THROW(prox_lasso(v, 5, 0.1), Error);
}

TEST(ProxLasso, MatchesNumericMinimizer) {
  std::mt19937_64 rng(2);
  const Vector v = random_vector(12, rng);
  EXPECT_LE((prox_lasso(v, 4, 0.3) - oracle_lasso(v, 4, 0.3)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ProxGroupLasso, SingletonsEqualLasso) {
  std::mt19937_64 rng(3);
  const Vector v = random_vector(15, rng);
  EXPECT_EQ(prox_group_lasso(v, 5, 0.4, GroupStructure::singletons(3)), prox_lasso(v, 5, 0.4));
}

TEST(ProxGroupLasso, WholeGroupInsideThreshold) {
  std::mt19937_64 rng(4);
  Vector v = random_vector(12, rng);
  const GroupStructure all({{0, 1, 2}}, 3);
  const double base = v.norm() / 3.0 * (1 + 1e-12);
  EXPECT_TRUE(prox_group_lasso(v, 4, base, all).isZero(0.0));
}

TEST(ProxGroupLasso, MatchesNumericMinimizer) {
  std::mt19937_64 rng(5);
  const GroupStructure groups({{0, 2}, {1}}, 3);
  const Vector v = random_vector(12, rng);
  EXPECT_LE((prox_group_lasso(v, 4, 0.2, groups) - oracle_group(v, 4, 0.2, groups))
                .cwiseAbs()
                .maxCoeff(),
            1e-8);
}

TEST(ProxElasticNet, Degenerate) {
  std::mt19937_64 rng(6);
  const Vector v = random_vector(12, rng);
  const double tau = 0.8, kappa = 1.7;
  const Eigen::Index n = 4;
  EXPECT_EQ(prox_elastic_net(v, tau, 1.0, kappa, n), prox_lasso(v, n, tau / (kappa * 2.0)));
  const Vector ridge = prox_elastic_net(v, tau, 0.0, kappa, n);
  EXPECT_LE((ridge - v / (2 * tau / (kappa * 4.0) + 1)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(prox_elastic_net(v, tau, 0.5, 0.0, n), Error);
}

TEST(ProxElasticNet, MatchesNumericMinimizer) {
  std::mt19937_64 rng(7);
  const Vector v = random_vector(12, rng);
  EXPECT_LE((prox_elastic_net(v, 1.3, 0.5, 0.9, 4) - oracle_en(v, 1.3, 0.5, 0.9, 4))
                .cwiseAbs()
                .maxCoeff(),
            1e-8);
}

TEST(Prox, FirmlyNonExpansive) {
  std::mt19937_64 rng(8);
  const GroupStructure groups({{0, 3}, {1}, {2}}, 4);
  for (int t = 0; t < 200; ++t) {
    const Vector u = random_vector(20, rng), w = random_vector(20, rng);
    const double th = test::uniform(rng, 0, 2);
    const double mu = test::uniform(rng, 0, 1), kappa = test::uniform(rng, 0.1, 3);
    const double gap = (u - w).norm() * (1 + 1e-12);
    EXPECT_LE((prox_lasso(u, 5, th) - prox_lasso(w, 5, th)).norm(), gap);
    EXPECT_LE((prox_group_lasso(u, 5, th, groups) - prox_group_lasso(w, 5, th, groups)).norm(), gap);
    EXPECT_LE((prox_elastic_net(u, th, mu, kappa, 5) - prox_elastic_net(w, th, mu, kappa, 5)).norm(),
              gap);
  }
}

TEST(Prox, BlocksBelowThresholdAreExactZeros) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    const Vector v = random_vector(12, rng);
    const double th = test::uniform(rng, 0, 3);
    const Vector p = prox_lasso(v, 4, th);
    for (int a = 0; a < 3; ++a) {
      if (v.segment(a * 4, 4).norm() < th) {
        for (int i = 0; i < 4; ++i) ASSERT_EQ(p(a * 4 + i), 0.0);
      } else {
        ASSERT_GT(p.segment(a * 4, 4).norm(), 0.0);
      }
    }
  }
}

TEST(Prox, ZeroBlockMapsToZero) {
  const Vector v = Vector::Zero(6);
  EXPECT_TRUE(prox_lasso(v, 3, 0.0).isZero(0.0));
  EXPECT_TRUE(prox_elastic_net(v, 1.0, 0.5, 1.0, 3).isZero(0.0));
}

TEST(RegularizerValue, Examples) {
  EXPECT_EQ(regularizer_value(RegularizerSpec::lasso(), Vector::Zero(8), 4), 0.0);
  Vector phi = Vector::Zero(4);
  phi(0) = 2;
  EXPECT_DOUBLE_EQ(regularizer_value(RegularizerSpec::lasso(), phi, 4), 1.0);
}

TEST(RegularizerValue, GroupAndElasticNetMatchDirectSummation) {
  std::mt19937_64 rng(10);
  const int n = 5, d = 4;
  const Vector phi = random_vector(n * d, rng);
  const GroupStructure groups({{0, 2}, {1, 3}}, d);
  const double g0 = std::sqrt(phi.segment(0, n).squaredNorm() + phi.segment(2 * n, n).squaredNorm());
  const double g1 = std::sqrt(phi.segment(n, n).squaredNorm() + phi.segment(3 * n, n).squaredNorm());
  EXPECT_NEAR(regularizer_value(RegularizerSpec::group_lasso(groups), phi, n),
              (2 * g0 + 2 * g1) / std::sqrt(5.0), 1e-12);
  double l1 = 0, l2 = 0;
  for (int a = 0; a < d; ++a) {
    l1 += phi.segment(a * n, n).norm();
    l2 += phi.segment(a * n, n).squaredNorm();
  }
  EXPECT_NEAR(regularizer_value(RegularizerSpec::elastic_net(0.3), phi, n),
              0.3 * l1 / std::sqrt(5.0) + 0.7 * l2 / 5.0, 1e-12);
}

TEST(DerivativeNorms, Examples) {
  const Vector z = partial_derivative_norms(Vector::Zero(8), 4);
  EXPECT_TRUE(z.isZero(0.0));
  EXPECT_TRUE(support_of(z).empty());
  Vector phi = Vector::Zero(8);
  phi.head(4).setOnes();
  const Vector norms = partial_derivative_norms(phi, 4);
  EXPECT_DOUBLE_EQ(norms(0), 1.0);
  EXPECT_EQ(support_of(norms), std::vector<int>{0});
}

TEST(GroupStructureTest, ParsingAndValidation) {
  const auto g = GroupStructure::from_json("[[1,3],[2]]", 3);
  EXPECT_EQ(g.num_groups(), 2);
  EXPECT_EQ(g.group(0), (std::vector<int>{0, 2}));
  EXPECT_EQ(GroupStructure::from_json(g.to_json(), 3).groups(), g.groups());
  EXPECT_THROW(GroupStructure::from_json("[[1,2],[2,3]]", 3), Error);
  EXPECT_THROW(GroupStructure::from_json("[[1,2]]", 3), Error);
  EXPECT_THROW(GroupStructure::from_json("[[0,1,2]]", 3), Error);
  EXPECT_THROW(GroupStructure::from_json("{", 3), Error);
  EXPECT_THROW(GroupStructure::consecutive(7, 3), Error);
  EXPECT_THROW(RegularizerSpec::elastic_net(1.5), Error);
  EXPECT_THROW(RegularizerSpec::group_lasso(GroupStructure::singletons(3)).validate(4), Error);
}

}  // namespace
}  // namespace nvsd
