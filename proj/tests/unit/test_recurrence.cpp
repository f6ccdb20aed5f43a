#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"

using namespace sandpile;

namespace {

std::vector<VolumeGraph> small_volumes() {
  std::vector<VolumeGraph> out;
  for (std::size_t k = 1; k <= 10; ++k) out.push_back(build_tree_prefix(2, k));
  for (int side = 1; side <= 3; ++side) out.push_back(build_grid_volume(2, side));
  out.push_back(build_grid_volume(1, 5));
  out.push_back(build_tree_prefix(3, 6));
  return out;
}

}  // namespace

TEST(Recurrence, TwoSiteSetIsAllButOneOne) {
  const VolumeGraph v = build_tree_prefix(2, 2);
  const auto r = enumerate_recurrent(v);
  ASSERT_EQ(r.size(), 8u);
  for (const auto& c : r) EXPECT_FALSE(c[0] == 1 && c[1] == 1);
  EXPECT_EQ(exact_determinant(v.laplacian()), 8);
}

TEST(Recurrence, BurningAgreesWithBoundaryAdditionTest) {
  for (const VolumeGraph& v : small_volumes()) {
    if (v.size() > 7) continue;
    for (const auto& h : oracle::all_stable(v)) {
      ASSERT_EQ(is_recurrent(HeightConfig(h), v), oracle::recurrent_by_identity(v, h)) << v.describe();
    }
  }
}

TEST(Recurrence, EnumerationMatchesBruteForce) {
  for (const VolumeGraph& v : small_volumes()) {
    if (v.size() > 8) continue;
    std::vector<std::vector<Height>> got;
    for (const auto& c : enumerate_recurrent(v)) got.push_back(c.vec());
    auto ref = oracle::brute_recurrent(v);
    std::sort(got.begin(), got.end());
    std::sort(ref.begin(), ref.end());
    EXPECT_EQ(got, ref) << v.describe();
  }
}

TEST(Recurrence, CountEqualsDeterminant) {
  for (const VolumeGraph& v : small_volumes()) {
    const double dense = oracle::dense_laplacian(v).determinant();
    const mpz_class det = exact_determinant(v.laplacian());
    EXPECT_EQ(det.get_d(), std::round(dense)) << v.describe();
    EXPECT_EQ(mpz_class(enumerate_recurrent(v).size()), det) << v.describe();
  }
}

TEST(Recurrence, StarDeterminantIs54) { EXPECT_EQ(exact_determinant(build_tree_volume(2, 1).laplacian()), 54); }

TEST(Recurrence, LargeDeterminantAgainstLogDet) {
  for (const VolumeGraph& v : {build_tree_volume(2, 6), build_grid_volume(2, 12)}) {
    const RecurrentCount c = count_recurrent(v);
    ASSERT_TRUE(c.exact.has_value());
    EXPECT_FALSE(c.approximate);
    const double ld = oracle::dense_laplacian(v).ldlt().vectorD().array().log().sum();
    EXPECT_NEAR(c.log_count, ld, 1e-8 * ld);
    EXPECT_NEAR(log_determinant(v.laplacian()), ld, 1e-8 * ld);
  }
}

TEST(Recurrence, ApproximateBeyondCap) {
  const VolumeGraph v = build_tree_volume(2, 6);
  const RecurrentCount c = count_recurrent(v, 10);
  EXPECT_TRUE(c.approximate);
  EXPECT_FALSE(c.exact.has_value());
  EXPECT_NEAR(c.log_count, count_recurrent(v).log_count, 1e-8 * c.log_count);
  EXPECT_EQ(c.to_string().rfind("exp(", 0), 0u);
}

TEST(Recurrence, BurnReportsForbiddenResidual) {
  const VolumeGraph v = build_tree_volume(2, 1);
  const BurnReport r = burn(HeightConfig({1, 1, 3, 3}), v);
  EXPECT_FALSE(r.allowed());
  EXPECT_EQ(r.residual, (std::vector<SiteId>{0, 1}));
  EXPECT_THROW(burn(HeightConfig({4, 1, 1, 1}), v), PreconditionError);
}

TEST(Recurrence, GroupAxiomsOnSmallVolumes) {
  for (const VolumeGraph& v : small_volumes()) {
    const GroupAxiomReport r = verify_group_axioms(v);
    EXPECT_TRUE(r.ok()) << v.describe();
    EXPECT_TRUE(r.violations.empty());
    EXPECT_EQ(std::to_string(r.recurrent), r.determinant);
    ASSERT_EQ(r.orders.size(), v.size());
    for (std::uint64_t o : r.orders) EXPECT_EQ(r.recurrent % o, 0u);
  }
}

TEST(Recurrence, StarOrders) {
  const GroupAxiomReport r = verify_group_axioms(build_tree_prefix(2, 3));
  EXPECT_EQ(r.recurrent, 21u);
  EXPECT_EQ(r.orders, (std::vector<std::uint64_t>{7, 21, 21}));
}

TEST(Recurrence, InverseAddition) {
  const VolumeGraph v = build_tree_volume(2, 1);
  for (const HeightConfig& c : enumerate_recurrent(v)) {
    for (SiteId x = 0; x < v.size(); ++x) {
      const HeightConfig inv = inverse_addition(c, x, v);
      EXPECT_EQ(add_grain(inv, x, v.laplacian()).config, c);
    }
  }
  EXPECT_THROW(inverse_addition(HeightConfig({1, 1, 1, 1}), 0, v), PreconditionError);
}

TEST(Recurrence, PermutationIsBijection) {
  const VolumeGraph v = build_grid_volume(2, 2);
  const RecurrentSet set(v.laplacian());
  for (SiteId x = 0; x < v.size(); ++x) {
    auto p = addition_permutation(set, x, v.laplacian());
    std::sort(p.begin(), p.end());
    for (std::uint32_t i = 0; i < p.size(); ++i) ASSERT_EQ(p[i], i);
  }
}

TEST(Recurrence, EnumerationCap) {
  EXPECT_THROW(enumerate_recurrent(build_tree_volume(2, 3)), ResourceError);
}
