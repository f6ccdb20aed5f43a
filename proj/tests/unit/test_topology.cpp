#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace sandpile;

TEST(Topology, TreeBallSizes) {
  for (int n = 0; n <= 8; ++n) {
    std::size_t expect = 1, gen = 3;
    for (int k = 1; k <= n; ++k, gen *= 2) expect += gen;
    EXPECT_EQ(build_tree_volume(2, n).size(), expect) << n;
    EXPECT_EQ(tree_ball_size(2, n), expect);
  }
  EXPECT_EQ(build_tree_volume(3, 2).size(), 1u + 4 + 12);
}

TEST(Topology, TreeBallStructure) {
  const VolumeGraph v = build_tree_volume(2, 4);
  std::size_t edges = 0;
  for (SiteId x = 0; x < v.size(); ++x) {
    edges += v.degree(x);
    const bool leaf_gen = v.generation(x) == 4;
    EXPECT_EQ(v.is_boundary(x), leaf_gen);
    EXPECT_EQ(v.degree(x), leaf_gen ? 1u : 3u);
    for (SiteId y : v.neighbors(x)) {
      EXPECT_EQ(std::abs(static_cast<int>(v.generation(x)) - static_cast<int>(v.generation(y))), 1);
    }
    if (x > 0) EXPECT_GE(v.generation(x), v.generation(x - 1));
  }
  EXPECT_EQ(edges / 2, v.size() - 1);  // a tree
  EXPECT_EQ(v.max_generation(), 4u);
}

TEST(Topology, NestedBallsSharePrefixes) {
  const VolumeGraph big = build_tree_volume(2, 6);
  for (int n = 0; n < 6; ++n) {
    const VolumeGraph small = build_tree_volume(2, n);
    for (SiteId x = 0; x < small.size(); ++x) {
      ASSERT_EQ(small.generation(x), big.generation(x));
      std::set<SiteId> a(small.neighbors(x).begin(), small.neighbors(x).end());
      std::set<SiteId> b;
      for (SiteId y : big.neighbors(x))
        if (y < small.size()) b.insert(y);
      ASSERT_EQ(a, b) << "site " << x << " n " << n;
    }
  }
}

TEST(Topology, PrefixVolumesAreConnected) {
  const VolumeGraph big = build_tree_volume(2, 3);
  for (std::size_t k = 1; k <= big.size(); ++k) {
    const VolumeGraph p = prefix_volume(big, k);
    ASSERT_EQ(p.size(), k);
    std::size_t edges = 0;
    for (SiteId x = 0; x < k; ++x) edges += p.degree(x);
    EXPECT_EQ(edges / 2, k - 1);
    EXPECT_EQ(build_tree_prefix(2, k).laplacian(), p.laplacian());
  }
}

TEST(Topology, GridBox) {
  const VolumeGraph g = build_grid_volume(2, 3);
  ASSERT_EQ(g.size(), 9u);
  std::multiset<std::size_t> deg;
  for (SiteId x = 0; x < 9; ++x) deg.insert(g.degree(x));
  EXPECT_EQ(deg.count(2), 4u);
  EXPECT_EQ(deg.count(3), 4u);
  EXPECT_EQ(deg.count(4), 1u);
  EXPECT_EQ(g.degree(g.origin()), 2u);  // corner origin
  EXPECT_EQ(g.laplacian().diag(0), 4);
}

TEST(Topology, LaplacianMatchesAdjacency) {
  for (const VolumeGraph& v : {build_tree_volume(2, 3), build_grid_volume(2, 4), build_grid_volume(3, 2)}) {
    const auto dense = v.laplacian().to_dense();
    const Eigen::MatrixXd ref = oracle::dense_laplacian(v);
    for (SiteId x = 0; x < v.size(); ++x)
      for (SiteId y = 0; y < v.size(); ++y) ASSERT_EQ(static_cast<double>(dense[x][y]), ref(x, y));
    const ToppleValidation val = validate_toppling_matrix(v.laplacian());
    EXPECT_TRUE(val.ok());
    for (SiteId x : val.dissipative) EXPECT_TRUE(v.is_boundary(x));
  }
}

TEST(Topology, ValidationRejectsBadMatrices) {
  EXPECT_FALSE(validate_toppling_matrix(ToppleMatrix::from_dense({{2, -1}, {0, 2}})).symmetric_nonpositive);
  EXPECT_FALSE(validate_toppling_matrix(ToppleMatrix::from_dense({{0, 0}, {0, 1}})).diagonal_positive);
  EXPECT_FALSE(validate_toppling_matrix(ToppleMatrix::from_dense({{1, -2}, {-2, 1}})).row_sums_nonnegative);
  EXPECT_FALSE(validate_toppling_matrix(ToppleMatrix::from_dense({{1, -1}, {-1, 1}})).total_positive);
}

TEST(Topology, EnumerationIsBreadthFirst) {
  const VolumeGraph v = build_tree_volume(2, 5);
  const SiteEnumeration e = enumerate_sites(v);
  for (SiteId i = 0; i < v.size(); ++i) EXPECT_EQ(e.order[i], i);
}

TEST(Topology, RejectsBadArguments) {
  EXPECT_THROW(build_tree_volume(1, 3), PreconditionError);
  EXPECT_THROW(build_tree_volume(2, -1), PreconditionError);
  EXPECT_THROW(build_tree_volume(2, 30, 1000), ResourceError);
  EXPECT_THROW(build_grid_volume(2, 0), PreconditionError);
}
