#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace sandpile;

namespace {

SamplerOptions with(SamplerKind k) {
  SamplerOptions o;
  o.kind = k;
  return o;
}

}  // namespace

TEST(Observables, ClusterOfMaximalSites) {
  const VolumeGraph v = build_tree_volume(2, 2);
  HeightConfig c = HeightConfig::constant(v.size(), 2);
  c[0] = 3;
  c[1] = 3;
  c[v.neighbors(1).back()] = 3;  // a child of site 1, on the boundary
  const ClusterResult r = cluster3(c, 0, v);
  EXPECT_EQ(r.size(), 3u);
  EXPECT_TRUE(r.touched_boundary);
  c[0] = 2;
  EXPECT_EQ(cluster3(c, 0, v).size(), 0u);
}

TEST(Observables, AvalancheEqualsCluster) {
  const VolumeGraph v = build_tree_volume(2, 4);
  const auto r = avalanche_equals_cluster_check(v, 0, 20000, with(SamplerKind::tree_exact), 3);
  EXPECT_TRUE(r.ok());
  EXPECT_GT(r.maximal_at_site, 0u);
}

TEST(Observables, GreensIsInverse) {
  for (const VolumeGraph& v : {build_tree_volume(2, 3), build_grid_volume(2, 4)}) {
    const Eigen::MatrixXd g = greens_exact(v);
    const Eigen::MatrixXd ref = oracle::dense_laplacian(v).inverse();
    EXPECT_LT((g - ref).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(greens_identity_residual(v.laplacian(), g), 1e-10);
    EXPECT_LT((greens_column(v.laplacian(), 3) - ref.col(3)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Observables, ToppingsMatchGreens) {
  const VolumeGraph v = build_tree_volume(2, 2);
  const Eigen::MatrixXd g = greens_exact(v);
  const std::vector<SiteId> ys{0, 1, 4, 9};
  const auto est = expected_topplings_mc(v, 0, ys, 100000, with(SamplerKind::tree_exact), 21);
  for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_NEAR(est[i].mean, g(0, ys[i]), 4 * est[i].std_error) << ys[i];
}

TEST(Observables, GreensDecayOnSymmetricBall) {
  const GreensDecayReport r = greens_decay_check(2, {6, 8});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_TRUE(r.monotone_in_volume);
  for (const auto& row : r.rows) EXPECT_LT(row.symmetry_spread, 1e-12);
  EXPECT_LT(r.rows[1].variation, r.rows[0].variation);
}

TEST(Observables, TailFitRecoversKnownExponent) {
  // Draws from P(K >= k) = k^{-1/2}, so P(K = k) ~ k^{-3/2}.
  ClusterHistogram h;
  Rng rng(7);
  for (int i = 0; i < 400000; ++i) {
    const double u = 1.0 - uniform01(rng);
    const double k = std::floor(1.0 / (u * u));
    if (k > 1e6) {
      h.add(1'000'000, true);
    } else {
      h.add(static_cast<std::uint64_t>(k), false);
    }
  }
  const TailFit f = fit_tail(h);
  EXPECT_TRUE(f.reliable);
  EXPECT_NEAR(f.exponent, 1.5, 0.05);
}

TEST(Observables, HistogramCsvAndMerge) {
  ClusterHistogram a, b;
  a.add(1, false);
  a.add(2, true);
  b.add(1, false);
  b.add(0, false);
  a.merge(b);
  EXPECT_EQ(a.samples, 4u);
  EXPECT_EQ(a.empty, 1u);
  EXPECT_EQ(a.censored_total(), 1u);
  EXPECT_EQ(a.to_csv(), "size,count,censored_count\n1,2,0\n2,0,1\n");
}

TEST(Observables, LazyBallSamplerMatchesMaterializedBall) {
  const int n = 4;
  const VolumeGraph v = build_tree_volume(2, n);
  const std::uint64_t draws = 200000;
  const ClusterHistogram lazy = cluster_size_distribution(BallClusterSampler(2, n), draws, 1);
  const ClusterHistogram full = cluster_size_distribution(v, draws, with(SamplerKind::tree_exact), 2);
  auto p = [&](const ClusterHistogram& h, std::uint64_t k) {
    std::uint64_t c = 0;
    if (auto it = h.counts.find(k); it != h.counts.end()) c += it->second;
    if (auto it = h.censored.find(k); it != h.censored.end()) c += it->second;
    return static_cast<double>(c) / h.samples;
  };
  const double tol = 4 * std::sqrt(0.25 / draws) * std::sqrt(2.0);
  EXPECT_NEAR(static_cast<double>(lazy.empty) / draws, static_cast<double>(full.empty) / draws, tol);
  for (std::uint64_t k = 1; k <= 6; ++k) EXPECT_NEAR(p(lazy, k), p(full, k), tol) << k;
  EXPECT_NEAR(static_cast<double>(lazy.censored_total()) / draws, static_cast<double>(full.censored_total()) / draws,
              tol);
}

TEST(Observables, OriginMaximalProbability) {
  // P(eta(0) = 3) on the radius-n ball, exact from enumeration of the star.
  const double star = expectation_exact(LocalObservable::indicator_height(0, 3), build_tree_volume(2, 1)).mean;
  ClusterHistogram h = cluster_size_distribution(BallClusterSampler(2, 1), 200000, 5);
  EXPECT_NEAR(1.0 - static_cast<double>(h.empty) / h.samples, star, 4 * std::sqrt(0.25 / 200000));
}

TEST(Observables, TransferMatrixGammaOne) {
  const TransferMatrixReport r = transfer_matrix_bound({1.0});
  EXPECT_DOUBLE_EQ(r.product(0, 0), 2);
  EXPECT_DOUBLE_EQ(r.product(0, 1), 2);
  EXPECT_DOUBLE_EQ(r.product(1, 0), 1);
  EXPECT_DOUBLE_EQ(r.product(1, 1), 3);
  EXPECT_NEAR(r.lambda_max, 4, 1e-12);
  EXPECT_NEAR(r.lambda_min, 1, 1e-12);
  EXPECT_DOUBLE_EQ(r.det_over_tr2, 4.0 / 25.0);
  EXPECT_TRUE(r.holds);
}

TEST(Observables, TransferMatrixZeroGamma) {
  // gamma = 0: M = ((1,1),(1,2)), det 1, trace 3, so det/tr^2 = 1/9 <= 4/9.
  const TransferMatrixReport r = transfer_matrix_bound({0.0});
  EXPECT_DOUBLE_EQ(r.determinant, 1);
  EXPECT_DOUBLE_EQ(r.trace, 3);
  EXPECT_TRUE(r.holds);
  EXPECT_THROW(transfer_matrix_bound({1.5}), PreconditionError);
}

TEST(Observables, TruncatedCorrelationOfIndependentSitesVanishes) {
  // Sites in different branches far apart on a tree are nearly independent;
  // the covariance of a variable with a constant is exactly zero.
  const VolumeGraph v = build_tree_volume(2, 3);
  const auto e = truncated_correlation(LocalObservable::height_at(0), LocalObservable::constant(1), v, 5000,
                                       with(SamplerKind::tree_exact), 2);
  EXPECT_NEAR(e.mean, 0, 1e-12);
}
