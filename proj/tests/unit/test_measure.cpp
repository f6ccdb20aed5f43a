#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"

using namespace sandpile;

namespace {

SamplerOptions with(SamplerKind k) {
  SamplerOptions o;
  o.kind = k;
  return o;
}

/// Pearson chi-square of draws against uniform on the enumerated set.
double chi_square_uniform(const VolumeGraph& v, SamplerKind kind, std::uint64_t n, std::uint64_t seed,
                          std::size_t& dof) {
  const auto all = enumerate_recurrent(v);
  std::map<std::vector<Height>, std::uint64_t> freq;
  for (const auto& c : all) freq[c.vec()] = 0;
  const RecurrentSampler s(v, with(kind));
  auto st = s.stream(seed);
  for (std::uint64_t i = 0; i < n; ++i) {
    auto it = freq.find(st.next().vec());
    if (it == freq.end()) return 1e300;
    ++it->second;
  }
  const double e = static_cast<double>(n) / all.size();
  double chi = 0;
  for (auto& [k, f] : freq) chi += (f - e) * (f - e) / e;
  dof = all.size() - 1;
  return chi;
}

}  // namespace

TEST(Measure, SamplerKindStrings) {
  for (SamplerKind k : {SamplerKind::enumeration, SamplerKind::mcmc, SamplerKind::tree_exact})
    EXPECT_EQ(sampler_kind_from_string(to_string(k)), k);
  EXPECT_THROW(sampler_kind_from_string("gibbs"), PreconditionError);
}

TEST(Measure, TwoSiteHeightThreeIsThreeEighths) {
  const VolumeGraph v = build_tree_prefix(2, 2);
  // Oracle: count by hand over the eight recurrent configurations.
  int hits = 0, total = 0;
  for (const auto& h : oracle::brute_recurrent(v)) {
    ++total;
    hits += h[0] == 3;
  }
  ASSERT_EQ(total, 8);
  ASSERT_EQ(hits, 3);
  const EmpiricalEstimate e = expectation_exact(LocalObservable::indicator_height(0, 3), v);
  EXPECT_DOUBLE_EQ(e.mean, 3.0 / 8.0);
  EXPECT_EQ(e.std_error, 0);
  EXPECT_EQ(e.method, EstimateMethod::exact);
}

TEST(Measure, SamplersAreUniform) {
  // 99.9% chi-square quantile is below dof + 4.5 sqrt(dof) for these sizes.
  for (const VolumeGraph& v : {build_tree_volume(2, 1), build_tree_prefix(2, 6)}) {
    for (SamplerKind k : {SamplerKind::enumeration, SamplerKind::mcmc, SamplerKind::tree_exact}) {
      std::size_t dof = 0;
      const double chi = chi_square_uniform(v, k, 40000, 17, dof);
      EXPECT_LT(chi, dof + 4.5 * std::sqrt(2.0 * dof)) << to_string(k) << " " << v.describe();
    }
  }
}

TEST(Measure, UniformityReport) {
  const VolumeGraph v = build_tree_volume(2, 1);
  const UniformityReport r = uniformity_check(v, 20000, with(SamplerKind::tree_exact), 3);
  EXPECT_EQ(r.recurrent, 54u);
  EXPECT_EQ(r.non_recurrent_draws, 0u);
  EXPECT_LT(r.total_variation, 0.05);
}

TEST(Measure, TreeExactDrawsAreRecurrentOnLargeBall) {
  const VolumeGraph v = build_tree_volume(2, 8);
  const RecurrentSampler s(v, with(SamplerKind::tree_exact));
  auto st = s.stream(8);
  for (int i = 0; i < 50; ++i) ASSERT_TRUE(is_recurrent(st.next(), v));
}

TEST(Measure, TreeExactMatchesEnumerationMarginals) {
  // Origin and leaf height laws on a 3-generation ball against an exact
  // enumeration of the 10-site prefix pair (T_10 contains all of generation 1
  // and part of generation 2).
  const VolumeGraph v = build_tree_prefix(2, 10);
  for (Height h = 1; h <= 3; ++h) {
    const double ex = expectation_exact(LocalObservable::indicator_height(0, h), v).mean;
    const EmpiricalEstimate mc =
        expectation(LocalObservable::indicator_height(0, h), v, 200000, with(SamplerKind::tree_exact), 4 + h);
    EXPECT_NEAR(mc.mean, ex, 4 * mc.std_error) << h;
    EXPECT_EQ(mc.method, EstimateMethod::iid_tree);
  }
}

TEST(Measure, ThreadCountDoesNotChangeResults) {
  const VolumeGraph v = build_tree_volume(2, 4);
  for (SamplerKind k : {SamplerKind::mcmc, SamplerKind::tree_exact}) {
    const auto a = expectation(LocalObservable::height_at(0), v, 20000, with(k), 99, 1);
    const auto b = expectation(LocalObservable::height_at(0), v, 20000, with(k), 99, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
  }
}

TEST(Measure, ConstantObservableHasZeroError) {
  const VolumeGraph v = build_tree_volume(2, 3);
  const auto e = expectation(LocalObservable::constant(2.5), v, 5000, with(SamplerKind::mcmc), 1);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_EQ(e.std_error, 0);
}

TEST(Measure, MergeMomentsPooled) {
  // Chunks {1,2} and {3}: mean 2, sample variance 1.
  const auto e = merge_moments({{3, 5, 2}, {3, 9, 1}}, EstimateMethod::iid_tree);
  EXPECT_DOUBLE_EQ(e.mean, 2.0);
  EXPECT_NEAR(e.std_error, std::sqrt(1.0 / 3.0), 1e-12);
  EXPECT_EQ(e.n_samples, 3u);
}

TEST(Measure, RejectsBadOptions) {
  const VolumeGraph v = build_tree_volume(2, 2);
  SamplerOptions o;
  o.thinning = 0;
  EXPECT_THROW(RecurrentSampler(v, o), PreconditionError);
  EXPECT_THROW(RecurrentSampler(build_tree_volume(2, 3), with(SamplerKind::enumeration)), ResourceError);
  EXPECT_THROW(RecurrentSampler(build_grid_volume(2, 3), with(SamplerKind::tree_exact)), PreconditionError);
}

TEST(Measure, BoundaryIdentityExactOnEnumerablePairs) {
  for (std::size_t k = 2; k <= 10; ++k) {
    const VolumeGraph big = build_tree_prefix(2, k);
    if (!big.is_boundary(static_cast<SiteId>(k - 1))) continue;
    const BoundaryIdentityReport r = boundary_height3_identity(big, 0, with(SamplerKind::enumeration), 1);
    ASSERT_TRUE(r.enumeration_matches.has_value());
    EXPECT_TRUE(*r.enumeration_matches) << k;
    // Oracle: ratio of brute-force counts.
    const double small = static_cast<double>(oracle::brute_recurrent(build_tree_prefix(2, k - 1)).size());
    const double large = static_cast<double>(enumerate_recurrent(big).size());
    EXPECT_NEAR(r.exact_value, small / large, 1e-15);
  }
}

TEST(Measure, CauchyDifferencesShrink) {
  std::vector<VolumeGraph> sched;
  for (int n = 1; n <= 4; ++n) sched.push_back(build_tree_volume(2, n));
  const CauchyNetReport r =
      cauchy_net_diagnostic(LocalObservable::height_at(0), sched, 40000, with(SamplerKind::tree_exact), 12);
  ASSERT_EQ(r.differences.size(), 3u);
  EXPECT_TRUE(r.decreasing);
}

TEST(Measure, ChainVisitsExactlyAllowedStates) {
  const ChainVisitReport r = chain_visit_check(build_tree_prefix(2, 3), 1000, 100000, 5);
  EXPECT_EQ(r.allowed_states, 21u);
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.first_state_forbidden);
}
