#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace sandpile;

namespace {

std::vector<Height> random_heights(std::size_t n, Height hi, std::mt19937_64& rng) {
  std::vector<Height> h(n);
  for (auto& x : h) x = std::uniform_int_distribution<Height>(0, hi)(rng);
  return h;
}

}  // namespace

TEST(Engine, StarTopplesOnce) {
  const VolumeGraph v = build_tree_volume(2, 1);
  const Stabilized s = stabilize(HeightConfig({4, 1, 1, 1}), v.laplacian());
  EXPECT_EQ(s.config.vec(), (std::vector<Height>{1, 2, 2, 2}));
  EXPECT_EQ(s.ledger.counts, (std::vector<ToppleCount>{1, 0, 0, 0}));
}

TEST(Engine, TwoSitesAddToMaximal) {
  const VolumeGraph v = build_tree_prefix(2, 2);
  const Stabilized s = add_grain(HeightConfig({3, 3}), 0, v.laplacian());
  // 4,3 -> 1,4 -> 2,1
  EXPECT_EQ(s.config.vec(), (std::vector<Height>{2, 1}));
  EXPECT_EQ(s.ledger.counts, (std::vector<ToppleCount>{1, 1}));
}

TEST(Engine, AbelianAgainstRandomOrder) {
  std::mt19937_64 rng(11);
  for (const VolumeGraph& v : {build_tree_volume(2, 3), build_grid_volume(2, 5), build_tree_prefix(3, 17)}) {
    for (int rep = 0; rep < 30; ++rep) {
      const auto h = random_heights(v.size(), 12, rng);
      const Stabilized s = stabilize(HeightConfig(h), v.laplacian());
      const auto [ref, counts] = oracle::random_order_stabilize(v, h, rng);
      ASSERT_EQ(s.config.vec(), ref);
      ASSERT_EQ(s.ledger.counts, counts);
      EXPECT_TRUE(is_stable(s.config, v.laplacian()));
    }
  }
}

TEST(Engine, GrainBalance) {
  // Grains lost = sum over boundary of topplings times missing neighbors.
  std::mt19937_64 rng(5);
  const VolumeGraph v = build_tree_volume(2, 4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto h = random_heights(v.size(), 9, rng);
    const Stabilized s = stabilize(HeightConfig(h), v.laplacian());
    Height before = 0, after = 0, lost = 0;
    for (SiteId x = 0; x < v.size(); ++x) {
      before += h[x];
      after += s.config[x];
      lost += static_cast<Height>(s.ledger.counts[x]) * (v.full_degree() - static_cast<Height>(v.degree(x)));
    }
    EXPECT_EQ(before - after, lost);
  }
}

TEST(Engine, StabilizerMatchesFreeFunctions) {
  std::mt19937_64 rng(9);
  const VolumeGraph v = build_tree_volume(2, 3);
  Stabilizer st(v.laplacian());
  HeightConfig c = HeightConfig::maximal(v.laplacian());
  for (int step = 0; step < 500; ++step) {
    const SiteId x = static_cast<SiteId>(uniform_below(rng, v.size()));
    const Stabilized ref = add_grain(c, x, v.laplacian());
    std::vector<ToppleCount> counts(v.size(), 0);
    st.add_and_relax(c.heights(), x, counts);
    ASSERT_EQ(c, ref.config);
    ASSERT_EQ(counts, ref.ledger.counts);
  }
}

TEST(Engine, ToppleSiteIsLocal) {
  const VolumeGraph v = build_tree_volume(2, 1);
  const HeightConfig c({5, 1, 1, 1});
  EXPECT_EQ(topple_site(c, 0, v.laplacian()).vec(), (std::vector<Height>{2, 2, 2, 2}));
  EXPECT_EQ(topple_site(c, 1, v.laplacian()), c);
}

TEST(Engine, DominationPreservedByAddition) {
  std::mt19937_64 rng(3);
  const VolumeGraph v = build_tree_volume(2, 3);
  const ToppleMatrix& m = v.laplacian();
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Height> lo = random_heights(v.size(), 3, rng), hi = lo;
    for (auto& h : lo) h = std::max<Height>(1, h);
    for (std::size_t i = 0; i < hi.size(); ++i) hi[i] = std::max<Height>(lo[i], std::uniform_int_distribution<Height>(1, 3)(rng));
    const SiteId x = static_cast<SiteId>(uniform_below(rng, v.size()));
    const Stabilized a = add_grain(HeightConfig(lo), x, m), b = add_grain(HeightConfig(hi), x, m);
    EXPECT_TRUE(a.ledger.dominated_by(b.ledger));
  }
}

TEST(Engine, ProbabilityVectors) {
  const std::vector<double> ok{0.5, 0.5}, zero{1.0, 0.0}, bad{0.7, 0.7};
  EXPECT_NO_THROW(check_probability_vector(ok, 2, false));
  EXPECT_THROW(check_probability_vector(zero, 2, false), PreconditionError);
  EXPECT_NO_THROW(check_probability_vector(zero, 2, true));
  EXPECT_THROW(check_probability_vector(bad, 2, false), PreconditionError);
  EXPECT_THROW(check_probability_vector(ok, 3, false), PreconditionError);
}

TEST(Engine, ContinuousRunIsReproducible) {
  const VolumeGraph v = build_tree_volume(2, 3);
  const HeightConfig c = HeightConfig::maximal(v.laplacian());
  Rng a(42), b(42);
  const auto ra = continuous_run(c, RateFunction::geometric(0.25), 2.0, v, a);
  const auto rb = continuous_run(c, RateFunction::geometric(0.25), 2.0, v, b);
  EXPECT_EQ(ra.events, rb.events);
  EXPECT_EQ(ra.config, rb.config);
  for (std::size_t i = 1; i < ra.events.size(); ++i) EXPECT_LE(ra.events[i - 1].time, ra.events[i].time);
}

TEST(Engine, ExponentialMean) {
  Rng rng(1);
  double s = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) s += exponential(rng, 2.0);
  EXPECT_NEAR(s / n, 0.5, 4 * 0.5 / std::sqrt(n));
}
