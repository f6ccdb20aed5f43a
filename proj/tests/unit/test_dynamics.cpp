#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace sandpile;

namespace {

/// Partial sum of phi(x) 2^{-|x|} over a built ball.
double ball_sum(const RateFunction& phi, int n) {
  const VolumeGraph v = build_tree_volume(2, n);
  double s = 0;
  for (SiteId x = 0; x < v.size(); ++x) s += phi.at_generation(v.generation(x)) * std::ldexp(1.0, -static_cast<int>(v.generation(x)));
  return s;
}

}  // namespace

TEST(Dynamics, SummabilityGeometricMatchesPartialSums) {
  for (double r : {0.1, 0.25, 0.5, 0.8}) {
    const SummabilityReport rep = summability_check(RateFunction::geometric(r));
    ASSERT_TRUE(rep.summable);
    ASSERT_TRUE(rep.value.has_value());
    // Tail beyond generation n is (3/2) r^{n+1} / (1 - r).
    const int n = 14;
    const double tail = 1.5 * std::pow(r, n + 1) / (1 - r);
    EXPECT_NEAR(*rep.value, ball_sum(RateFunction::geometric(r), n) + tail, 1e-9) << r;
  }
}

TEST(Dynamics, SummabilityRejectsConstantAndSlowDecay) {
  const SummabilityReport c = summability_check(RateFunction::constant(1));
  EXPECT_FALSE(c.summable);
  EXPECT_FALSE(c.value.has_value());
  EXPECT_NE(c.diagnosis.find("diverge"), std::string::npos);
  // Partial sums grow linearly: each generation contributes 3/2.
  EXPECT_NEAR(ball_sum(RateFunction::constant(1), 10) - ball_sum(RateFunction::constant(1), 9), 1.5, 1e-12);
  EXPECT_FALSE(summability_check(RateFunction::geometric(1.0)).summable);
  EXPECT_FALSE(summability_check(RateFunction::geometric(1.5)).summable);
}

TEST(Dynamics, SummabilityTableIsFiniteSum) {
  const RateFunction phi = RateFunction::table({2.0, 1.0, 0.5});
  const SummabilityReport r = summability_check(phi);
  ASSERT_TRUE(r.summable);
  EXPECT_NEAR(*r.value, 2.0 + 3 * 1.0 / 2 + 6 * 0.5 / 4, 1e-12);
  EXPECT_NEAR(*r.value, ball_sum(phi, 6), 1e-12);
}

TEST(Dynamics, EventsDependOnlyOnSite) {
  const RateFunction phi = RateFunction::geometric(0.5);
  const auto small = generate_events(phi, build_tree_volume(2, 2), 3.0, 77);
  const auto big = generate_events(phi, build_tree_volume(2, 5), 3.0, 77);
  for (SiteId x = 0; x < small.sites(); ++x) EXPECT_EQ(small.times[x], big.times[x]);
}

TEST(Dynamics, EventCountsArePoisson) {
  const std::vector<double> rates(2000, 1.5);
  const auto ev = generate_events(rates, 2.0, 3);
  const double mean = static_cast<double>(ev.total()) / rates.size();
  EXPECT_NEAR(mean, 3.0, 4 * std::sqrt(3.0 / rates.size()));
  const auto m = ev.merged();
  ASSERT_EQ(m.size(), ev.total());
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i - 1].time, m[i].time);
}

TEST(Dynamics, TruncatedProductIsOrderFree) {
  const VolumeGraph v = build_tree_volume(2, 4);
  Rng rng(4);
  const HeightConfig c = sample_uniform_recurrent(v, rng, {});
  const auto ev = generate_events(RateFunction::geometric(0.4), v, 2.0, 9);
  const Stabilized a = truncated_product(c, ev, v.laplacian());
  const Stabilized b = sequential_product(c, ev.merged(), v.laplacian());
  EXPECT_EQ(a.config, b.config);
  EXPECT_EQ(a.ledger, b.ledger);
}

TEST(Dynamics, SummableWindowStabilizes) {
  std::vector<VolumeGraph> sched;
  for (int n : {2, 4, 6}) sched.push_back(build_tree_volume(2, n));
  const WindowStudy s =
      window_stabilization_study(RateFunction::geometric(0.25), 1.0, {0}, sched, 200, {}, 5, 1);
  EXPECT_EQ(s.runs, 200u);
  EXPECT_LT(s.last_step_change_fraction, 0.05);
}

TEST(Dynamics, NonSummableIsRefused) {
  std::vector<VolumeGraph> sched{build_tree_volume(2, 1), build_tree_volume(2, 2)};
  EXPECT_THROW(window_stabilization_study(RateFunction::constant(1), 1.0, {0}, sched, 2, {}, 1), RefusedError);
  DynamicsOptions o;
  o.allow_nonsummable = true;
  EXPECT_NO_THROW(window_stabilization_study(RateFunction::constant(1), 1.0, {0}, sched, 2, {}, 1, 1, o));
}

TEST(Dynamics, ScheduleMustBeNested) {
  std::vector<VolumeGraph> sched{build_tree_volume(2, 3), build_tree_volume(2, 2)};
  const HeightConfig c = HeightConfig::maximal(sched.back().laplacian());
  EXPECT_THROW(stabilized_window_run(c, RateFunction::geometric(0.25), 1.0, {0}, sched, 1), PreconditionError);
}

TEST(Dynamics, MonotoneCoupling) {
  std::vector<VolumeGraph> sched;
  for (int n : {2, 3, 4}) sched.push_back(build_tree_volume(2, n));
  const MonotoneStudy s = monotone_coupling_study(RateFunction::geometric(0.5), 1.0, {0}, sched, 100, {}, 2);
  EXPECT_EQ(s.violations, 0u);
}

TEST(Dynamics, TopplingBoundAndExactMean) {
  const VolumeGraph v = build_tree_volume(2, 3);
  const RateFunction phi = RateFunction::geometric(0.25);
  const TopplingBoundReport r = toppling_bound_check(phi, 1.0, 4000, v, {}, 3);
  // Oracle: t sum_x phi(x) G(x, 0) from a dense inverse.
  const Eigen::MatrixXd g = oracle::dense_laplacian(v).inverse();
  double ex = 0, bound = 0;
  for (SiteId x = 0; x < v.size(); ++x) {
    const double p = phi.at_generation(v.generation(x));
    ex += p * g(x, 0);
    bound += p * ((x == 0) + 3 * g(0, x));
  }
  EXPECT_NEAR(r.exact_mean, ex, 1e-12);
  EXPECT_NEAR(r.bound, bound, 1e-12);
  EXPECT_NEAR(r.empirical.mean, ex, 4 * r.empirical.std_error);
  EXPECT_TRUE(r.holds());
}
