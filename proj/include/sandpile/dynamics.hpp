#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sandpile/engine.hpp"
#include "sandpile/measure.hpp"
#include "sandpile/rate_function.hpp"

namespace sandpile {

/// sum_x phi(x) 2^{-|x|} on the rootless (d+1)-regular tree, with
/// generation sizes 1 and (d+1) d^{k-1}.
struct SummabilityReport {
  bool summable = false;
  std::optional<double> value;
  bool closed_form = false;  // true for the geometric-series cases
  std::string diagnosis;

  nlohmann::json to_json() const;
};

SummabilityReport summability_check(const RateFunction& phi, int d = 2);

/// Independent Poisson clocks per site on [0, t]. Site x's clock is driven
/// by its own stream derive_seed(seed, x), so the events of a site do not
/// depend on which volume contains it.
struct PoissonEventLog {
  double t = 0;
  std::vector<std::vector<double>> times;  // per site, increasing

  std::size_t sites() const noexcept { return times.size(); }
  std::uint64_t count(SiteId x) const { return times[x].size(); }
  std::uint64_t total() const;
  /// All events merged in time order (ties by site id).
  std::vector<AdditionEvent> merged() const;
};

PoissonEventLog generate_events(const RateFunction& phi, const VolumeGraph& v, double t, std::uint64_t seed);
PoissonEventLog generate_events(std::span<const double> rates, double t, std::uint64_t seed);

/// prod_x a_x^{N^{t,x}} eta: all grains added, then one stabilization.
Stabilized truncated_product(const HeightConfig& c, const PoissonEventLog& events, const ToppleMatrix& m);

/// The same product applied one event at a time in the order given.
Stabilized sequential_product(const HeightConfig& c, const std::vector<AdditionEvent>& events, const ToppleMatrix& m);

/// Window values after coupled truncations on nested volumes (the schedule
/// must be prefixes of one enumeration, as nested tree balls are).
struct WindowRun {
  std::vector<std::vector<Height>> snapshots;  // per volume, window heights
  std::vector<ToppleCount> origin_topplings;   // per volume
  std::optional<std::size_t> stabilized_at;    // first k with snapshots k..k+s equal
  bool changed_at_last_step = false;
  std::vector<Height> final_window;

  nlohmann::json to_json() const;
};

struct DynamicsOptions {
  bool allow_nonsummable = false;
};

/// Coupled truncations from eta (on the largest volume, restricted to each
/// V_k). Stabilization is declared after two successive unchanged
/// comparisons, or one if the schedule has only two volumes.
WindowRun stabilized_window_run(const HeightConfig& eta, const RateFunction& phi, double t,
                                const std::vector<SiteId>& window, const std::vector<VolumeGraph>& schedule,
                                std::uint64_t seed, const DynamicsOptions& opts = {});

/// Aggregate of stabilized_window_run over independent runs, each with a
/// stationary start on the largest volume.
struct WindowStudy {
  std::uint64_t runs = 0;
  std::vector<double> change_fraction;  // per step k -> k+1
  double last_step_change_fraction = 0;
  std::uint64_t unconverged = 0;
  std::vector<std::uint64_t> origin_histogram;  // final origin heights 1..Delta_00

  nlohmann::json to_json() const;
};

WindowStudy window_stabilization_study(const RateFunction& phi, double t, const std::vector<SiteId>& window,
                                       const std::vector<VolumeGraph>& schedule, std::uint64_t n_runs,
                                       const SamplerOptions& initial, std::uint64_t seed, unsigned threads = 1,
                                       const DynamicsOptions& opts = {});

/// Topplings at the origin over [0, t] from stationary starts, against
/// t sum_x phi(x) (delta_{0x} + 3 G_V(0, x)). The exact stationary mean
/// t sum_x phi(x) G_V(x, 0) is reported as well.
struct TopplingBoundReport {
  std::uint64_t runs = 0;
  double t = 0;
  EmpiricalEstimate empirical;
  double exact_mean = 0;
  double bound = 0;
  double z_exact = 0;

  bool holds(double z = 3.0) const noexcept { return empirical.mean <= bound + z * empirical.std_error; }
  nlohmann::json to_json() const;
};

TopplingBoundReport toppling_bound_check(const RateFunction& phi, double t, std::uint64_t n_runs,
                                         const VolumeGraph& v, const SamplerOptions& initial, std::uint64_t seed,
                                         unsigned threads = 1, const DynamicsOptions& opts = {});

/// Coupled runs from eta' and from a stationary partner eta >= eta' with the
/// same events, on every volume of the schedule. Checks ledger(eta') <=
/// ledger(eta) site by site.
struct MonotoneRun {
  WindowRun from_lower;
  WindowRun from_stationary;
  std::uint64_t violations = 0;  // (volume, site) pairs with a larger count from eta'

  nlohmann::json to_json() const;
};

MonotoneRun monotone_start_run(const HeightConfig& eta_lower, const HeightConfig& eta_stationary,
                               const RateFunction& phi, double t, const std::vector<SiteId>& window,
                               const std::vector<VolumeGraph>& schedule, std::uint64_t seed,
                               const DynamicsOptions& opts = {});

struct MonotoneStudy {
  std::uint64_t runs = 0;
  std::uint64_t violations = 0;
  std::uint64_t runs_with_violation = 0;
  std::vector<std::uint64_t> lower_origin_histogram;       // final origin heights from eta'
  std::vector<std::uint64_t> stationary_origin_histogram;  // final origin heights from eta

  nlohmann::json to_json() const;
};

/// monotone_start_run over independent runs with eta' = 1.
MonotoneStudy monotone_coupling_study(const RateFunction& phi, double t, const std::vector<SiteId>& window,
                                      const std::vector<VolumeGraph>& schedule, std::uint64_t n_runs,
                                      const SamplerOptions& initial, std::uint64_t seed, unsigned threads = 1,
                                      const DynamicsOptions& opts = {});

}  // namespace sandpile
