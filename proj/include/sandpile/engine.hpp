#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sandpile/common.hpp"
#include "sandpile/rate_function.hpp"
#include "sandpile/topology.hpp"

namespace sandpile {

/// Heights per site, in site-id order. Stable iff heights(x) <= Delta_xx.
class HeightConfig {
 public:
  HeightConfig() = default;
  explicit HeightConfig(std::vector<Height> h) : h_(std::move(h)) {}
  static HeightConfig constant(std::size_t n, Height value) { return HeightConfig(std::vector<Height>(n, value)); }
  /// eta_max(x) = Delta_xx.
  static HeightConfig maximal(const ToppleMatrix& m);

  std::size_t size() const noexcept { return h_.size(); }
  Height operator[](SiteId x) const { return h_[x]; }
  Height& operator[](SiteId x) { return h_[x]; }
  std::span<const Height> heights() const noexcept { return h_; }
  std::span<Height> heights() noexcept { return h_; }
  const std::vector<Height>& vec() const noexcept { return h_; }

  /// Componentwise <=.
  bool dominated_by(const HeightConfig& other) const;

  friend bool operator==(const HeightConfig&, const HeightConfig&) = default;
  friend auto operator<=>(const HeightConfig&, const HeightConfig&) = default;

 private:
  std::vector<Height> h_;
};

/// Number of topplings per site during one operation.
struct ToppleLedger {
  std::vector<ToppleCount> counts;

  ToppleLedger() = default;
  explicit ToppleLedger(std::size_t n) : counts(n, 0) {}

  ToppleCount total() const;
  bool is_zero() const;
  /// Sites that toppled at least once, ascending.
  std::vector<SiteId> support() const;
  bool dominated_by(const ToppleLedger& other) const;

  friend bool operator==(const ToppleLedger&, const ToppleLedger&) = default;
};

inline constexpr ToppleCount kToppleBudget = 1'000'000'000'000ULL;

bool is_stable(const HeightConfig& c, const ToppleMatrix& m);

/// One application of the toppling rule at x; unchanged unless x is unstable.
HeightConfig topple_site(const HeightConfig& c, SiteId x, const ToppleMatrix& m);

/// Work-queue relaxation with reusable buffers. Holds a reference to the
/// matrix, which must outlive it. Not thread-safe; use one per replica.
///
/// A popped site with height h topples floor((h - 1) / Delta_xx) times in
/// one go, which is the number it needs to become stable on its own.
class Stabilizer {
 public:
  explicit Stabilizer(const ToppleMatrix& m, ToppleCount budget = kToppleBudget);

  /// Relaxes `heights` in place. Adds per-site toppling counts into `counts`
  /// when it is non-empty. Returns the number of topplings performed.
  ToppleCount relax(std::span<Height> heights, std::span<ToppleCount> counts = {});

  /// Adds `grains` at x to a stable configuration and relaxes.
  ToppleCount add_and_relax(std::span<Height> heights, SiteId x, std::span<ToppleCount> counts = {},
                            Height grains = 1);

  const ToppleMatrix& matrix() const noexcept { return m_; }

 private:
  void push(SiteId x);
  ToppleCount drain(std::span<Height> heights, std::span<ToppleCount> counts);

  const ToppleMatrix& m_;
  ToppleCount budget_;
  std::vector<SiteId> queue_;
  std::vector<char> queued_;
};

struct Stabilized {
  HeightConfig config;
  ToppleLedger ledger;
};

/// Toppling transformation: the stable configuration reached from c together
/// with the toppling counts. Throws StabilizationError past the budget.
Stabilized stabilize(HeightConfig c, const ToppleMatrix& m);

/// a_x: add one grain at x to a stable configuration and stabilize.
Stabilized add_grain(const HeightConfig& c, SiteId x, const ToppleMatrix& m);

/// Checks p is a probability vector over the sites. Degenerate vectors (zero
/// entries) are accepted only when `allow_degenerate` is set.
void check_probability_vector(std::span<const double> p, std::size_t n, bool allow_degenerate);

/// Draws a site from p by inversion. p must be a valid probability vector.
SiteId draw_site(std::span<const double> p, Rng& rng);

/// One step of the addition chain: draw x ~ p and apply a_x.
HeightConfig discrete_step(const HeightConfig& c, std::span<const double> p, const ToppleMatrix& m, Rng& rng,
                           bool allow_degenerate = false);

struct AdditionEvent {
  double time;
  SiteId site;
  friend bool operator==(const AdditionEvent&, const AdditionEvent&) = default;
};

struct ContinuousRun {
  std::vector<AdditionEvent> events;
  HeightConfig config;
  ToppleLedger ledger;
};

/// Pure-jump process with addition rate `rates[x]` at x over [0, t].
/// Events come from the superposition: exponential gaps at the total rate,
/// each site drawn proportionally to its rate.
ContinuousRun continuous_run(const HeightConfig& c, std::span<const double> rates, double t,
                             const ToppleMatrix& m, Rng& rng);

ContinuousRun continuous_run(const HeightConfig& c, const RateFunction& phi, double t, const VolumeGraph& v,
                             Rng& rng);

/// Exponential variate with the given rate from uniform01 (portable).
double exponential(Rng& rng, double rate);

}  // namespace sandpile
