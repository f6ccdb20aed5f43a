#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sandpile/topology.hpp"

namespace sandpile {

/// Addition-rate map phi, given symbolically by generation number so that
/// summability can be decided from the parameters alone.
///   constant(c):   phi(x) = c
///   geometric(r):  phi(x) = r^{|x|}
///   table(v):      phi(x) = v[|x|] for |x| < v.size(), 0 beyond (finite support)
class RateFunction {
 public:
  enum class Kind { constant, geometric, table };

  static RateFunction constant(double c);
  static RateFunction geometric(double r);
  static RateFunction table(std::vector<double> per_generation);

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }
  const std::vector<double>& values() const noexcept { return table_; }

  double at_generation(std::uint32_t g) const;
  double operator()(const VolumeGraph& v, SiteId x) const { return at_generation(v.generation(x)); }

  /// phi evaluated on every site of v, in site order.
  std::vector<double> on_volume(const VolumeGraph& v) const;

  std::string describe() const;

  friend bool operator==(const RateFunction&, const RateFunction&) = default;

 private:
  RateFunction(Kind k, double p, std::vector<double> t) : kind_(k), param_(p), table_(std::move(t)) {}
  Kind kind_;
  double param_;
  std::vector<double> table_;
};

}  // namespace sandpile
