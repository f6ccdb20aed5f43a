#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sandpile/engine.hpp"
#include "sandpile/recurrence.hpp"
#include "sandpile/topology.hpp"

namespace sandpile {

enum class SamplerKind {
  enumeration,  // exact uniform draw from the enumerated R_V
  mcmc,         // uniform-addition chain from eta_max
  tree_exact,   // exact uniform draw on tree volumes by branch recursion
};

std::string to_string(SamplerKind k);
SamplerKind sampler_kind_from_string(const std::string& s);

struct SamplerOptions {
  SamplerKind kind = SamplerKind::mcmc;
  std::optional<std::uint64_t> burn_in;   // lazy chain steps before the first draw; default 10 |V|
  std::optional<std::uint64_t> thinning;  // lazy chain steps between draws; default |V|
  std::size_t enumeration_cap = kDefaultEnumerationCap;
};

/// Exact uniform sampler on R_V for tree volumes.
///
/// Root the volume at the origin. A branch (a site with its descendants)
/// burns either on its own ("strong": eta(v) >= w + 2 and no child branch
/// forbidden, w = number of weak children) or only once the parent has
/// burned ("weak": eta(v) = w + 1). With S_v, W_v the numbers of strong and
/// weak branch configurations, rho_v = W_v / S_v satisfies
///   1 / rho_v = (D - 1 - c_v) + sum_j 1 / (1 + rho_j)
/// over the c_v children j, and |R_V| = prod_j (S_j + W_j) * [(D - c_0) +
/// sum_j 1 / (1 + rho_j)] at the origin. Sampling goes top-down: each
/// branch status is drawn given its parent's, then the height given the
/// children's statuses.
class TreeBranchLaw {
 public:
  explicit TreeBranchLaw(const VolumeGraph& v);

  std::size_t size() const noexcept { return parent_.size(); }
  double rho(SiteId x) const { return rho_[x]; }
  std::span<const SiteId> children(SiteId x) const {
    return {kids_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
  }
  SiteId parent(SiteId x) const { return parent_[x]; }

  /// Draws a full configuration; `status` is caller-owned scratch.
  void sample(std::span<Height> out, std::vector<int>& status, Rng& rng) const;

  /// Draws statuses (true = weak) of the children of x given x's own
  /// status, returning the number of weak children. `x_status` is 0 for
  /// the origin, 1 for strong, 2 for weak.
  std::size_t draw_children(SiteId x, int x_status, std::vector<char>& weak, Rng& rng) const;
  Height draw_height(SiteId x, int x_status, std::size_t weak_children, Rng& rng) const;

 private:
  Height d_max_;
  std::vector<SiteId> parent_;
  std::vector<std::size_t> offsets_;
  std::vector<SiteId> kids_;
  std::vector<double> rho_;
  std::vector<double> slack_;    // (D - 1 - c) or (D - c) at the origin
  std::vector<double> total_;    // slack + sum_j 1 / (1 + rho_j)
  std::vector<double> weak_p_;   // per child slot: rho / (1 + rho)
  std::vector<double> force_w_;  // per child slot: 1 / (1 + rho)
};

class SamplerStream;

/// Immutable sampler state shared across streams: the volume, resolved
/// options and any precomputed tables.
class RecurrentSampler {
 public:
  explicit RecurrentSampler(const VolumeGraph& v, SamplerOptions opts = {});

  const VolumeGraph& volume() const noexcept { return *v_; }
  SamplerKind kind() const noexcept { return opts_.kind; }
  std::uint64_t burn_in() const noexcept { return *opts_.burn_in; }
  std::uint64_t thinning() const noexcept { return *opts_.thinning; }

  SamplerStream stream(std::uint64_t seed) const;

 private:
  friend class SamplerStream;
  const VolumeGraph* v_;
  SamplerOptions opts_;
  std::shared_ptr<const std::vector<HeightConfig>> recurrent_;
  std::shared_ptr<const TreeBranchLaw> tree_;
};

/// One replica: owns its RNG and, for mcmc, the chain state.
class SamplerStream {
 public:
  /// The next sample. The reference stays valid until the next call.
  const HeightConfig& next();
  Rng& rng() noexcept { return rng_; }

 private:
  friend class RecurrentSampler;
  SamplerStream(const RecurrentSampler& s, std::uint64_t seed);
  void chain_steps(std::uint64_t n);

  const RecurrentSampler* s_;
  Rng rng_;
  HeightConfig state_;
  std::unique_ptr<Stabilizer> stab_;
  std::vector<int> scratch_;
  bool started_ = false;
};

/// One draw with a fresh stream derived from rng.
HeightConfig sample_uniform_recurrent(const VolumeGraph& v, Rng& rng, const SamplerOptions& opts = {});

/// A function of finitely many heights.
struct LocalObservable {
  std::string name;
  std::vector<SiteId> support;
  std::function<double(const HeightConfig&)> eval;

  static LocalObservable height_at(SiteId x);
  static LocalObservable indicator_height(SiteId x, Height h);
  static LocalObservable constant(double c);
};

enum class EstimateMethod { exact, mcmc, iid_enumeration, iid_tree };
std::string to_string(EstimateMethod m);
EstimateMethod estimate_method(SamplerKind k);

struct EmpiricalEstimate {
  double mean = 0;
  double std_error = 0;  // 0 for exact averages
  std::uint64_t n_samples = 0;
  EstimateMethod method = EstimateMethod::exact;

  nlohmann::json to_json() const;
};

/// Exact mean over R_V by enumeration.
EmpiricalEstimate expectation_exact(const LocalObservable& f, const VolumeGraph& v,
                                    std::size_t cap = kDefaultEnumerationCap);

/// Monte Carlo mean. Samples are split into fixed chunks, one stream per
/// chunk seeded from (seed, chunk), so results do not depend on `threads`.
/// mcmc stderr comes from the spread of per-chunk means (each chunk is an
/// independent chain) when there are at least 8 chunks.
EmpiricalEstimate expectation(const LocalObservable& f, const VolumeGraph& v, std::uint64_t n_samples,
                              const SamplerOptions& opts, std::uint64_t seed, unsigned threads = 1);

/// Mean and stderr of a set of chunk results; shared by the estimators.
struct ChunkMoments {
  double sum = 0;
  double sum_sq = 0;
  std::uint64_t n = 0;
};
EmpiricalEstimate merge_moments(const std::vector<ChunkMoments>& chunks, EstimateMethod method);

/// mu_{n+1}[eta(x_{n+1}) = Delta_xx] against |R_n| / |R_{n+1}| where V_n is
/// v_big without its last site, which must be a boundary site.
struct BoundaryIdentityReport {
  std::size_t small_sites = 0;
  std::string exact_ratio;       // reduced fraction "p/q"
  double exact_value = 0;
  bool approximate_ratio = false;  // determinants beyond the exact cap
  std::optional<std::string> enumerated_ratio;  // from R_{n+1}, if enumerable
  std::optional<bool> enumeration_matches;
  std::optional<EmpiricalEstimate> monte_carlo;
  double z_score = 0;

  bool ok(double z_max = 3.0) const;
  nlohmann::json to_json() const;
};

BoundaryIdentityReport boundary_height3_identity(const VolumeGraph& v_big, std::uint64_t n_samples,
                                                 const SamplerOptions& opts, std::uint64_t seed,
                                                 unsigned threads = 1);

/// Differences of E_{V_k}[f] along a volume schedule. Samples on different
/// volumes share per-chunk seeds, so for the tree_exact sampler the k-th
/// draws on all volumes are coupled and differences are estimated from
/// paired samples.
struct CauchyNetReport {
  std::vector<std::size_t> sizes;
  std::vector<EmpiricalEstimate> means;
  std::vector<double> differences;       // |E_k - E_{k+1}|
  std::vector<double> difference_stderr;
  std::vector<std::size_t> trend_violations;  // k with d_{k+1} - d_k > 2 sqrt(se_k^2 + se_{k+1}^2)
  bool decreasing = true;

  nlohmann::json to_json() const;
};

CauchyNetReport cauchy_net_diagnostic(const LocalObservable& f, const std::vector<VolumeGraph>& schedule,
                                      std::uint64_t n_samples, const SamplerOptions& opts, std::uint64_t seed,
                                      unsigned threads = 1);

/// Uniform-addition chain from eta = 1 on an enumerable volume: after
/// `burn_in` steps, records which stable states are visited in `steps` more.
struct ChainVisitReport {
  std::size_t stable_states = 0;
  std::size_t allowed_states = 0;
  std::size_t allowed_visited = 0;
  std::uint64_t forbidden_visits = 0;
  bool first_state_forbidden = false;

  bool ok() const noexcept { return forbidden_visits == 0 && allowed_visited == allowed_states; }
  nlohmann::json to_json() const;
};

ChainVisitReport chain_visit_check(const VolumeGraph& v, std::uint64_t burn_in, std::uint64_t steps,
                                   std::uint64_t seed);

/// Total-variation distance between empirical draws and uniform on R_V.
struct UniformityReport {
  std::size_t recurrent = 0;
  std::uint64_t draws = 0;
  std::uint64_t non_recurrent_draws = 0;
  double total_variation = 0;
  double chi_square = 0;
  std::size_t degrees_of_freedom = 0;

  nlohmann::json to_json() const;
};

UniformityReport uniformity_check(const VolumeGraph& v, std::uint64_t draws, const SamplerOptions& opts,
                                  std::uint64_t seed);

}  // namespace sandpile
