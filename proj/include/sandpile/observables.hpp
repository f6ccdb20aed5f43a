#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sandpile/measure.hpp"

namespace sandpile {

/// C_3(x, eta): the nearest-neighbor connected cluster of x among sites at
/// maximal height Delta_yy (3 on the binary tree). Empty unless eta(x) is
/// maximal.
struct ClusterResult {
  std::vector<SiteId> members;  // ascending
  bool touched_boundary = false;

  std::size_t size() const noexcept { return members.size(); }
};

ClusterResult cluster3(const HeightConfig& c, SiteId x, const VolumeGraph& v);

struct AvalancheClusterReport {
  std::uint64_t samples = 0;
  std::uint64_t maximal_at_site = 0;  // samples with eta(x) = Delta_xx
  std::uint64_t violations = 0;
  std::optional<HeightConfig> witness;

  bool ok() const noexcept { return violations == 0; }
  nlohmann::json to_json() const;
};

/// Compares the toppled set of add_grain(eta, x) with C_3(x, eta) on
/// stationary samples.
AvalancheClusterReport avalanche_equals_cluster_check(const VolumeGraph& v, SiteId x, std::uint64_t n_samples,
                                                      const SamplerOptions& opts, std::uint64_t seed,
                                                      unsigned threads = 1);

/// C_3(0, eta) under the uniform recurrent measure on the radius-n ball of
/// the (d+1)-regular tree, sampled lazily: only the cluster and its outer
/// boundary are drawn, so the ball is never materialized and its radius is
/// not limited by memory. The branch law depends only on the remaining
/// depth, rho_0 = 1/d, rho_h = (1 + rho_{h-1}) / d.
class BallClusterSampler {
 public:
  BallClusterSampler(int d, int generations);

  struct Draw {
    std::uint64_t size = 0;
    bool touched_boundary = false;
  };
  Draw draw(Rng& rng) const;

  int d() const noexcept { return d_; }
  int generations() const noexcept { return n_; }

 private:
  int d_;
  int n_;
  std::vector<double> rho_;  // by remaining depth
};

struct ClusterHistogram {
  std::uint64_t samples = 0;
  std::uint64_t empty = 0;                   // eta(origin) not maximal
  std::map<std::uint64_t, std::uint64_t> counts;    // uncensored, by size
  std::map<std::uint64_t, std::uint64_t> censored;  // boundary-touching, by size

  void add(std::uint64_t size, bool touched);
  void merge(const ClusterHistogram& other);
  std::uint64_t censored_total() const;
  /// CSV "size,count,censored_count" over all sizes >= 1 that occur.
  std::string to_csv() const;
};

struct TailFitOptions {
  double bin_factor = 1.189207115002721;  // 2^{1/4}
  std::uint64_t k_min = 8;
  std::uint64_t min_count = 50;
  std::size_t min_bins = 3;
};

struct TailFit {
  double exponent = 0;  // magnitude of the log-log slope
  double std_error = 0;
  std::uint64_t k_min = 0;
  std::uint64_t k_max = 0;
  std::size_t bins = 0;
  bool reliable = false;

  nlohmann::json to_json() const;
};

/// Log-binned weighted least squares of log P(|C| = k) against log k over
/// [k_min, k_max], k_max being the upper edge of the last bin holding at
/// least min_count uncensored clusters. Bin weights are the counts.
TailFit fit_tail(const ClusterHistogram& h, const TailFitOptions& opts = {});

ClusterHistogram cluster_size_distribution(const BallClusterSampler& s, std::uint64_t n_samples, std::uint64_t seed,
                                           unsigned threads = 1);
ClusterHistogram cluster_size_distribution(const VolumeGraph& v, std::uint64_t n_samples, const SamplerOptions& opts,
                                           std::uint64_t seed, unsigned threads = 1);

/// Mean toppling counts at each of `targets` when one grain is added at x
/// to stationary samples.
std::vector<EmpiricalEstimate> expected_topplings_mc(const VolumeGraph& v, SiteId x,
                                                     const std::vector<SiteId>& targets, std::uint64_t n_samples,
                                                     const SamplerOptions& opts, std::uint64_t seed,
                                                     unsigned threads = 1);

EmpiricalEstimate expected_topplings_mc(const VolumeGraph& v, SiteId x, SiteId y, std::uint64_t n_samples,
                                        const SamplerOptions& opts, std::uint64_t seed, unsigned threads = 1);

inline constexpr std::size_t kDefaultGreensCap = 3000;

/// G_V = (Delta^V)^{-1}, assembled from sparse Cholesky column solves.
Eigen::MatrixXd greens_exact(const VolumeGraph& v, std::size_t cap = kDefaultGreensCap);
Eigen::MatrixXd greens_exact(const ToppleMatrix& m, std::size_t cap = kDefaultGreensCap);

/// Column y of G_V, i.e. G_V(., y); no size cap.
Eigen::VectorXd greens_column(const ToppleMatrix& m, SiteId y);

/// max |Delta G - I| over all entries.
double greens_identity_residual(const ToppleMatrix& m, const Eigen::MatrixXd& g);

struct GreensDecayRow {
  int generations = 0;
  std::vector<double> by_distance;      // G(0, x) at |x| = 0, 1, ...
  std::vector<double> scaled;           // G(0, x) d^{|x|}
  double symmetry_spread = 0;           // max relative spread within a generation
  double variation = 0;                 // (max - min) / min of `scaled` over the checked range
};

struct GreensDecayReport {
  int d = 2;
  int first_distance = 1;
  int last_distance = 5;
  std::vector<GreensDecayRow> rows;
  bool monotone_in_volume = true;  // G_{V_n}(0, x) nondecreasing in n at fixed |x|
  double constant_estimate = 0;     // mean of `scaled` on the largest volume

  nlohmann::json to_json() const;
};

/// Exact G_{V_n}(0, x) on tree balls for each n in the schedule, for
/// |x| = 0..n-2.
GreensDecayReport greens_decay_check(int d, const std::vector<int>& generations, int first_distance = 1,
                                     int last_distance = 5);

/// Covariance of f and g under the stationary measure, with a delete-one-
/// chunk jackknife standard error.
EmpiricalEstimate truncated_correlation(const LocalObservable& f, const LocalObservable& g, const VolumeGraph& v,
                                        std::uint64_t n_samples, const SamplerOptions& opts, std::uint64_t seed,
                                        unsigned threads = 1);

/// Product M = M_1 ... M_n with M_i = ((1 + g_i, 1 + g_i), (1, 2 + g_i)).
struct TransferMatrixReport {
  std::size_t n = 0;
  Eigen::Matrix2d product;
  double determinant = 0;  // prod (1 + g_i)^2
  double trace = 0;
  double lambda_max = 0;
  double lambda_min = 0;
  double eigen_ratio = 0;    // lambda_min / lambda_max
  double det_over_tr2 = 0;
  double bound = 0;          // (4/9)^n
  bool holds = false;

  nlohmann::json to_json() const;
};

TransferMatrixReport transfer_matrix_bound(const std::vector<double>& gamma);

}  // namespace sandpile
