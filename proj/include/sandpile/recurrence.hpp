#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "json.hpp"
#include "sandpile/engine.hpp"
#include "sandpile/topology.hpp"

namespace sandpile {

inline constexpr std::size_t kDefaultEnumerationCap = 12;
inline constexpr std::size_t kDefaultExactDeterminantCap = 2000;

/// Outcome of the burning algorithm. Round r erases every site whose
/// height exceeds the number of its still-unburned neighbors at the start
/// of round r.
struct BurnReport {
  std::vector<std::vector<SiteId>> rounds;
  std::vector<SiteId> residual;  // support of the maximal forbidden subconfiguration

  bool allowed() const noexcept { return residual.empty(); }
};

BurnReport burn(const HeightConfig& c, const ToppleMatrix& m);
BurnReport burn(const HeightConfig& c, const VolumeGraph& v);

bool is_recurrent(const HeightConfig& c, const ToppleMatrix& m);
bool is_recurrent(const HeightConfig& c, const VolumeGraph& v);

/// det(Delta) by fraction-free sparse elimination. No pivoting: toppling
/// matrices are symmetric positive definite, so every leading minor is
/// positive. Sites are eliminated in reverse enumeration order (leaves
/// first on trees, which produces no fill).
mpz_class exact_determinant(const ToppleMatrix& m);

/// log det(Delta) from a sparse LDL^T factorization.
double log_determinant(const ToppleMatrix& m);

struct RecurrentCount {
  std::optional<mpz_class> exact;  // set when |V| <= the exact cap
  double log_count = 0;            // natural log of |R_V|
  bool approximate = false;        // true when only log_count is available

  std::string to_string() const;
};

/// |R_V| = det(Delta^V), exactly up to `exact_cap` sites and as a
/// floating-point log-determinant (flagged approximate) beyond.
RecurrentCount count_recurrent(const ToppleMatrix& m, std::size_t exact_cap = kDefaultExactDeterminantCap);
RecurrentCount count_recurrent(const VolumeGraph& v, std::size_t exact_cap = kDefaultExactDeterminantCap);

/// Mixed-radix code of a stable configuration (digit x is heights[x] - 1 in
/// base Delta_xx). Enumeration order below is ascending in this code.
std::uint64_t stable_code(const HeightConfig& c, const ToppleMatrix& m);

/// Calls `visit` on every recurrent configuration in ascending code order.
void for_each_recurrent(const ToppleMatrix& m, const std::function<void(const HeightConfig&)>& visit,
                        std::size_t cap = kDefaultEnumerationCap);

std::vector<HeightConfig> enumerate_recurrent(const ToppleMatrix& m, std::size_t cap = kDefaultEnumerationCap);
std::vector<HeightConfig> enumerate_recurrent(const VolumeGraph& v, std::size_t cap = kDefaultEnumerationCap);

/// R_V with O(log |R|) lookup by configuration.
class RecurrentSet {
 public:
  explicit RecurrentSet(const ToppleMatrix& m, std::size_t cap = kDefaultEnumerationCap);

  std::size_t size() const noexcept { return configs_.size(); }
  const HeightConfig& operator[](std::size_t i) const { return configs_[i]; }
  const std::vector<HeightConfig>& configs() const noexcept { return configs_; }
  std::optional<std::size_t> index_of(const HeightConfig& c) const;

 private:
  const ToppleMatrix* m_;
  std::vector<HeightConfig> configs_;
  std::vector<std::uint64_t> codes_;
};

/// Checks over all of R_V: bijectivity of each a_x, per-site orders,
/// the closure relation prod_y a_y^{Delta_xy} = e, pairwise commutativity,
/// and exact invariance of the uniform measure under each a_x.
struct GroupAxiomReport {
  std::size_t sites = 0;
  std::size_t recurrent = 0;
  std::string determinant;  // decimal
  bool count_matches_determinant = false;
  bool bijective = true;
  bool closure_holds = true;
  bool commutative = true;
  bool uniform_invariant = true;
  std::vector<std::uint64_t> orders;  // n_x per site
  std::uint64_t group_exponent = 1;   // lcm of the orders
  std::vector<std::string> violations;  // witness descriptions, first few per axiom

  bool ok() const noexcept {
    return count_matches_determinant && bijective && closure_holds && commutative && uniform_invariant;
  }
  nlohmann::json to_json() const;
};

GroupAxiomReport verify_group_axioms(const ToppleMatrix& m, std::size_t cap = kDefaultEnumerationCap);
GroupAxiomReport verify_group_axioms(const VolumeGraph& v, std::size_t cap = kDefaultEnumerationCap);

/// The permutation of R_V induced by a_x, as indices into `set`.
std::vector<std::uint32_t> addition_permutation(const RecurrentSet& set, SiteId x, const ToppleMatrix& m);

/// a_x^{-1} on R_V: iterates a_x from c until it returns and yields the
/// last configuration before the return, a_x^{n-1} c.
HeightConfig inverse_addition(const HeightConfig& c, SiteId x, const ToppleMatrix& m);
HeightConfig inverse_addition(const HeightConfig& c, SiteId x, const VolumeGraph& v);

/// Length of the orbit of c under a_x (capped; throws past `cap`).
std::uint64_t orbit_length(const HeightConfig& c, SiteId x, const ToppleMatrix& m, std::uint64_t cap);

}  // namespace sandpile
