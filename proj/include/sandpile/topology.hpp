#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sandpile/common.hpp"

namespace sandpile {

inline constexpr std::size_t kDefaultSiteCap = 10'000'000;

enum class LatticeKind { tree, grid };

/// Lattice Laplacian with open boundary, stored as CSR. Diagonal entries are
/// kept apart from the off-diagonal rows so the toppling loop reads them
/// without a search.
///
/// The constructors accept any integer matrix; whether it is a valid
/// toppling matrix is answered by validate_toppling_matrix().
class ToppleMatrix {
 public:
  ToppleMatrix() = default;
  ToppleMatrix(std::vector<std::int64_t> diag, std::vector<std::size_t> row_offsets,
               std::vector<SiteId> cols, std::vector<std::int64_t> vals);

  static ToppleMatrix from_dense(const std::vector<std::vector<std::int64_t>>& dense);

  std::size_t dim() const noexcept { return diag_.size(); }
  std::int64_t diag(SiteId x) const { return diag_[x]; }
  std::span<const std::int64_t> diagonal() const noexcept { return diag_; }

  /// Off-diagonal column indices / values of row x.
  std::span<const SiteId> row_cols(SiteId x) const {
    return {cols_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
  }
  std::span<const std::int64_t> row_vals(SiteId x) const {
    return {vals_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
  }

  std::int64_t entry(SiteId x, SiteId y) const;
  std::int64_t row_sum(SiteId x) const;
  std::vector<std::vector<std::int64_t>> to_dense() const;

  friend bool operator==(const ToppleMatrix&, const ToppleMatrix&) = default;

 private:
  std::vector<std::int64_t> diag_;
  std::vector<std::size_t> offsets_{0};
  std::vector<SiteId> cols_;
  std::vector<std::int64_t> vals_;
};

/// Finite simply-connected volume carved from the rootless (d+1)-regular tree
/// or from Z^d. Site ids are dense and follow the breadth-first enumeration
/// from the origin (id 0), so a prefix of ids is itself a connected volume.
/// Immutable after construction.
class VolumeGraph {
 public:
  /// Validates symmetry, absence of self-loops, connectivity, the degree
  /// bound of the lattice, acyclicity for trees, and that `generation` is
  /// the BFS distance from site 0 with nondecreasing ids.
  VolumeGraph(LatticeKind kind, int d, std::vector<std::vector<SiteId>> adjacency,
              std::vector<std::uint32_t> generation);

  std::size_t size() const noexcept { return generation_.size(); }
  LatticeKind kind() const noexcept { return kind_; }
  int d() const noexcept { return d_; }
  /// Coordination number of the ambient lattice: d+1 (tree) or 2d (grid).
  int full_degree() const noexcept { return kind_ == LatticeKind::tree ? d_ + 1 : 2 * d_; }
  SiteId origin() const noexcept { return 0; }

  std::span<const SiteId> neighbors(SiteId x) const {
    return {nbrs_.data() + offsets_[x], offsets_[x + 1] - offsets_[x]};
  }
  std::size_t degree(SiteId x) const { return offsets_[x + 1] - offsets_[x]; }
  std::uint32_t generation(SiteId x) const { return generation_[x]; }
  std::span<const std::uint32_t> generations() const noexcept { return generation_; }
  std::uint32_t max_generation() const noexcept;
  std::size_t edge_count() const noexcept { return nbrs_.size() / 2; }

  /// A site with fewer in-volume neighbors than the lattice coordination
  /// number; exactly the dissipative sites of the Laplacian.
  bool is_boundary(SiteId x) const { return degree(x) < static_cast<std::size_t>(full_degree()); }

  /// The Laplacian built once at construction.
  const ToppleMatrix& laplacian() const noexcept { return laplacian_; }

  std::string describe() const;

 private:
  LatticeKind kind_;
  int d_;
  std::vector<std::size_t> offsets_;
  std::vector<SiteId> nbrs_;
  std::vector<std::uint32_t> generation_;
  ToppleMatrix laplacian_;
};

/// Ball of radius `generations` around the origin of the rootless
/// (d+1)-regular tree. 1 + (d+1)(d^n - 1)/(d - 1) sites.
VolumeGraph build_tree_volume(int d, int generations, std::size_t site_cap = kDefaultSiteCap);

/// Site count of build_tree_volume(d, generations) without building it.
/// Saturates at SIZE_MAX.
std::size_t tree_ball_size(int d, int generations);

/// The side^d box of Z^d with nearest-neighbor adjacency; origin at a corner.
VolumeGraph build_grid_volume(int d, int side, std::size_t site_cap = kDefaultSiteCap);

/// T_n: the volume induced by the first `n_sites` sites of the enumeration.
VolumeGraph prefix_volume(const VolumeGraph& v, std::size_t n_sites);

/// First `n_sites` sites of the tree enumeration (the smallest enclosing
/// ball is built and cut).
VolumeGraph build_tree_prefix(int d, std::size_t n_sites, std::size_t site_cap = kDefaultSiteCap);

/// Lattice Laplacian with open boundary: d+1 (tree) or 2d (grid) on the
/// diagonal and -1 between nearest neighbors.
ToppleMatrix toppling_matrix(const VolumeGraph& v);

struct ToppleValidation {
  bool symmetric_nonpositive = true;   // condition 1
  bool diagonal_positive = true;       // condition 2
  bool row_sums_nonnegative = true;    // condition 3
  bool total_positive = true;          // condition 4
  std::vector<SiteId> dissipative;     // strict row-sum sites
  std::vector<std::string> failures;   // one message per violated condition

  bool ok() const noexcept {
    return symmetric_nonpositive && diagonal_positive && row_sums_nonnegative && total_positive;
  }
};

ToppleValidation validate_toppling_matrix(const ToppleMatrix& m);

struct SiteEnumeration {
  std::vector<SiteId> order;
};

/// BFS order from the origin, children in creation order. Since ids are
/// assigned in that order this is the identity permutation for every volume
/// built here, but it is recomputed from adjacency rather than assumed.
SiteEnumeration enumerate_sites(const VolumeGraph& v);

}  // namespace sandpile
