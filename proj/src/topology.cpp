#include "sandpile/topology.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

namespace sandpile {

// ---------------------------------------------------------------------------
// ToppleMatrix

ToppleMatrix::ToppleMatrix(std::vector<std::int64_t> diag, std::vector<std::size_t> row_offsets,
                           std::vector<SiteId> cols, std::vector<std::int64_t> vals)
    : diag_(std::move(diag)),
      offsets_(std::move(row_offsets)),
      cols_(std::move(cols)),
      vals_(std::move(vals)) {
  if (offsets_.size() != diag_.size() + 1 || offsets_.front() != 0 ||
      offsets_.back() != cols_.size() || cols_.size() != vals_.size()) {
    throw PreconditionError("ToppleMatrix: inconsistent CSR arrays");
  }
  for (std::size_t x = 0; x < diag_.size(); ++x) {
    if (offsets_[x] > offsets_[x + 1]) throw PreconditionError("ToppleMatrix: offsets not monotone");
    for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k) {
      if (cols_[k] >= diag_.size() || cols_[k] == x) {
        throw PreconditionError("ToppleMatrix: off-diagonal column out of range");
      }
    }
  }
}

ToppleMatrix ToppleMatrix::from_dense(const std::vector<std::vector<std::int64_t>>& dense) {
  const std::size_t n = dense.size();
  std::vector<std::int64_t> diag(n);
  std::vector<std::size_t> offsets{0};
  std::vector<SiteId> cols;
  std::vector<std::int64_t> vals;
  for (std::size_t x = 0; x < n; ++x) {
    if (dense[x].size() != n) throw PreconditionError("ToppleMatrix::from_dense: matrix not square");
    diag[x] = dense[x][x];
    for (std::size_t y = 0; y < n; ++y) {
      if (y != x && dense[x][y] != 0) {
        cols.push_back(static_cast<SiteId>(y));
        vals.push_back(dense[x][y]);
      }
    }
    offsets.push_back(cols.size());
  }
  return ToppleMatrix(std::move(diag), std::move(offsets), std::move(cols), std::move(vals));
}

std::int64_t ToppleMatrix::entry(SiteId x, SiteId y) const {
  if (x == y) return diag_[x];
  const auto c = row_cols(x);
  const auto v = row_vals(x);
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] == y) return v[k];
  }
  return 0;
}

std::int64_t ToppleMatrix::row_sum(SiteId x) const {
  const auto v = row_vals(x);
  return std::accumulate(v.begin(), v.end(), diag_[x]);
}

std::vector<std::vector<std::int64_t>> ToppleMatrix::to_dense() const {
  const std::size_t n = dim();
  std::vector<std::vector<std::int64_t>> out(n, std::vector<std::int64_t>(n, 0));
  for (SiteId x = 0; x < n; ++x) {
    out[x][x] = diag_[x];
    const auto c = row_cols(x);
    const auto v = row_vals(x);
    for (std::size_t k = 0; k < c.size(); ++k) out[x][c[k]] += v[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// VolumeGraph

namespace {

ToppleMatrix laplacian_of(std::size_t n, int full_degree, const std::vector<std::size_t>& offsets,
                          const std::vector<SiteId>& nbrs) {
  std::vector<std::int64_t> diag(n, full_degree);
  std::vector<std::int64_t> vals(nbrs.size(), -1);
  return ToppleMatrix(std::move(diag), offsets, nbrs, std::move(vals));
}

}  // namespace

VolumeGraph::VolumeGraph(LatticeKind kind, int d, std::vector<std::vector<SiteId>> adjacency,
                         std::vector<std::uint32_t> generation)
    : kind_(kind), d_(d), generation_(std::move(generation)) {
  const std::size_t n = adjacency.size();
  if (n == 0) throw PreconditionError("VolumeGraph: empty volume");
  if (generation_.size() != n) throw PreconditionError("VolumeGraph: generation size mismatch");
  if (kind == LatticeKind::tree && d < 2) throw PreconditionError("VolumeGraph: tree needs d >= 2");
  if (kind == LatticeKind::grid && d < 1) throw PreconditionError("VolumeGraph: grid needs d >= 1");

  offsets_.reserve(n + 1);
  offsets_.push_back(0);
  for (std::size_t x = 0; x < n; ++x) {
    auto& row = adjacency[x];
    std::sort(row.begin(), row.end());
    if (std::adjacent_find(row.begin(), row.end()) != row.end()) {
      throw PreconditionError("VolumeGraph: duplicate edge");
    }
    if (row.size() > static_cast<std::size_t>(full_degree())) {
      throw PreconditionError("VolumeGraph: site exceeds lattice coordination number");
    }
    for (SiteId y : row) {
      if (y >= n) throw PreconditionError("VolumeGraph: neighbor id out of range");
      if (y == x) throw PreconditionError("VolumeGraph: self-loop");
    }
    nbrs_.insert(nbrs_.end(), row.begin(), row.end());
    offsets_.push_back(nbrs_.size());
  }
  for (SiteId x = 0; x < n; ++x) {
    for (SiteId y : neighbors(x)) {
      const auto ny = neighbors(y);
      if (!std::binary_search(ny.begin(), ny.end(), x)) {
        throw PreconditionError("VolumeGraph: adjacency not symmetric");
      }
    }
  }

  // Generation must be the BFS distance from the origin; ids nondecreasing in it.
  std::vector<std::uint32_t> dist(n, std::numeric_limits<std::uint32_t>::max());
  std::deque<SiteId> queue{0};
  dist[0] = 0;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const SiteId x = queue.front();
    queue.pop_front();
    for (SiteId y : neighbors(x)) {
      if (dist[y] == std::numeric_limits<std::uint32_t>::max()) {
        dist[y] = dist[x] + 1;
        ++reached;
        queue.push_back(y);
      }
    }
  }
  if (reached != n) throw PreconditionError("VolumeGraph: volume not connected");
  if (dist != generation_) throw PreconditionError("VolumeGraph: generation is not the distance to the origin");
  if (!std::is_sorted(generation_.begin(), generation_.end())) {
    throw PreconditionError("VolumeGraph: ids not in generation order");
  }
  if (kind == LatticeKind::tree && edge_count() != n - 1) {
    throw PreconditionError("VolumeGraph: tree volume contains a cycle");
  }
  laplacian_ = laplacian_of(n, full_degree(), offsets_, nbrs_);
}

std::uint32_t VolumeGraph::max_generation() const noexcept {
  return generation_.back();
}

std::string VolumeGraph::describe() const {
  std::ostringstream os;
  os << (kind_ == LatticeKind::tree ? "tree" : "grid") << "(d=" << d_ << ", sites=" << size()
     << ", edges=" << edge_count() << ", max_generation=" << max_generation() << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Constructors

std::size_t tree_ball_size(int d, int generations) {
  if (d < 2 || generations < 0) throw PreconditionError("tree_ball_size: need d >= 2, generations >= 0");
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 1;
  std::size_t shell = static_cast<std::size_t>(d) + 1;
  for (int g = 1; g <= generations; ++g) {
    if (total > kMax - shell) return kMax;
    total += shell;
    if (shell > kMax / static_cast<std::size_t>(d)) {
      // Next shell overflows; only fine if this was the last one.
      if (g < generations) return kMax;
    } else {
      shell *= static_cast<std::size_t>(d);
    }
  }
  return total;
}

VolumeGraph build_tree_volume(int d, int generations, std::size_t site_cap) {
  if (d < 2) throw PreconditionError("build_tree_volume: d must be >= 2");
  if (generations < 0) throw PreconditionError("build_tree_volume: generations must be >= 0");
  const std::size_t n = tree_ball_size(d, generations);
  if (n > site_cap) {
    throw ResourceError("build_tree_volume: " + std::to_string(n) + " sites exceed the cap of " +
                        std::to_string(site_cap));
  }
  std::vector<std::vector<SiteId>> adj(n);
  std::vector<std::uint32_t> gen(n, 0);
  SiteId next = 1;
  SiteId shell_begin = 0;
  SiteId shell_end = 1;
  for (int g = 1; g <= generations; ++g) {
    for (SiteId parent = shell_begin; parent < shell_end; ++parent) {
      const int children = (g == 1) ? d + 1 : d;
      for (int c = 0; c < children; ++c) {
        const SiteId child = next++;
        gen[child] = static_cast<std::uint32_t>(g);
        adj[parent].push_back(child);
        adj[child].push_back(parent);
      }
    }
    shell_begin = shell_end;
    shell_end = next;
  }
  return VolumeGraph(LatticeKind::tree, d, std::move(adj), std::move(gen));
}

VolumeGraph build_grid_volume(int d, int side, std::size_t site_cap) {
  if (d < 1) throw PreconditionError("build_grid_volume: d must be >= 1");
  if (side < 1) throw PreconditionError("build_grid_volume: side must be >= 1");
  std::size_t n = 1;
  for (int k = 0; k < d; ++k) {
    if (n > site_cap / static_cast<std::size_t>(side)) {
      throw ResourceError("build_grid_volume: box exceeds the site cap of " + std::to_string(site_cap));
    }
    n *= static_cast<std::size_t>(side);
  }
  if (n > site_cap) throw ResourceError("build_grid_volume: box exceeds the site cap");

  // Lexicographic index <-> BFS id. BFS from the corner, directions in
  // order (axis 0 -, axis 0 +, axis 1 -, ...).
  std::vector<std::size_t> stride(d, 1);
  for (int k = 1; k < d; ++k) stride[k] = stride[k - 1] * static_cast<std::size_t>(side);
  constexpr SiteId kUnset = std::numeric_limits<SiteId>::max();
  std::vector<SiteId> id_of(n, kUnset);
  std::vector<std::size_t> lex_of;
  lex_of.reserve(n);
  std::vector<std::uint32_t> gen;
  gen.reserve(n);
  std::vector<std::vector<SiteId>> adj(n);

  id_of[0] = 0;
  lex_of.push_back(0);
  gen.push_back(0);
  for (std::size_t head = 0; head < lex_of.size(); ++head) {
    const std::size_t lex = lex_of[head];
    const SiteId x = static_cast<SiteId>(head);
    for (int k = 0; k < d; ++k) {
      const std::size_t coord = (lex / stride[k]) % static_cast<std::size_t>(side);
      for (int dir : {-1, +1}) {
        if (dir < 0 && coord == 0) continue;
        if (dir > 0 && coord + 1 == static_cast<std::size_t>(side)) continue;
        const std::size_t nl = dir < 0 ? lex - stride[k] : lex + stride[k];
        if (id_of[nl] == kUnset) {
          id_of[nl] = static_cast<SiteId>(lex_of.size());
          lex_of.push_back(nl);
          gen.push_back(gen[x] + 1);
        }
        adj[x].push_back(id_of[nl]);
      }
    }
  }
  return VolumeGraph(LatticeKind::grid, d, std::move(adj), std::move(gen));
}

VolumeGraph prefix_volume(const VolumeGraph& v, std::size_t n_sites) {
  if (n_sites == 0 || n_sites > v.size()) {
    throw PreconditionError("prefix_volume: prefix length must be in [1, |V|]");
  }
  std::vector<std::vector<SiteId>> adj(n_sites);
  for (SiteId x = 0; x < n_sites; ++x) {
    for (SiteId y : v.neighbors(x)) {
      if (y < n_sites) adj[x].push_back(y);
    }
  }
  std::vector<std::uint32_t> gen(v.generations().begin(), v.generations().begin() + n_sites);
  return VolumeGraph(v.kind(), v.d(), std::move(adj), std::move(gen));
}

VolumeGraph build_tree_prefix(int d, std::size_t n_sites, std::size_t site_cap) {
  if (n_sites == 0) throw PreconditionError("build_tree_prefix: need at least one site");
  if (n_sites > site_cap) throw ResourceError("build_tree_prefix: prefix exceeds the site cap");
  int g = 0;
  while (tree_ball_size(d, g) < n_sites) ++g;
  return prefix_volume(build_tree_volume(d, g, std::max(site_cap, tree_ball_size(d, g))), n_sites);
}

ToppleMatrix toppling_matrix(const VolumeGraph& v) { return v.laplacian(); }

ToppleValidation validate_toppling_matrix(const ToppleMatrix& m) {
  ToppleValidation r;
  const std::size_t n = m.dim();
  long double total = 0;
  for (SiteId x = 0; x < n; ++x) {
    if (m.diag(x) < 1) r.diagonal_positive = false;
    const auto c = m.row_cols(x);
    const auto v = m.row_vals(x);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (v[k] > 0 || m.entry(c[k], x) != v[k]) r.symmetric_nonpositive = false;
    }
    const std::int64_t rs = m.row_sum(x);
    if (rs < 0) r.row_sums_nonnegative = false;
    if (rs > 0) r.dissipative.push_back(x);
    total += static_cast<long double>(rs);
  }
  if (!(total > 0)) r.total_positive = false;
  if (!r.symmetric_nonpositive) r.failures.emplace_back("condition 1: off-diagonal entries must be symmetric and <= 0");
  if (!r.diagonal_positive) r.failures.emplace_back("condition 2: diagonal entries must be >= 1");
  if (!r.row_sums_nonnegative) r.failures.emplace_back("condition 3: row sums must be >= 0");
  if (!r.total_positive) r.failures.emplace_back("condition 4: total sum must be > 0");
  return r;
}

SiteEnumeration enumerate_sites(const VolumeGraph& v) {
  SiteEnumeration e;
  e.order.reserve(v.size());
  std::vector<char> seen(v.size(), 0);
  e.order.push_back(v.origin());
  seen[v.origin()] = 1;
  for (std::size_t head = 0; head < e.order.size(); ++head) {
    for (SiteId y : v.neighbors(e.order[head])) {
      if (!seen[y]) {
        seen[y] = 1;
        e.order.push_back(y);
      }
    }
  }
  return e;
}

}  // namespace sandpile
