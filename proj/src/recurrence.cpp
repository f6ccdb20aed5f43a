#include "sandpile/recurrence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace sandpile {

namespace {

std::string config_string(const HeightConfig& c) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < c.size(); ++i) os << (i ? "," : "") << c[static_cast<SiteId>(i)];
  os << ")";
  return os.str();
}

/// Burning with reusable buffers. `unburned_weight[x]` is the number of
/// still-unburned neighbors of x, weighted by -Delta_xy.
class Burner {
 public:
  explicit Burner(const ToppleMatrix& m) : m_(m), weight_(m.dim()), burned_(m.dim()), mark_(m.dim()) {}

  bool allowed(std::span<const Height> h) { return run(h, nullptr); }
  BurnReport report(std::span<const Height> h) {
    BurnReport r;
    run(h, &r);
    return r;
  }

 private:
  bool run(std::span<const Height> h, BurnReport* out) {
    const std::size_t n = m_.dim();
    for (SiteId x = 0; x < n; ++x) {
      const auto v = m_.row_vals(x);
      weight_[x] = -std::accumulate(v.begin(), v.end(), std::int64_t{0});
      burned_[x] = 0;
      mark_[x] = 0;
    }
    frontier_.resize(n);
    std::iota(frontier_.begin(), frontier_.end(), SiteId{0});
    std::size_t burned_count = 0;
    while (!frontier_.empty()) {
      erase_.clear();
      for (SiteId x : frontier_) {
        mark_[x] = 0;
        if (!burned_[x] && h[x] > weight_[x]) erase_.push_back(x);
      }
      if (erase_.empty()) break;
      std::sort(erase_.begin(), erase_.end());
      for (SiteId x : erase_) burned_[x] = 1;
      burned_count += erase_.size();
      next_.clear();
      for (SiteId x : erase_) {
        const auto cols = m_.row_cols(x);
        const auto vals = m_.row_vals(x);
        for (std::size_t k = 0; k < cols.size(); ++k) {
          const SiteId y = cols[k];
          if (burned_[y]) continue;
          weight_[y] += vals[k];
          if (!mark_[y]) {
            mark_[y] = 1;
            next_.push_back(y);
          }
        }
      }
      if (out) out->rounds.push_back(erase_);
      frontier_.swap(next_);
    }
    if (out) {
      for (SiteId x = 0; x < n; ++x) {
        if (!burned_[x]) out->residual.push_back(x);
      }
    }
    return burned_count == n;
  }

  const ToppleMatrix& m_;
  std::vector<std::int64_t> weight_;
  std::vector<char> burned_;
  std::vector<char> mark_;
  std::vector<SiteId> frontier_, next_, erase_;
};

std::uint64_t radix_product(const ToppleMatrix& m) {
  std::uint64_t total = 1;
  for (SiteId x = 0; x < m.dim(); ++x) {
    const auto base = static_cast<std::uint64_t>(m.diag(x));
    if (base == 0 || total > std::numeric_limits<std::uint64_t>::max() / base) {
      throw ResourceError("stable configuration space too large to index");
    }
    total *= base;
  }
  return total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Burning

BurnReport burn(const HeightConfig& c, const ToppleMatrix& m) {
  if (c.size() != m.dim()) throw PreconditionError("burn: configuration size does not match the matrix");
  if (!is_stable(c, m)) throw PreconditionError("burn: configuration must be stable");
  Burner b(m);
  return b.report(c.heights());
}

BurnReport burn(const HeightConfig& c, const VolumeGraph& v) { return burn(c, v.laplacian()); }

bool is_recurrent(const HeightConfig& c, const ToppleMatrix& m) { return burn(c, m).allowed(); }
bool is_recurrent(const HeightConfig& c, const VolumeGraph& v) { return is_recurrent(c, v.laplacian()); }

// ---------------------------------------------------------------------------
// Determinants

mpz_class exact_determinant(const ToppleMatrix& m) {
  const std::size_t n = m.dim();
  if (n == 0) return 1;
  using Entry = std::pair<std::uint32_t, mpz_class>;
  // Permuted index p = n - 1 - x.
  std::vector<std::vector<Entry>> rows(n);
  for (SiteId x = 0; x < n; ++x) {
    auto& row = rows[n - 1 - x];
    row.emplace_back(static_cast<std::uint32_t>(n - 1 - x), mpz_class(static_cast<long>(m.diag(x))));
    const auto cols = m.row_cols(x);
    const auto vals = m.row_vals(x);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      row.emplace_back(static_cast<std::uint32_t>(n - 1 - cols[k]), mpz_class(static_cast<long>(vals[k])));
    }
    std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
  }

  // Lazily scaled fraction-free elimination. Row i is stored as of step
  // scale[i]; an untouched row is rescaled by D_{k-1} / D_{scale} on use,
  // where D_k is the (k+1)-th leading minor (pivot[k + 1], pivot[0] = 1).
  std::vector<mpz_class> pivot(n + 1);
  pivot[0] = 1;
  std::vector<std::int64_t> scale(n, -1);
  std::vector<Entry> merged;
  mpz_class tmp;

  auto materialize = [&](std::size_t i, std::size_t k) {
    // Bring row i to step k - 1.
    const auto from = static_cast<std::size_t>(scale[i] + 1);
    if (from == k) return;
    for (auto& e : rows[i]) {
      e.second *= pivot[k];
      mpz_divexact(e.second.get_mpz_t(), e.second.get_mpz_t(), pivot[from].get_mpz_t());
    }
    scale[i] = static_cast<std::int64_t>(k) - 1;
  };

  for (std::size_t k = 0; k < n; ++k) {
    materialize(k, k);
    auto& prow = rows[k];
    // Drop columns < k.
    prow.erase(std::remove_if(prow.begin(), prow.end(), [k](const Entry& e) { return e.first < k; }), prow.end());
    if (prow.empty() || prow.front().first != k || sgn(prow.front().second) <= 0) {
      throw PreconditionError("exact_determinant: matrix is not positive definite");
    }
    const mpz_class dk = prow.front().second;
    pivot[k + 1] = dk;
    for (std::size_t pe = 1; pe < prow.size(); ++pe) {
      const std::size_t i = prow[pe].first;
      materialize(i, k);
      auto& row = rows[i];
      // v_ik in row i equals v_ki by symmetry.
      const mpz_class& vik = prow[pe].second;
      merged.clear();
      std::size_t a = 0, b = 1;
      while (a < row.size() || b < prow.size()) {
        if (a < row.size() && row[a].first <= k) {
          ++a;
          continue;
        }
        const std::uint32_t ca = a < row.size() ? row[a].first : std::numeric_limits<std::uint32_t>::max();
        const std::uint32_t cb = b < prow.size() ? prow[b].first : std::numeric_limits<std::uint32_t>::max();
        if (ca < cb) {
          tmp = dk * row[a].second;
          ++a;
          merged.emplace_back(ca, 0);
        } else if (cb < ca) {
          tmp = -vik * prow[b].second;
          ++b;
          merged.emplace_back(cb, 0);
        } else {
          tmp = dk * row[a].second - vik * prow[b].second;
          ++a;
          ++b;
          merged.emplace_back(ca, 0);
        }
        mpz_divexact(merged.back().second.get_mpz_t(), tmp.get_mpz_t(), pivot[k].get_mpz_t());
        if (merged.back().second == 0) merged.pop_back();
      }
      row.swap(merged);
      scale[i] = static_cast<std::int64_t>(k);
    }
    prow.clear();
    prow.shrink_to_fit();
  }
  return pivot[n];
}

double log_determinant(const ToppleMatrix& m) {
  const auto n = static_cast<Eigen::Index>(m.dim());
  std::vector<Eigen::Triplet<double>> trips;
  for (SiteId x = 0; x < m.dim(); ++x) {
    trips.emplace_back(x, x, static_cast<double>(m.diag(x)));
    const auto cols = m.row_cols(x);
    const auto vals = m.row_vals(x);
    for (std::size_t k = 0; k < cols.size(); ++k) trips.emplace_back(x, cols[k], static_cast<double>(vals[k]));
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw PreconditionError("log_determinant: factorization failed");
  const auto d = ldlt.vectorD();
  double acc = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0)) throw PreconditionError("log_determinant: matrix is not positive definite");
    acc += std::log(d[i]);
  }
  return acc;
}

std::string RecurrentCount::to_string() const {
  if (exact) return exact->get_str();
  std::ostringstream os;
  os.precision(12);
  os << "exp(" << log_count << ")";
  return os.str();
}

RecurrentCount count_recurrent(const ToppleMatrix& m, std::size_t exact_cap) {
  RecurrentCount r;
  if (m.dim() <= exact_cap) {
    r.exact = exact_determinant(m);
    // log from the mantissa/exponent split; get_d() would overflow.
    long exp2 = 0;
    const double mant = mpz_get_d_2exp(&exp2, r.exact->get_mpz_t());
    r.log_count = std::log(mant) + static_cast<double>(exp2) * std::log(2.0);
  } else {
    r.log_count = log_determinant(m);
    r.approximate = true;
  }
  return r;
}

RecurrentCount count_recurrent(const VolumeGraph& v, std::size_t exact_cap) {
  return count_recurrent(v.laplacian(), exact_cap);
}

// ---------------------------------------------------------------------------
// Enumeration

std::uint64_t stable_code(const HeightConfig& c, const ToppleMatrix& m) {
  if (c.size() != m.dim()) throw PreconditionError("stable_code: size mismatch");
  std::uint64_t code = 0;
  for (std::size_t i = c.size(); i-- > 0;) {
    const auto x = static_cast<SiteId>(i);
    if (c[x] < 1 || c[x] > m.diag(x)) throw PreconditionError("stable_code: configuration not stable");
    code = code * static_cast<std::uint64_t>(m.diag(x)) + static_cast<std::uint64_t>(c[x] - 1);
  }
  return code;
}

void for_each_recurrent(const ToppleMatrix& m, const std::function<void(const HeightConfig&)>& visit,
                        std::size_t cap) {
  const std::size_t n = m.dim();
  if (n > cap) {
    throw ResourceError("enumeration cap exceeded: " + std::to_string(n) + " sites > " + std::to_string(cap));
  }
  const std::uint64_t total = radix_product(m);
  Burner burner(m);
  HeightConfig c = HeightConfig::constant(n, 1);
  for (std::uint64_t code = 0; code < total; ++code) {
    if (burner.allowed(c.heights())) visit(c);
    // Odometer, digit 0 fastest, matching stable_code().
    for (SiteId x = 0; x < n; ++x) {
      if (c[x] < m.diag(x)) {
        ++c[x];
        break;
      }
      c[x] = 1;
    }
  }
}

std::vector<HeightConfig> enumerate_recurrent(const ToppleMatrix& m, std::size_t cap) {
  std::vector<HeightConfig> out;
  for_each_recurrent(m, [&](const HeightConfig& c) { out.push_back(c); }, cap);
  return out;
}

std::vector<HeightConfig> enumerate_recurrent(const VolumeGraph& v, std::size_t cap) {
  return enumerate_recurrent(v.laplacian(), cap);
}

RecurrentSet::RecurrentSet(const ToppleMatrix& m, std::size_t cap) : m_(&m) {
  for_each_recurrent(m, [&](const HeightConfig& c) {
    configs_.push_back(c);
    codes_.push_back(stable_code(c, m));
  }, cap);
}

std::optional<std::size_t> RecurrentSet::index_of(const HeightConfig& c) const {
  if (c.size() != m_->dim() || !is_stable(c, *m_)) return std::nullopt;
  const std::uint64_t code = stable_code(c, *m_);
  const auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
  if (it == codes_.end() || *it != code) return std::nullopt;
  return static_cast<std::size_t>(it - codes_.begin());
}

// ---------------------------------------------------------------------------
// Group structure

std::vector<std::uint32_t> addition_permutation(const RecurrentSet& set, SiteId x, const ToppleMatrix& m) {
  constexpr std::uint32_t kOutside = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> perm(set.size(), kOutside);
  Stabilizer s(m);
  HeightConfig work;
  for (std::size_t i = 0; i < set.size(); ++i) {
    work = set[i];
    s.add_and_relax(work.heights(), x);
    const auto j = set.index_of(work);
    if (j) perm[i] = static_cast<std::uint32_t>(*j);
  }
  return perm;
}

namespace {

std::uint64_t lcm_checked(std::uint64_t a, std::uint64_t b) {
  const std::uint64_t g = std::gcd(a, b);
  const std::uint64_t q = a / g;
  if (q != 0 && b > std::numeric_limits<std::uint64_t>::max() / q) throw ResourceError("group order overflow");
  return q * b;
}

}  // namespace

nlohmann::json GroupAxiomReport::to_json() const {
  nlohmann::json j;
  j["sites"] = sites;
  j["recurrent_count"] = recurrent;
  j["determinant"] = determinant;
  j["count_matches_determinant"] = count_matches_determinant;
  j["bijective"] = bijective;
  j["closure_relation"] = closure_holds;
  j["commutative"] = commutative;
  j["uniform_measure_invariant"] = uniform_invariant;
  j["orders"] = orders;
  j["group_exponent"] = group_exponent;
  j["violations"] = violations;
  j["ok"] = ok();
  return j;
}

GroupAxiomReport verify_group_axioms(const ToppleMatrix& m, std::size_t cap) {
  constexpr std::uint32_t kOutside = std::numeric_limits<std::uint32_t>::max();
  constexpr std::size_t kMaxWitnesses = 5;
  GroupAxiomReport r;
  const std::size_t n = m.dim();
  r.sites = n;
  const RecurrentSet set(m, cap);
  const std::size_t size = set.size();
  r.recurrent = size;
  const mpz_class det = exact_determinant(m);
  r.determinant = det.get_str();
  r.count_matches_determinant = (mpz_class(static_cast<unsigned long>(size)) == det);
  if (!r.count_matches_determinant) {
    r.violations.push_back("|R| = " + std::to_string(size) + " but det = " + r.determinant);
  }

  auto note = [&](std::size_t& counter, std::string msg) {
    if (counter++ < kMaxWitnesses) r.violations.push_back(std::move(msg));
  };

  std::vector<std::vector<std::uint32_t>> perm(n), inv(n);
  std::size_t bij_notes = 0, inv_notes = 0;
  for (SiteId x = 0; x < n; ++x) {
    perm[x] = addition_permutation(set, x, m);
    inv[x].assign(size, kOutside);
    std::vector<std::uint32_t> hits(size, 0);
    for (std::size_t i = 0; i < size; ++i) {
      const std::uint32_t j = perm[x][i];
      if (j == kOutside) {
        r.bijective = false;
        r.uniform_invariant = false;
        note(bij_notes, "a_" + std::to_string(x) + " maps " + config_string(set[i]) + " outside R");
        continue;
      }
      if (hits[j]++ == 0) inv[x][j] = static_cast<std::uint32_t>(i);
    }
    for (std::size_t j = 0; j < size; ++j) {
      if (hits[j] != 1) {
        r.bijective = false;
        r.uniform_invariant = false;
        note(inv_notes, "a_" + std::to_string(x) + " pushes mass " + std::to_string(hits[j]) + "/|R| onto " +
                            config_string(set[j]));
      }
    }
  }

  // Orders from the cycle structure.
  r.orders.assign(n, 0);
  if (r.bijective) {
    for (SiteId x = 0; x < n; ++x) {
      std::vector<char> seen(size, 0);
      std::uint64_t order = 1;
      for (std::size_t i = 0; i < size; ++i) {
        if (seen[i]) continue;
        std::uint64_t len = 0;
        for (std::size_t j = i; !seen[j]; j = perm[x][j]) {
          seen[j] = 1;
          ++len;
        }
        order = lcm_checked(order, len);
      }
      r.orders[x] = order;
      r.group_exponent = lcm_checked(r.group_exponent, order);
    }

    // Closure relation: a_x^{Delta_xx} * prod_{y != x} a_y^{Delta_xy} = e.
    std::size_t closure_notes = 0;
    for (SiteId x = 0; x < n; ++x) {
      const auto cols = m.row_cols(x);
      const auto vals = m.row_vals(x);
      for (std::size_t i = 0; i < size; ++i) {
        std::uint32_t j = static_cast<std::uint32_t>(i);
        for (std::int64_t t = 0; t < m.diag(x); ++t) j = perm[x][j];
        for (std::size_t k = 0; k < cols.size(); ++k) {
          for (std::int64_t t = 0; t < -vals[k]; ++t) j = inv[cols[k]][j];
        }
        if (j != i) {
          r.closure_holds = false;
          note(closure_notes, "closure relation at site " + std::to_string(x) + " fails on " + config_string(set[i]));
          break;
        }
      }
    }

    std::size_t comm_notes = 0;
    for (SiteId x = 0; x < n; ++x) {
      for (SiteId y = x + 1; y < n; ++y) {
        for (std::size_t i = 0; i < size; ++i) {
          if (perm[x][perm[y][i]] != perm[y][perm[x][i]]) {
            r.commutative = false;
            note(comm_notes, "a_" + std::to_string(x) + " and a_" + std::to_string(y) + " do not commute on " +
                                 config_string(set[i]));
            break;
          }
        }
      }
    }
  } else {
    r.closure_holds = false;
    r.commutative = false;
  }
  return r;
}

GroupAxiomReport verify_group_axioms(const VolumeGraph& v, std::size_t cap) {
  return verify_group_axioms(v.laplacian(), cap);
}

std::uint64_t orbit_length(const HeightConfig& c, SiteId x, const ToppleMatrix& m, std::uint64_t cap) {
  Stabilizer s(m);
  HeightConfig cur = c;
  for (std::uint64_t steps = 1; steps <= cap; ++steps) {
    s.add_and_relax(cur.heights(), x);
    if (cur == c) return steps;
  }
  throw ResourceError("orbit_length: no return within the cap");
}

HeightConfig inverse_addition(const HeightConfig& c, SiteId x, const ToppleMatrix& m) {
  if (c.size() != m.dim() || x >= c.size()) throw PreconditionError("inverse_addition: site or size mismatch");
  if (!is_stable(c, m) || !is_recurrent(c, m)) {
    throw PreconditionError("inverse_addition: a_x is only invertible on recurrent configurations");
  }
  std::uint64_t cap = std::numeric_limits<std::uint64_t>::max();
  if (m.dim() <= kDefaultExactDeterminantCap) {
    const mpz_class det = exact_determinant(m);
    if (mpz_fits_ulong_p(det.get_mpz_t())) cap = det.get_ui();
  }
  Stabilizer s(m);
  HeightConfig cur = c;
  HeightConfig prev;
  for (std::uint64_t steps = 1; steps <= cap; ++steps) {
    prev = cur;
    s.add_and_relax(cur.heights(), x);
    if (cur == c) return prev;
  }
  throw ResourceError("inverse_addition: orbit longer than |R_V|");
}

HeightConfig inverse_addition(const HeightConfig& c, SiteId x, const VolumeGraph& v) {
  return inverse_addition(c, x, v.laplacian());
}

}  // namespace sandpile
