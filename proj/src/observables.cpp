#include "sandpile/observables.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "sandpile/parallel.hpp"

namespace sandpile {

// ---------------------------------------------------------------------------
// Clusters

ClusterResult cluster3(const HeightConfig& c, SiteId x, const VolumeGraph& v) {
  if (c.size() != v.size() || x >= v.size()) throw PreconditionError("cluster3: site or size mismatch");
  const auto& m = v.laplacian();
  ClusterResult r;
  if (c[x] != m.diag(x)) return r;
  std::vector<char> seen(v.size(), 0);
  std::vector<SiteId> stack{x};
  seen[x] = 1;
  while (!stack.empty()) {
    const SiteId y = stack.back();
    stack.pop_back();
    r.members.push_back(y);
    if (v.is_boundary(y)) r.touched_boundary = true;
    for (SiteId z : v.neighbors(y)) {
      if (!seen[z] && c[z] == m.diag(z)) {
        seen[z] = 1;
        stack.push_back(z);
      }
    }
  }
  std::sort(r.members.begin(), r.members.end());
  return r;
}

nlohmann::json AvalancheClusterReport::to_json() const {
  nlohmann::json j{{"samples", samples}, {"maximal_at_site", maximal_at_site}, {"violations", violations},
                   {"ok", ok()}};
  if (witness) j["witness"] = witness->vec();
  return j;
}

AvalancheClusterReport avalanche_equals_cluster_check(const VolumeGraph& v, SiteId x, std::uint64_t n_samples,
                                                      const SamplerOptions& opts, std::uint64_t seed,
                                                      unsigned threads) {
  if (x >= v.size()) throw PreconditionError("avalanche_equals_cluster_check: site outside the volume");
  const RecurrentSampler sampler(v, opts);
  const ChunkPlan plan = plan_chunks(n_samples);
  std::vector<AvalancheClusterReport> parts(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    auto st = sampler.stream(derive_seed(seed, i));
    Stabilizer stab(v.laplacian());
    std::vector<ToppleCount> counts(v.size());
    HeightConfig work;
    auto& p = parts[i];
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      const HeightConfig& c = st.next();
      work = c;
      std::fill(counts.begin(), counts.end(), 0);
      stab.add_and_relax(work.heights(), x, counts);
      std::vector<SiteId> toppled;
      for (SiteId y = 0; y < counts.size(); ++y) {
        if (counts[y] > 0) toppled.push_back(y);
      }
      const ClusterResult cl = cluster3(c, x, v);
      ++p.samples;
      if (!cl.members.empty()) ++p.maximal_at_site;
      if (toppled != cl.members) {
        if (p.violations++ == 0) p.witness = c;
      }
    }
  });
  AvalancheClusterReport r;
  for (const auto& p : parts) {
    r.samples += p.samples;
    r.maximal_at_site += p.maximal_at_site;
    r.violations += p.violations;
    if (!r.witness && p.witness) r.witness = p.witness;
  }
  return r;
}

BallClusterSampler::BallClusterSampler(int d, int generations) : d_(d), n_(generations) {
  if (d < 2) throw PreconditionError("BallClusterSampler: d must be >= 2");
  if (generations < 0) throw PreconditionError("BallClusterSampler: generations must be >= 0");
  rho_.resize(static_cast<std::size_t>(generations) + 1);
  rho_[0] = 1.0 / d;
  for (std::size_t h = 1; h < rho_.size(); ++h) rho_[h] = (1 + rho_[h - 1]) / d;
}

BallClusterSampler::Draw BallClusterSampler::draw(Rng& rng) const {
  const Height top = d_ + 1;
  // Child statuses of a site at generation g; returns the weak count.
  // status: 0 origin, 1 strong, 2 weak.
  auto children = [&](int g, int status, std::vector<char>& weak) -> std::size_t {
    if (g >= n_) {
      weak.clear();
      return 0;
    }
    const std::size_t c = g == 0 ? static_cast<std::size_t>(d_ + 1) : static_cast<std::size_t>(d_);
    const double r = rho_[static_cast<std::size_t>(n_ - g - 1)];
    const double q = r / (1 + r);
    const double slack = static_cast<double>(top) - static_cast<double>(c) - (g == 0 ? 0.0 : 1.0);
    weak.assign(c, 0);
    std::size_t forced = c;
    if (status != 2) {
      const double total = slack + static_cast<double>(c) / (1 + r);
      if (uniform01(rng) * total >= slack) forced = static_cast<std::size_t>(uniform_below(rng, c));
    }
    std::size_t w = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j != forced && uniform01(rng) < q) {
        weak[j] = 1;
        ++w;
      }
    }
    return w;
  };
  auto height = [&](int status, std::size_t w_count) -> Height {
    const auto w = static_cast<Height>(w_count);
    if (status == 2) return w + 1;
    if (status == 1) return w + 2 + static_cast<Height>(uniform_below(rng, static_cast<std::uint64_t>(top - 1 - w)));
    return w + 1 + static_cast<Height>(uniform_below(rng, static_cast<std::uint64_t>(top - w)));
  };

  Draw out;
  struct Node {
    int g;
    std::vector<char> weak;  // statuses of its children
  };
  Node root{0, {}};
  const std::size_t w0 = children(0, 0, root.weak);
  if (height(0, w0) != top) return out;
  out.size = 1;
  out.touched_boundary = (n_ == 0);
  std::vector<Node> stack;
  stack.push_back(std::move(root));
  std::vector<char> scratch;
  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    for (char is_weak : node.weak) {
      const int status = is_weak ? 2 : 1;
      const int g = node.g + 1;
      const std::size_t w = children(g, status, scratch);
      if (height(status, w) != top) continue;
      ++out.size;
      if (g == n_) out.touched_boundary = true;
      stack.push_back(Node{g, scratch});
    }
  }
  return out;
}

void ClusterHistogram::add(std::uint64_t size, bool touched) {
  ++samples;
  if (size == 0) {
    ++empty;
  } else if (touched) {
    ++censored[size];
  } else {
    ++counts[size];
  }
}

void ClusterHistogram::merge(const ClusterHistogram& other) {
  samples += other.samples;
  empty += other.empty;
  for (const auto& [k, c] : other.counts) counts[k] += c;
  for (const auto& [k, c] : other.censored) censored[k] += c;
}

std::uint64_t ClusterHistogram::censored_total() const {
  std::uint64_t t = 0;
  for (const auto& [k, c] : censored) t += c;
  return t;
}

std::string ClusterHistogram::to_csv() const {
  std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> rows;
  for (const auto& [k, c] : counts) rows[k].first = c;
  for (const auto& [k, c] : censored) rows[k].second = c;
  std::ostringstream os;
  os << "size,count,censored_count\n";
  for (const auto& [k, cc] : rows) os << k << ',' << cc.first << ',' << cc.second << '\n';
  return os.str();
}

nlohmann::json TailFit::to_json() const {
  return {{"exponent", exponent}, {"stderr", std_error}, {"k_min", k_min},
          {"k_max", k_max},       {"bins", bins},        {"reliable", reliable}};
}

TailFit fit_tail(const ClusterHistogram& h, const TailFitOptions& opts) {
  if (!(opts.bin_factor > 1)) throw PreconditionError("fit_tail: bin_factor must exceed 1");
  TailFit fit;
  if (h.samples == 0 || h.counts.empty()) return fit;
  const std::uint64_t kmax_seen = h.counts.rbegin()->first;

  struct Bin {
    std::uint64_t lo, hi;  // integers lo..hi-1
    std::uint64_t count = 0;
    double log_k = 0;      // mean log k over the bin's integers
  };
  std::vector<Bin> bins;
  double edge = 1;
  std::uint64_t lo = 1;
  while (lo <= kmax_seen) {
    edge *= opts.bin_factor;
    const std::uint64_t hi = edge >= 0x1p63 ? std::numeric_limits<std::uint64_t>::max()
                                            : static_cast<std::uint64_t>(std::ceil(edge - 1e-9));
    if (hi <= lo) continue;
    Bin b{lo, hi};
    double acc = 0;
    if (hi - lo <= 4096) {
      for (std::uint64_t k = lo; k < hi; ++k) acc += std::log(static_cast<double>(k));
    } else {
      acc = std::lgamma(static_cast<double>(hi)) - std::lgamma(static_cast<double>(lo));
    }
    b.log_k = acc / static_cast<double>(hi - lo);
    bins.push_back(b);
    lo = hi;
  }
  for (const auto& [k, c] : h.counts) {
    auto it = std::upper_bound(bins.begin(), bins.end(), k, [](std::uint64_t v, const Bin& b) { return v < b.hi; });
    if (it != bins.end()) it->count += c;
  }

  std::vector<double> xs, ys, ws;
  for (const auto& b : bins) {
    if (b.lo < opts.k_min) continue;
    if (b.count < opts.min_count) break;
    const double density = static_cast<double>(b.count) / (static_cast<double>(h.samples) * static_cast<double>(b.hi - b.lo));
    xs.push_back(b.log_k);
    ys.push_back(std::log(density));
    ws.push_back(static_cast<double>(b.count));
    if (fit.k_min == 0) fit.k_min = b.lo;
    fit.k_max = b.hi - 1;
  }
  fit.bins = xs.size();
  if (xs.size() < std::max<std::size_t>(opts.min_bins, 3)) return fit;

  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sw += ws[i];
    sx += ws[i] * xs[i];
    sy += ws[i] * ys[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += ws[i] * (xs[i] - xm) * (xs[i] - xm);
    sxy += ws[i] * (xs[i] - xm) * (ys[i] - ym);
  }
  const double slope = sxy / sxx;
  double rss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (ym + slope * (xs[i] - xm));
    rss += ws[i] * r * r;
  }
  fit.exponent = -slope;
  fit.std_error = std::sqrt(rss / static_cast<double>(xs.size() - 2) / sxx);
  fit.reliable = true;
  return fit;
}

ClusterHistogram cluster_size_distribution(const BallClusterSampler& s, std::uint64_t n_samples, std::uint64_t seed,
                                           unsigned threads) {
  const ChunkPlan plan = plan_chunks(n_samples);
  std::vector<ClusterHistogram> parts(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      const auto d = s.draw(rng);
      parts[i].add(d.size, d.touched_boundary);
    }
  });
  ClusterHistogram h;
  for (const auto& p : parts) h.merge(p);
  return h;
}

ClusterHistogram cluster_size_distribution(const VolumeGraph& v, std::uint64_t n_samples, const SamplerOptions& opts,
                                           std::uint64_t seed, unsigned threads) {
  const RecurrentSampler sampler(v, opts);
  const ChunkPlan plan = plan_chunks(n_samples);
  std::vector<ClusterHistogram> parts(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    auto st = sampler.stream(derive_seed(seed, i));
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      const ClusterResult c = cluster3(st.next(), v.origin(), v);
      parts[i].add(c.size(), c.touched_boundary);
    }
  });
  ClusterHistogram h;
  for (const auto& p : parts) h.merge(p);
  return h;
}

// ---------------------------------------------------------------------------
// Toppling numbers and Green's function

std::vector<EmpiricalEstimate> expected_topplings_mc(const VolumeGraph& v, SiteId x,
                                                     const std::vector<SiteId>& targets, std::uint64_t n_samples,
                                                     const SamplerOptions& opts, std::uint64_t seed,
                                                     unsigned threads) {
  if (x >= v.size()) throw PreconditionError("expected_topplings_mc: source outside the volume");
  for (SiteId y : targets) {
    if (y >= v.size()) throw PreconditionError("expected_topplings_mc: target outside the volume");
  }
  if (n_samples == 0) throw PreconditionError("expected_topplings_mc: n_samples must be positive");
  const RecurrentSampler sampler(v, opts);
  const ChunkPlan plan = plan_chunks(n_samples);
  const std::size_t T = targets.size();
  std::vector<std::vector<ChunkMoments>> mom(T, std::vector<ChunkMoments>(plan.count()));
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    auto st = sampler.stream(derive_seed(seed, i));
    Stabilizer stab(v.laplacian());
    std::vector<ToppleCount> counts(v.size());
    HeightConfig work;
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      work = st.next();
      std::fill(counts.begin(), counts.end(), 0);
      stab.add_and_relax(work.heights(), x, counts);
      for (std::size_t t = 0; t < T; ++t) {
        const auto c = static_cast<double>(counts[targets[t]]);
        auto& m = mom[t][i];
        m.sum += c;
        m.sum_sq += c * c;
        ++m.n;
      }
    }
  });
  std::vector<EmpiricalEstimate> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) out.push_back(merge_moments(mom[t], estimate_method(opts.kind)));
  return out;
}

EmpiricalEstimate expected_topplings_mc(const VolumeGraph& v, SiteId x, SiteId y, std::uint64_t n_samples,
                                        const SamplerOptions& opts, std::uint64_t seed, unsigned threads) {
  return expected_topplings_mc(v, x, std::vector<SiteId>{y}, n_samples, opts, seed, threads).front();
}

namespace {

Eigen::SparseMatrix<double> to_sparse(const ToppleMatrix& m) {
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
  return a;
}

using Cholesky = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>;

void factor(Cholesky& llt, const ToppleMatrix& m) {
  llt.compute(to_sparse(m));
  if (llt.info() != Eigen::Success) {
    throw StabilizationError("Green's function: toppling matrix is singular or not positive definite");
  }
}

}  // namespace

Eigen::VectorXd greens_column(const ToppleMatrix& m, SiteId y) {
  if (y >= m.dim()) throw PreconditionError("greens_column: site outside the volume");
  Cholesky llt;
  factor(llt, m);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.dim()));
  e[y] = 1;
  return llt.solve(e);
}

Eigen::MatrixXd greens_exact(const ToppleMatrix& m, std::size_t cap) {
  if (m.dim() > cap) {
    throw ResourceError("greens_exact: " + std::to_string(m.dim()) + " sites exceed the dense cap of " +
                        std::to_string(cap) + "; use greens_column");
  }
  Cholesky llt;
  factor(llt, m);
  const auto n = static_cast<Eigen::Index>(m.dim());
  Eigen::MatrixXd g(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index y = 0; y < n; ++y) {
    e[y] = 1;
    g.col(y) = llt.solve(e);
    e[y] = 0;
  }
  return g;
}

Eigen::MatrixXd greens_exact(const VolumeGraph& v, std::size_t cap) { return greens_exact(v.laplacian(), cap); }

double greens_identity_residual(const ToppleMatrix& m, const Eigen::MatrixXd& g) {
  const auto n = static_cast<Eigen::Index>(m.dim());
  if (g.rows() != n || g.cols() != n) throw PreconditionError("greens_identity_residual: shape mismatch");
  double worst = 0;
  for (SiteId x = 0; x < m.dim(); ++x) {
    Eigen::RowVectorXd row = static_cast<double>(m.diag(x)) * g.row(x);
    const auto cols = m.row_cols(x);
    const auto vals = m.row_vals(x);
    for (std::size_t k = 0; k < cols.size(); ++k) row += static_cast<double>(vals[k]) * g.row(cols[k]);
    row[x] -= 1;
    worst = std::max(worst, row.cwiseAbs().maxCoeff());
  }
  return worst;
}

nlohmann::json GreensDecayReport::to_json() const {
  nlohmann::json j;
  j["d"] = d;
  j["distance_range"] = {first_distance, last_distance};
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"generations", r.generations},
                  {"G_by_distance", r.by_distance},
                  {"scaled", r.scaled},
                  {"symmetry_spread", r.symmetry_spread},
                  {"variation", r.variation}});
  }
  j["rows"] = rs;
  j["monotone_in_volume"] = monotone_in_volume;
  j["constant_estimate"] = constant_estimate;
  return j;
}

GreensDecayReport greens_decay_check(int d, const std::vector<int>& generations, int first_distance,
                                     int last_distance) {
  if (first_distance < 0 || last_distance < first_distance) throw PreconditionError("greens_decay_check: bad range");
  GreensDecayReport rep;
  rep.d = d;
  rep.first_distance = first_distance;
  rep.last_distance = last_distance;
  for (int n : generations) {
    const VolumeGraph v = build_tree_volume(d, n);
    const Eigen::VectorXd g0 = greens_column(v.laplacian(), v.origin());
    GreensDecayRow row;
    row.generations = n;
    const int max_dist = std::max(0, n - 2);
    std::vector<double> lo(static_cast<std::size_t>(max_dist) + 1, INFINITY), hi(lo.size(), -INFINITY);
    std::vector<double> first(lo.size(), NAN);
    for (SiteId x = 0; x < v.size(); ++x) {
      const auto g = static_cast<std::size_t>(v.generation(x));
      if (g >= lo.size()) continue;
      const double val = g0[static_cast<Eigen::Index>(x)];
      if (std::isnan(first[g])) first[g] = val;
      lo[g] = std::min(lo[g], val);
      hi[g] = std::max(hi[g], val);
    }
    for (std::size_t g = 0; g < lo.size(); ++g) {
      row.by_distance.push_back(first[g]);
      row.scaled.push_back(first[g] * std::pow(static_cast<double>(d), static_cast<double>(g)));
      row.symmetry_spread = std::max(row.symmetry_spread, (hi[g] - lo[g]) / hi[g]);
    }
    double smin = INFINITY, smax = -INFINITY;
    for (int g = first_distance; g <= std::min(last_distance, max_dist); ++g) {
      smin = std::min(smin, row.scaled[static_cast<std::size_t>(g)]);
      smax = std::max(smax, row.scaled[static_cast<std::size_t>(g)]);
    }
    row.variation = smin <= smax ? (smax - smin) / smin : NAN;
    if (!rep.rows.empty()) {
      const auto& prev = rep.rows.back();
      const std::size_t common = std::min(prev.by_distance.size(), row.by_distance.size());
      for (std::size_t g = 0; g < common; ++g) {
        if (row.by_distance[g] < prev.by_distance[g] && prev.generations < n) rep.monotone_in_volume = false;
      }
    }
    rep.rows.push_back(std::move(row));
  }
  if (!rep.rows.empty()) {
    const auto& last = rep.rows.back();
    double acc = 0;
    int cnt = 0;
    for (int g = first_distance; g <= last_distance && g < static_cast<int>(last.scaled.size()); ++g) {
      acc += last.scaled[static_cast<std::size_t>(g)];
      ++cnt;
    }
    rep.constant_estimate = cnt ? acc / cnt : NAN;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Correlations

EmpiricalEstimate truncated_correlation(const LocalObservable& f, const LocalObservable& g, const VolumeGraph& v,
                                        std::uint64_t n_samples, const SamplerOptions& opts, std::uint64_t seed,
                                        unsigned threads) {
  for (const auto* o : {&f, &g}) {
    for (SiteId x : o->support) {
      if (x >= v.size()) throw PreconditionError("truncated_correlation: observable " + o->name + " escapes the volume");
    }
  }
  const RecurrentSampler sampler(v, opts);
  const ChunkPlan plan = plan_chunks(n_samples);
  if (plan.count() < 2) throw PreconditionError("truncated_correlation: the jackknife needs more than 256 samples");
  struct Sums {
    double f = 0, g = 0, fg = 0;
    double n = 0;
  };
  std::vector<Sums> parts(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    auto st = sampler.stream(derive_seed(seed, i));
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      const HeightConfig& c = st.next();
      const double a = f.eval(c), b = g.eval(c);
      parts[i].f += a;
      parts[i].g += b;
      parts[i].fg += a * b;
      parts[i].n += 1;
    }
  });
  Sums all;
  for (const auto& p : parts) {
    all.f += p.f;
    all.g += p.g;
    all.fg += p.fg;
    all.n += p.n;
  }
  auto cov = [](const Sums& s) { return s.fg / s.n - (s.f / s.n) * (s.g / s.n); };
  EmpiricalEstimate e;
  e.method = estimate_method(opts.kind);
  e.n_samples = n_samples;
  e.mean = cov(all);
  const auto B = static_cast<double>(parts.size());
  std::vector<double> loo;
  loo.reserve(parts.size());
  for (const auto& p : parts) loo.push_back(cov(Sums{all.f - p.f, all.g - p.g, all.fg - p.fg, all.n - p.n}));
  double mean_loo = 0;
  for (double t : loo) mean_loo += t;
  mean_loo /= B;
  double acc = 0;
  for (double t : loo) acc += (t - mean_loo) * (t - mean_loo);
  e.std_error = std::sqrt((B - 1) / B * acc);
  return e;
}

// ---------------------------------------------------------------------------
// Transfer matrices

nlohmann::json TransferMatrixReport::to_json() const {
  return {{"n", n},
          {"product", {{product(0, 0), product(0, 1)}, {product(1, 0), product(1, 1)}}},
          {"determinant", determinant},
          {"trace", trace},
          {"lambda_max", lambda_max},
          {"lambda_min", lambda_min},
          {"eigen_ratio", eigen_ratio},
          {"det_over_tr2", det_over_tr2},
          {"bound", bound},
          {"holds", holds}};
}

TransferMatrixReport transfer_matrix_bound(const std::vector<double>& gamma) {
  TransferMatrixReport r;
  r.n = gamma.size();
  r.product = Eigen::Matrix2d::Identity();
  r.determinant = 1;
  for (double g : gamma) {
    if (!(g >= 0 && g <= 1)) throw PreconditionError("transfer_matrix_bound: gamma must lie in [0, 1]");
    Eigen::Matrix2d mi;
    mi << 1 + g, 1 + g, 1, 2 + g;
    r.product = r.product * mi;
    r.determinant *= (1 + g) * (1 + g);
  }
  r.trace = r.product.trace();
  const double disc = std::max(0.0, r.trace * r.trace - 4 * r.determinant);
  r.lambda_max = (r.trace + std::sqrt(disc)) / 2;
  r.lambda_min = r.determinant / r.lambda_max;
  r.eigen_ratio = r.lambda_min / r.lambda_max;
  r.det_over_tr2 = r.determinant / (r.trace * r.trace);
  r.bound = std::pow(4.0 / 9.0, static_cast<double>(r.n));
  r.holds = r.det_over_tr2 <= r.bound;
  return r;
}

}  // namespace sandpile
