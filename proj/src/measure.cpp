#include "sandpile/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sandpile/parallel.hpp"

namespace sandpile {

std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::enumeration:
      return "enumeration";
    case SamplerKind::mcmc:
      return "mcmc";
    case SamplerKind::tree_exact:
      return "tree_exact";
  }
  return "?";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "enumeration") return SamplerKind::enumeration;
  if (s == "mcmc") return SamplerKind::mcmc;
  if (s == "tree_exact") return SamplerKind::tree_exact;
  throw PreconditionError("unknown sampler '" + s + "' (expected enumeration, mcmc or tree_exact)");
}

std::string to_string(EstimateMethod m) {
  switch (m) {
    case EstimateMethod::exact:
      return "exact";
    case EstimateMethod::mcmc:
      return "mcmc";
    case EstimateMethod::iid_enumeration:
      return "iid-enumeration";
    case EstimateMethod::iid_tree:
      return "iid-tree";
  }
  return "?";
}

EstimateMethod estimate_method(SamplerKind k) {
  switch (k) {
    case SamplerKind::enumeration:
      return EstimateMethod::iid_enumeration;
    case SamplerKind::mcmc:
      return EstimateMethod::mcmc;
    case SamplerKind::tree_exact:
      return EstimateMethod::iid_tree;
  }
  return EstimateMethod::mcmc;
}

nlohmann::json EmpiricalEstimate::to_json() const {
  return {{"mean", mean}, {"stderr", std_error}, {"n_samples", n_samples}, {"method", to_string(method)}};
}

// ---------------------------------------------------------------------------
// Exact tree sampler

TreeBranchLaw::TreeBranchLaw(const VolumeGraph& v) {
  if (v.kind() != LatticeKind::tree) throw PreconditionError("tree_exact sampler requires a tree volume");
  const std::size_t n = v.size();
  d_max_ = v.full_degree();
  parent_.assign(n, 0);
  offsets_.assign(n + 1, 0);
  for (SiteId x = 0; x < n; ++x) {
    std::size_t c = 0;
    for (SiteId y : v.neighbors(x)) {
      if (v.generation(y) == v.generation(x) + 1) {
        ++c;
      } else {
        parent_[x] = y;
      }
    }
    offsets_[x + 1] = offsets_[x] + c;
  }
  kids_.resize(offsets_[n]);
  for (SiteId x = 0; x < n; ++x) {
    std::size_t k = offsets_[x];
    for (SiteId y : v.neighbors(x)) {
      if (v.generation(y) == v.generation(x) + 1) kids_[k++] = y;
    }
  }
  rho_.assign(n, 0);
  slack_.assign(n, 0);
  total_.assign(n, 0);
  weak_p_.assign(kids_.size(), 0);
  force_w_.assign(kids_.size(), 0);
  // Children have larger ids than their parent.
  for (std::size_t i = n; i-- > 0;) {
    const auto x = static_cast<SiteId>(i);
    const auto c = static_cast<double>(offsets_[x + 1] - offsets_[x]);
    slack_[x] = static_cast<double>(d_max_) - c - (x == 0 ? 0.0 : 1.0);
    double t = slack_[x];
    for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k) {
      const double r = rho_[kids_[k]];
      weak_p_[k] = r / (1 + r);
      force_w_[k] = 1 / (1 + r);
      t += force_w_[k];
    }
    total_[x] = t;
    rho_[x] = 1 / t;
  }
}

std::size_t TreeBranchLaw::draw_children(SiteId x, int x_status, std::vector<char>& weak, Rng& rng) const {
  const std::size_t b = offsets_[x];
  const std::size_t c = offsets_[x + 1] - b;
  weak.assign(c, 0);
  std::size_t forced = c;  // index of the child forced strong, c if none
  if (x_status != 2) {
    double u = uniform01(rng) * total_[x] - slack_[x];
    if (u >= 0) {
      forced = c - 1;
      for (std::size_t j = 0; j < c; ++j) {
        u -= force_w_[b + j];
        if (u < 0) {
          forced = j;
          break;
        }
      }
    }
  }
  std::size_t w = 0;
  for (std::size_t j = 0; j < c; ++j) {
    if (j == forced) continue;
    if (uniform01(rng) < weak_p_[b + j]) {
      weak[j] = 1;
      ++w;
    }
  }
  return w;
}

Height TreeBranchLaw::draw_height(SiteId, int x_status, std::size_t weak_children, Rng& rng) const {
  const auto w = static_cast<Height>(weak_children);
  switch (x_status) {
    case 2:
      return w + 1;
    case 1:
      return w + 2 + static_cast<Height>(uniform_below(rng, static_cast<std::uint64_t>(d_max_ - 1 - w)));
    default:
      return w + 1 + static_cast<Height>(uniform_below(rng, static_cast<std::uint64_t>(d_max_ - w)));
  }
}

void TreeBranchLaw::sample(std::span<Height> out, std::vector<int>& status, Rng& rng) const {
  const std::size_t n = size();
  status.assign(n, 1);
  status[0] = 0;
  std::vector<char> weak;
  for (SiteId x = 0; x < n; ++x) {
    const std::size_t w = draw_children(x, status[x], weak, rng);
    const auto kids = children(x);
    for (std::size_t j = 0; j < kids.size(); ++j) status[kids[j]] = weak[j] ? 2 : 1;
    out[x] = draw_height(x, status[x], w, rng);
  }
}

// ---------------------------------------------------------------------------
// Samplers

RecurrentSampler::RecurrentSampler(const VolumeGraph& v, SamplerOptions opts) : v_(&v), opts_(opts) {
  if (!opts_.burn_in) opts_.burn_in = 10 * static_cast<std::uint64_t>(v.size());
  if (!opts_.thinning) opts_.thinning = static_cast<std::uint64_t>(v.size());
  switch (opts_.kind) {
    case SamplerKind::mcmc:
      if (*opts_.burn_in == 0) {
        throw PreconditionError("mcmc sampler with burn_in = 0 would return eta_max itself");
      }
      if (*opts_.thinning == 0) throw PreconditionError("mcmc sampler needs thinning >= 1");
      break;
    case SamplerKind::enumeration:
      recurrent_ = std::make_shared<const std::vector<HeightConfig>>(
          enumerate_recurrent(v.laplacian(), opts_.enumeration_cap));
      break;
    case SamplerKind::tree_exact:
      tree_ = std::make_shared<const TreeBranchLaw>(v);
      break;
  }
}

SamplerStream RecurrentSampler::stream(std::uint64_t seed) const { return SamplerStream(*this, seed); }

SamplerStream::SamplerStream(const RecurrentSampler& s, std::uint64_t seed) : s_(&s), rng_(seed) {
  const auto& m = s.volume().laplacian();
  if (s.kind() == SamplerKind::mcmc) {
    state_ = HeightConfig::maximal(m);
    stab_ = std::make_unique<Stabilizer>(m);
  } else {
    state_ = HeightConfig::constant(m.dim(), 1);
  }
}

// Lazy steps: hold with probability 1/2. The plain addition chain can be
// periodic (on trees every addition flips the parity of the total height),
// and a fixed even thinning would then never leave one coset of R_V.
void SamplerStream::chain_steps(std::uint64_t n) {
  const std::uint64_t sites = state_.size();
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t u = uniform_below(rng_, 2 * sites);
    if (u < sites) stab_->add_and_relax(state_.heights(), static_cast<SiteId>(u));
  }
}

const HeightConfig& SamplerStream::next() {
  switch (s_->kind()) {
    case SamplerKind::mcmc:
      chain_steps(started_ ? s_->thinning() : s_->burn_in());
      started_ = true;
      break;
    case SamplerKind::enumeration:
      state_ = (*s_->recurrent_)[uniform_below(rng_, s_->recurrent_->size())];
      break;
    case SamplerKind::tree_exact:
      s_->tree_->sample(state_.heights(), scratch_, rng_);
      break;
  }
  return state_;
}

HeightConfig sample_uniform_recurrent(const VolumeGraph& v, Rng& rng, const SamplerOptions& opts) {
  const RecurrentSampler s(v, opts);
  auto st = s.stream(rng());
  return st.next();
}

// ---------------------------------------------------------------------------
// Observables and expectations

LocalObservable LocalObservable::height_at(SiteId x) {
  return {"height(" + std::to_string(x) + ")", {x}, [x](const HeightConfig& c) { return static_cast<double>(c[x]); }};
}

LocalObservable LocalObservable::indicator_height(SiteId x, Height h) {
  return {"1[height(" + std::to_string(x) + ")=" + std::to_string(h) + "]",
          {x},
          [x, h](const HeightConfig& c) { return c[x] == h ? 1.0 : 0.0; }};
}

LocalObservable LocalObservable::constant(double value) {
  return {"constant", {}, [value](const HeightConfig&) { return value; }};
}

namespace {

void check_support(const LocalObservable& f, const VolumeGraph& v) {
  for (SiteId x : f.support) {
    if (x >= v.size()) {
      throw PreconditionError("observable " + f.name + " depends on site " + std::to_string(x) +
                              " outside the volume");
    }
  }
}

}  // namespace

EmpiricalEstimate merge_moments(const std::vector<ChunkMoments>& chunks, EstimateMethod method) {
  EmpiricalEstimate e;
  e.method = method;
  double sum = 0, sum_sq = 0;
  std::uint64_t n = 0;
  for (const auto& c : chunks) {
    sum += c.sum;
    sum_sq += c.sum_sq;
    n += c.n;
  }
  e.n_samples = n;
  if (n == 0) return e;
  e.mean = sum / static_cast<double>(n);
  if (method == EstimateMethod::exact) return e;
  const auto nn = static_cast<double>(n);
  if (method == EstimateMethod::mcmc && chunks.size() >= 8) {
    // Batch means over independent chains.
    double acc = 0;
    for (const auto& c : chunks) {
      if (c.n == 0) continue;
      const double m = c.sum / static_cast<double>(c.n);
      acc += static_cast<double>(c.n) * (m - e.mean) * (m - e.mean);
    }
    e.std_error = std::sqrt(acc / (static_cast<double>(chunks.size() - 1) * nn));
  } else if (n > 1) {
    const double var = std::max(0.0, (sum_sq - nn * e.mean * e.mean) / (nn - 1));
    e.std_error = std::sqrt(var / nn);
  }
  return e;
}

EmpiricalEstimate expectation_exact(const LocalObservable& f, const VolumeGraph& v, std::size_t cap) {
  check_support(f, v);
  double sum = 0;
  std::uint64_t n = 0;
  for_each_recurrent(v.laplacian(), [&](const HeightConfig& c) {
    sum += f.eval(c);
    ++n;
  }, cap);
  EmpiricalEstimate e;
  e.method = EstimateMethod::exact;
  e.n_samples = n;
  e.mean = n ? sum / static_cast<double>(n) : 0.0;
  return e;
}

EmpiricalEstimate expectation(const LocalObservable& f, const VolumeGraph& v, std::uint64_t n_samples,
                              const SamplerOptions& opts, std::uint64_t seed, unsigned threads) {
  check_support(f, v);
  if (n_samples == 0) throw PreconditionError("expectation: n_samples must be positive");
  const RecurrentSampler sampler(v, opts);
  const ChunkPlan plan = plan_chunks(n_samples);
  std::vector<ChunkMoments> chunks(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    auto st = sampler.stream(derive_seed(seed, i));
    ChunkMoments& m = chunks[i];
    for (std::size_t k = plan.begin(i); k < plan.end(i); ++k) {
      const double y = f.eval(st.next());
      m.sum += y;
      m.sum_sq += y * y;
      ++m.n;
    }
  });
  return merge_moments(chunks, estimate_method(opts.kind));
}

// ---------------------------------------------------------------------------
// Boundary identity

bool BoundaryIdentityReport::ok(double z_max) const {
  if (enumeration_matches && !*enumeration_matches) return false;
  if (monte_carlo && !(std::abs(z_score) <= z_max)) return false;
  return true;
}

nlohmann::json BoundaryIdentityReport::to_json() const {
  nlohmann::json j;
  j["small_sites"] = small_sites;
  j["exact_ratio"] = exact_ratio;
  j["exact_value"] = exact_value;
  j["approximate_ratio"] = approximate_ratio;
  if (enumerated_ratio) j["enumerated_ratio"] = *enumerated_ratio;
  if (enumeration_matches) j["enumeration_matches"] = *enumeration_matches;
  if (monte_carlo) {
    j["monte_carlo"] = monte_carlo->to_json();
    j["z_score"] = z_score;
  }
  j["ok"] = ok();
  return j;
}

BoundaryIdentityReport boundary_height3_identity(const VolumeGraph& v_big, std::uint64_t n_samples,
                                                 const SamplerOptions& opts, std::uint64_t seed,
                                                 unsigned threads) {
  if (v_big.size() < 2) throw PreconditionError("boundary identity needs at least two sites");
  const auto last = static_cast<SiteId>(v_big.size() - 1);
  if (!v_big.is_boundary(last)) throw PreconditionError("boundary identity: the added site must be a boundary site");
  const VolumeGraph v_small = prefix_volume(v_big, v_big.size() - 1);
  const Height top = v_big.laplacian().diag(last);

  BoundaryIdentityReport r;
  r.small_sites = v_small.size();
  const RecurrentCount cs = count_recurrent(v_small);
  const RecurrentCount cb = count_recurrent(v_big);
  mpq_class exact_q;
  if (cs.exact && cb.exact) {
    exact_q = mpq_class(*cs.exact, *cb.exact);
    exact_q.canonicalize();
    r.exact_ratio = exact_q.get_str();
    r.exact_value = exact_q.get_d();
  } else {
    r.approximate_ratio = true;
    r.exact_value = std::exp(cs.log_count - cb.log_count);
    r.exact_ratio = std::to_string(r.exact_value);
  }

  if (v_big.size() <= opts.enumeration_cap && !r.approximate_ratio) {
    unsigned long hits = 0, total = 0;
    for_each_recurrent(v_big.laplacian(), [&](const HeightConfig& c) {
      ++total;
      if (c[last] == top) ++hits;
    }, opts.enumeration_cap);
    mpq_class q(hits, total);
    q.canonicalize();
    r.enumerated_ratio = q.get_str();
    r.enumeration_matches = (q == exact_q);
  }

  if (n_samples > 0) {
    r.monte_carlo = expectation(LocalObservable::indicator_height(last, top), v_big, n_samples, opts, seed, threads);
    const double se = r.monte_carlo->std_error;
    const double diff = r.monte_carlo->mean - r.exact_value;
    r.z_score = se > 0 ? diff / se : (diff == 0 ? 0.0 : std::copysign(INFINITY, diff));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cauchy-net diagnostic

nlohmann::json CauchyNetReport::to_json() const {
  nlohmann::json j;
  j["sizes"] = sizes;
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : means) ms.push_back(m.to_json());
  j["means"] = ms;
  j["differences"] = differences;
  j["difference_stderr"] = difference_stderr;
  j["trend_violations"] = trend_violations;
  j["decreasing"] = decreasing;
  return j;
}

CauchyNetReport cauchy_net_diagnostic(const LocalObservable& f, const std::vector<VolumeGraph>& schedule,
                                      std::uint64_t n_samples, const SamplerOptions& opts, std::uint64_t seed,
                                      unsigned threads) {
  if (schedule.size() < 2) throw PreconditionError("cauchy_net_diagnostic needs at least two volumes");
  if (n_samples == 0) throw PreconditionError("cauchy_net_diagnostic: n_samples must be positive");
  for (const auto& v : schedule) check_support(f, v);
  const std::size_t K = schedule.size();
  CauchyNetReport r;
  for (const auto& v : schedule) r.sizes.push_back(v.size());
  const EstimateMethod method = estimate_method(opts.kind);

  if (opts.kind == SamplerKind::mcmc) {
    // Chains cannot be paired sample by sample; volumes share chunk seeds only.
    for (const auto& v : schedule) r.means.push_back(expectation(f, v, n_samples, opts, seed, threads));
    for (std::size_t k = 0; k + 1 < K; ++k) {
      r.differences.push_back(std::abs(r.means[k].mean - r.means[k + 1].mean));
      r.difference_stderr.push_back(std::hypot(r.means[k].std_error, r.means[k + 1].std_error));
    }
  } else {
    // One stream per (sample); the same stream seed on every volume.
    std::vector<RecurrentSampler> samplers;
    samplers.reserve(K);
    for (const auto& v : schedule) samplers.emplace_back(v, opts);
    const ChunkPlan plan = plan_chunks(n_samples);
    std::vector<std::vector<ChunkMoments>> level(K, std::vector<ChunkMoments>(plan.count()));
    std::vector<std::vector<ChunkMoments>> diff(K - 1, std::vector<ChunkMoments>(plan.count()));
    parallel_for(plan.count(), threads, [&](std::size_t i) {
      std::vector<double> y(K);
      for (std::size_t s = plan.begin(i); s < plan.end(i); ++s) {
        const std::uint64_t sd = derive_seed(seed, s, 0xCA0C);
        for (std::size_t k = 0; k < K; ++k) {
          auto st = samplers[k].stream(sd);
          y[k] = f.eval(st.next());
          auto& m = level[k][i];
          m.sum += y[k];
          m.sum_sq += y[k] * y[k];
          ++m.n;
        }
        for (std::size_t k = 0; k + 1 < K; ++k) {
          const double dd = y[k] - y[k + 1];
          auto& m = diff[k][i];
          m.sum += dd;
          m.sum_sq += dd * dd;
          ++m.n;
        }
      }
    });
    for (std::size_t k = 0; k < K; ++k) r.means.push_back(merge_moments(level[k], method));
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const EmpiricalEstimate e = merge_moments(diff[k], method);
      r.differences.push_back(std::abs(e.mean));
      r.difference_stderr.push_back(e.std_error);
    }
  }
  for (std::size_t k = 0; k + 2 < K; ++k) {
    const double band = 2 * std::hypot(r.difference_stderr[k], r.difference_stderr[k + 1]);
    if (r.differences[k + 1] - r.differences[k] > band) r.trend_violations.push_back(k);
  }
  r.decreasing = r.trend_violations.empty();
  return r;
}

// ---------------------------------------------------------------------------
// Chain diagnostics

nlohmann::json ChainVisitReport::to_json() const {
  return {{"stable_states", stable_states},     {"allowed_states", allowed_states},
          {"allowed_visited", allowed_visited}, {"forbidden_visits", forbidden_visits},
          {"start_forbidden", first_state_forbidden}, {"ok", ok()}};
}

ChainVisitReport chain_visit_check(const VolumeGraph& v, std::uint64_t burn_in, std::uint64_t steps,
                                   std::uint64_t seed) {
  const auto& m = v.laplacian();
  const std::size_t n = m.dim();
  if (n > kDefaultEnumerationCap) throw ResourceError("chain_visit_check: volume too large to index");
  std::uint64_t states = 1;
  for (SiteId x = 0; x < n; ++x) states *= static_cast<std::uint64_t>(m.diag(x));

  std::vector<char> allowed(states, 0);
  for_each_recurrent(m, [&](const HeightConfig& c) { allowed[stable_code(c, m)] = 1; }, n);

  ChainVisitReport r;
  r.stable_states = states;
  r.allowed_states = static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), 1));
  HeightConfig c = HeightConfig::constant(n, 1);
  r.first_state_forbidden = !allowed[stable_code(c, m)];
  Rng rng(seed);
  Stabilizer s(m);
  for (std::uint64_t i = 0; i < burn_in; ++i) s.add_and_relax(c.heights(), static_cast<SiteId>(uniform_below(rng, n)));
  std::vector<char> seen(states, 0);
  for (std::uint64_t i = 0; i < steps; ++i) {
    s.add_and_relax(c.heights(), static_cast<SiteId>(uniform_below(rng, n)));
    const std::uint64_t code = stable_code(c, m);
    if (!allowed[code]) ++r.forbidden_visits;
    seen[code] = 1;
  }
  for (std::uint64_t k = 0; k < states; ++k) {
    if (allowed[k] && seen[k]) ++r.allowed_visited;
  }
  return r;
}

nlohmann::json UniformityReport::to_json() const {
  return {{"recurrent", recurrent},
          {"draws", draws},
          {"non_recurrent_draws", non_recurrent_draws},
          {"total_variation", total_variation},
          {"chi_square", chi_square},
          {"degrees_of_freedom", degrees_of_freedom}};
}

UniformityReport uniformity_check(const VolumeGraph& v, std::uint64_t draws, const SamplerOptions& opts,
                                  std::uint64_t seed) {
  const RecurrentSet set(v.laplacian(), opts.enumeration_cap);
  const RecurrentSampler sampler(v, opts);
  auto st = sampler.stream(seed);
  std::vector<std::uint64_t> counts(set.size(), 0);
  UniformityReport r;
  r.recurrent = set.size();
  r.draws = draws;
  for (std::uint64_t i = 0; i < draws; ++i) {
    const auto idx = set.index_of(st.next());
    if (idx) {
      ++counts[*idx];
    } else {
      ++r.non_recurrent_draws;
    }
  }
  const double expect = static_cast<double>(draws) / static_cast<double>(set.size());
  double tv = static_cast<double>(r.non_recurrent_draws) / static_cast<double>(draws);
  for (std::uint64_t c : counts) {
    const double dc = static_cast<double>(c) - expect;
    tv += std::abs(dc) / static_cast<double>(draws);
    r.chi_square += dc * dc / expect;
  }
  r.total_variation = tv / 2;
  r.degrees_of_freedom = set.size() - 1;
  return r;
}

}  // namespace sandpile
