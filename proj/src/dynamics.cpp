#include "sandpile/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sandpile/observables.hpp"
#include "sandpile/parallel.hpp"

namespace sandpile {

namespace {

constexpr std::uint64_t kEventStream = 0xE7E7;
constexpr std::uint64_t kStartStream = 1;
constexpr std::uint64_t kRunEventStream = 2;

double generation_size(int d, int k) {
  return k == 0 ? 1.0 : (d + 1) * std::pow(static_cast<double>(d), k - 1);
}

void require_summable(const RateFunction& phi, int d, const DynamicsOptions& opts) {
  if (opts.allow_nonsummable) return;
  const SummabilityReport s = summability_check(phi, d);
  if (!s.summable) {
    throw RefusedError("refusing non-summable addition rate " + phi.describe() +
                       ": sum_x phi(x) 2^{-|x|} must be finite (" + s.diagnosis + ")");
  }
}

void check_schedule(const std::vector<VolumeGraph>& schedule, const std::vector<SiteId>& window) {
  if (schedule.empty()) throw PreconditionError("volume schedule is empty");
  for (std::size_t k = 0; k + 1 < schedule.size(); ++k) {
    const auto& a = schedule[k];
    const auto& b = schedule[k + 1];
    if (a.size() > b.size() || a.kind() != b.kind() || a.d() != b.d()) {
      throw PreconditionError("volume schedule must be increasing and of one lattice");
    }
    for (SiteId x = 0; x < a.size(); ++x) {
      if (a.generation(x) != b.generation(x)) {
        throw PreconditionError("volume schedule must consist of nested enumeration prefixes");
      }
    }
  }
  for (SiteId x : window) {
    if (x >= schedule.front().size()) throw PreconditionError("window must lie inside the smallest volume");
  }
}

std::vector<Height> window_values(const HeightConfig& c, const std::vector<SiteId>& window) {
  std::vector<Height> out;
  out.reserve(window.size());
  for (SiteId x : window) out.push_back(c[x]);
  return out;
}

/// Runs the truncated product on each volume with the events of its sites.
WindowRun coupled_products(const HeightConfig& eta, const PoissonEventLog& events,
                           const std::vector<SiteId>& window, const std::vector<VolumeGraph>& schedule,
                           std::vector<ToppleLedger>* ledgers) {
  WindowRun run;
  for (const auto& v : schedule) {
    HeightConfig start(std::vector<Height>(eta.vec().begin(), eta.vec().begin() + static_cast<std::ptrdiff_t>(v.size())));
    PoissonEventLog local;
    local.t = events.t;
    local.times.assign(events.times.begin(), events.times.begin() + static_cast<std::ptrdiff_t>(v.size()));
    Stabilized s = truncated_product(start, local, v.laplacian());
    run.snapshots.push_back(window_values(s.config, window));
    run.origin_topplings.push_back(s.ledger.counts[v.origin()]);
    if (ledgers) ledgers->push_back(std::move(s.ledger));
  }
  const std::size_t K = run.snapshots.size();
  const std::size_t need = K == 2 ? 1 : 2;
  for (std::size_t k = 0; k + need < K; ++k) {
    bool same = true;
    for (std::size_t j = 1; j <= need && same; ++j) same = run.snapshots[k + j] == run.snapshots[k];
    if (same) {
      run.stabilized_at = k;
      break;
    }
  }
  run.changed_at_last_step = K >= 2 && run.snapshots[K - 2] != run.snapshots[K - 1];
  run.final_window = run.snapshots.back();
  return run;
}

std::vector<std::uint64_t> origin_histogram_init(const VolumeGraph& v) {
  return std::vector<std::uint64_t>(static_cast<std::size_t>(v.laplacian().diag(v.origin())), 0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Summability

nlohmann::json SummabilityReport::to_json() const {
  nlohmann::json j{{"summable", summable}, {"closed_form", closed_form}, {"diagnosis", diagnosis}};
  j["value"] = value ? nlohmann::json(*value) : nlohmann::json(nullptr);
  return j;
}

SummabilityReport summability_check(const RateFunction& phi, int d) {
  if (d < 2) throw PreconditionError("summability_check: d must be >= 2");
  SummabilityReport r;
  const double growth = (d + 1.0) / d;
  std::ostringstream os;
  os.precision(17);
  switch (phi.kind()) {
    case RateFunction::Kind::constant: {
      const double c = phi.parameter();
      os << "diverges: generation k contributes " << c << " * " << (d + 1) << " * " << d << "^{k-1} * 2^{-k}, "
         << "a geometric term with ratio " << d / 2.0 << " >= 1";
      r.diagnosis = os.str();
      break;
    }
    case RateFunction::Kind::geometric: {
      const double q = d * phi.parameter() / 2;
      if (q < 1) {
        r.summable = true;
        r.closed_form = true;
        r.value = 1 + growth * q / (1 - q);
        os << "geometric series with ratio d r / 2 = " << q << " < 1; sum = 1 + (d+1)/d * q / (1 - q)";
      } else {
        os << "diverges: geometric series with ratio d r / 2 = " << q << " >= 1";
      }
      r.diagnosis = os.str();
      break;
    }
    case RateFunction::Kind::table: {
      double acc = 0;
      const auto& vals = phi.values();
      for (std::size_t k = 0; k < vals.size(); ++k) {
        acc += vals[k] * generation_size(d, static_cast<int>(k)) * std::ldexp(1.0, -static_cast<int>(k));
      }
      r.summable = true;
      r.value = acc;
      os << "finite support: phi vanishes beyond generation " << vals.size() - 1;
      r.diagnosis = os.str();
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Events and products

std::uint64_t PoissonEventLog::total() const {
  std::uint64_t n = 0;
  for (const auto& ts : times) n += ts.size();
  return n;
}

std::vector<AdditionEvent> PoissonEventLog::merged() const {
  std::vector<AdditionEvent> out;
  out.reserve(total());
  for (SiteId x = 0; x < times.size(); ++x) {
    for (double s : times[x]) out.push_back({s, x});
  }
  std::sort(out.begin(), out.end(), [](const AdditionEvent& a, const AdditionEvent& b) {
    return a.time < b.time || (a.time == b.time && a.site < b.site);
  });
  return out;
}

PoissonEventLog generate_events(std::span<const double> rates, double t, std::uint64_t seed) {
  if (!(t >= 0) || !std::isfinite(t)) throw PreconditionError("generate_events: horizon must be finite and >= 0");
  PoissonEventLog log;
  log.t = t;
  log.times.resize(rates.size());
  for (SiteId x = 0; x < rates.size(); ++x) {
    const double rate = rates[x];
    if (!(rate >= 0) || !std::isfinite(rate)) throw PreconditionError("generate_events: rates must be finite and >= 0");
    if (rate == 0 || t == 0) continue;
    Rng rng(derive_seed(seed, x, kEventStream));
    double now = 0;
    for (;;) {
      now += exponential(rng, rate);
      if (now > t) break;
      log.times[x].push_back(now);
    }
  }
  return log;
}

PoissonEventLog generate_events(const RateFunction& phi, const VolumeGraph& v, double t, std::uint64_t seed) {
  const auto rates = phi.on_volume(v);
  return generate_events(rates, t, seed);
}

Stabilized truncated_product(const HeightConfig& c, const PoissonEventLog& events, const ToppleMatrix& m) {
  if (c.size() != m.dim() || events.sites() != m.dim()) throw PreconditionError("truncated_product: size mismatch");
  if (!is_stable(c, m)) throw PreconditionError("truncated_product: initial configuration must be stable");
  Stabilized out{c, ToppleLedger(m.dim())};
  for (SiteId x = 0; x < m.dim(); ++x) out.config[x] += static_cast<Height>(events.count(x));
  Stabilizer s(m);
  s.relax(out.config.heights(), out.ledger.counts);
  return out;
}

Stabilized sequential_product(const HeightConfig& c, const std::vector<AdditionEvent>& events, const ToppleMatrix& m) {
  if (c.size() != m.dim()) throw PreconditionError("sequential_product: size mismatch");
  if (!is_stable(c, m)) throw PreconditionError("sequential_product: initial configuration must be stable");
  Stabilized out{c, ToppleLedger(m.dim())};
  Stabilizer s(m);
  for (const auto& e : events) {
    if (e.site >= m.dim()) throw PreconditionError("sequential_product: event outside the volume");
    s.add_and_relax(out.config.heights(), e.site, out.ledger.counts);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Window stabilization

nlohmann::json WindowRun::to_json() const {
  nlohmann::json j;
  j["snapshots"] = snapshots;
  j["origin_topplings"] = origin_topplings;
  j["stabilized_at"] = stabilized_at ? nlohmann::json(*stabilized_at) : nlohmann::json(nullptr);
  j["changed_at_last_step"] = changed_at_last_step;
  j["final_window"] = final_window;
  return j;
}

WindowRun stabilized_window_run(const HeightConfig& eta, const RateFunction& phi, double t,
                                const std::vector<SiteId>& window, const std::vector<VolumeGraph>& schedule,
                                std::uint64_t seed, const DynamicsOptions& opts) {
  check_schedule(schedule, window);
  require_summable(phi, schedule.back().d(), opts);
  const VolumeGraph& big = schedule.back();
  if (eta.size() != big.size()) throw PreconditionError("initial configuration must live on the largest volume");
  const PoissonEventLog events = generate_events(phi, big, t, seed);
  return coupled_products(eta, events, window, schedule, nullptr);
}

nlohmann::json WindowStudy::to_json() const {
  return {{"runs", runs},
          {"change_fraction", change_fraction},
          {"last_step_change_fraction", last_step_change_fraction},
          {"unconverged", unconverged},
          {"origin_histogram", origin_histogram}};
}

WindowStudy window_stabilization_study(const RateFunction& phi, double t, const std::vector<SiteId>& window,
                                       const std::vector<VolumeGraph>& schedule, std::uint64_t n_runs,
                                       const SamplerOptions& initial, std::uint64_t seed, unsigned threads,
                                       const DynamicsOptions& opts) {
  check_schedule(schedule, window);
  require_summable(phi, schedule.back().d(), opts);
  const VolumeGraph& big = schedule.back();
  const RecurrentSampler sampler(big, initial);
  std::vector<WindowRun> runs(n_runs);
  parallel_for(n_runs, threads, [&](std::size_t r) {
    auto st = sampler.stream(derive_seed(seed, r, kStartStream));
    const HeightConfig& eta = st.next();
    const PoissonEventLog events = generate_events(phi, big, t, derive_seed(seed, r, kRunEventStream));
    runs[r] = coupled_products(eta, events, window, schedule, nullptr);
  });
  WindowStudy s;
  s.runs = n_runs;
  const std::size_t K = schedule.size();
  s.change_fraction.assign(K > 0 ? K - 1 : 0, 0.0);
  s.origin_histogram = origin_histogram_init(big);
  for (const auto& run : runs) {
    for (std::size_t k = 0; k + 1 < K; ++k) {
      if (run.snapshots[k] != run.snapshots[k + 1]) s.change_fraction[k] += 1;
    }
    if (!run.stabilized_at) ++s.unconverged;
  }
  // Filled only when the origin belongs to the window.
  const auto it = std::find(window.begin(), window.end(), SiteId{0});
  if (it != window.end()) {
    const auto idx = static_cast<std::size_t>(it - window.begin());
    for (const auto& run : runs) ++s.origin_histogram[static_cast<std::size_t>(run.final_window[idx] - 1)];
  }
  for (auto& f : s.change_fraction) f /= n_runs ? static_cast<double>(n_runs) : 1.0;
  s.last_step_change_fraction = s.change_fraction.empty() ? 0.0 : s.change_fraction.back();
  return s;
}

// ---------------------------------------------------------------------------
// Toppling bound

nlohmann::json TopplingBoundReport::to_json() const {
  return {{"runs", runs},         {"t", t},           {"empirical", empirical.to_json()},
          {"exact_mean", exact_mean}, {"bound", bound}, {"z_exact", z_exact},
          {"holds", holds()}};
}

TopplingBoundReport toppling_bound_check(const RateFunction& phi, double t, std::uint64_t n_runs,
                                         const VolumeGraph& v, const SamplerOptions& initial, std::uint64_t seed,
                                         unsigned threads, const DynamicsOptions& opts) {
  require_summable(phi, v.d(), opts);
  if (n_runs == 0) throw PreconditionError("toppling_bound_check: n_runs must be positive");
  const auto rates = phi.on_volume(v);
  const Eigen::VectorXd g0 = greens_column(v.laplacian(), v.origin());
  TopplingBoundReport r;
  r.runs = n_runs;
  r.t = t;
  for (SiteId x = 0; x < v.size(); ++x) {
    const double gx = g0[static_cast<Eigen::Index>(x)];
    r.exact_mean += t * rates[x] * gx;
    r.bound += t * rates[x] * ((x == v.origin() ? 1.0 : 0.0) + 3 * gx);
  }
  const RecurrentSampler sampler(v, initial);
  const ChunkPlan plan = plan_chunks(n_runs);
  std::vector<ChunkMoments> mom(plan.count());
  parallel_for(plan.count(), threads, [&](std::size_t i) {
    for (std::size_t run = plan.begin(i); run < plan.end(i); ++run) {
      auto st = sampler.stream(derive_seed(seed, run, kStartStream));
      const HeightConfig& eta = st.next();
      const PoissonEventLog events = generate_events(rates, t, derive_seed(seed, run, kRunEventStream));
      const Stabilized s = truncated_product(eta, events, v.laplacian());
      const auto c = static_cast<double>(s.ledger.counts[v.origin()]);
      mom[i].sum += c;
      mom[i].sum_sq += c * c;
      ++mom[i].n;
    }
  });
  // Runs are independent, so the plain sample stderr applies for every sampler.
  r.empirical = merge_moments(mom, EstimateMethod::iid_tree);
  r.empirical.method = estimate_method(initial.kind);
  const double se = r.empirical.std_error;
  r.z_exact = se > 0 ? (r.empirical.mean - r.exact_mean) / se : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Monotone starts

nlohmann::json MonotoneRun::to_json() const {
  return {{"from_lower", from_lower.to_json()},
          {"from_stationary", from_stationary.to_json()},
          {"violations", violations}};
}

MonotoneRun monotone_start_run(const HeightConfig& eta_lower, const HeightConfig& eta_stationary,
                               const RateFunction& phi, double t, const std::vector<SiteId>& window,
                               const std::vector<VolumeGraph>& schedule, std::uint64_t seed,
                               const DynamicsOptions& opts) {
  check_schedule(schedule, window);
  require_summable(phi, schedule.back().d(), opts);
  const VolumeGraph& big = schedule.back();
  if (eta_lower.size() != big.size() || eta_stationary.size() != big.size()) {
    throw PreconditionError("monotone_start_run: configurations must live on the largest volume");
  }
  if (!eta_lower.dominated_by(eta_stationary)) {
    throw PreconditionError("monotone_start_run: the lower start must be dominated by its partner");
  }
  const PoissonEventLog events = generate_events(phi, big, t, seed);
  MonotoneRun out;
  std::vector<ToppleLedger> lower, upper;
  out.from_lower = coupled_products(eta_lower, events, window, schedule, &lower);
  out.from_stationary = coupled_products(eta_stationary, events, window, schedule, &upper);
  for (std::size_t k = 0; k < lower.size(); ++k) {
    for (std::size_t x = 0; x < lower[k].counts.size(); ++x) {
      if (lower[k].counts[x] > upper[k].counts[x]) ++out.violations;
    }
  }
  return out;
}

nlohmann::json MonotoneStudy::to_json() const {
  return {{"runs", runs},
          {"violations", violations},
          {"runs_with_violation", runs_with_violation},
          {"lower_origin_histogram", lower_origin_histogram},
          {"stationary_origin_histogram", stationary_origin_histogram}};
}

MonotoneStudy monotone_coupling_study(const RateFunction& phi, double t, const std::vector<SiteId>& window,
                                      const std::vector<VolumeGraph>& schedule, std::uint64_t n_runs,
                                      const SamplerOptions& initial, std::uint64_t seed, unsigned threads,
                                      const DynamicsOptions& opts) {
  check_schedule(schedule, window);
  require_summable(phi, schedule.back().d(), opts);
  const VolumeGraph& big = schedule.back();
  const RecurrentSampler sampler(big, initial);
  const HeightConfig ones = HeightConfig::constant(big.size(), 1);
  std::vector<MonotoneRun> runs(n_runs);
  parallel_for(n_runs, threads, [&](std::size_t r) {
    auto st = sampler.stream(derive_seed(seed, r, kStartStream));
    const HeightConfig eta = st.next();
    runs[r] = monotone_start_run(ones, eta, phi, t, window, schedule, derive_seed(seed, r, kRunEventStream), opts);
  });
  MonotoneStudy s;
  s.runs = n_runs;
  s.lower_origin_histogram = origin_histogram_init(big);
  s.stationary_origin_histogram = origin_histogram_init(big);
  const auto it = std::find(window.begin(), window.end(), SiteId{0});
  for (const auto& run : runs) {
    s.violations += run.violations;
    if (run.violations) ++s.runs_with_violation;
    if (it != window.end()) {
      const auto idx = static_cast<std::size_t>(it - window.begin());
      ++s.lower_origin_histogram[static_cast<std::size_t>(run.from_lower.final_window[idx] - 1)];
      ++s.stationary_origin_histogram[static_cast<std::size_t>(run.from_stationary.final_window[idx] - 1)];
    }
  }
  return s;
}

}  // namespace sandpile
