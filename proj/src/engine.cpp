#include "sandpile/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sandpile {

HeightConfig HeightConfig::maximal(const ToppleMatrix& m) {
  const auto d = m.diagonal();
  return HeightConfig(std::vector<Height>(d.begin(), d.end()));
}

bool HeightConfig::dominated_by(const HeightConfig& other) const {
  if (size() != other.size()) throw PreconditionError("HeightConfig::dominated_by: size mismatch");
  for (std::size_t i = 0; i < h_.size(); ++i) {
    if (h_[i] > other.h_[i]) return false;
  }
  return true;
}

ToppleCount ToppleLedger::total() const {
  ToppleCount t = 0;
  for (ToppleCount c : counts) {
    if (c > std::numeric_limits<ToppleCount>::max() - t) throw StabilizationError("ToppleLedger::total overflow");
    t += c;
  }
  return t;
}

bool ToppleLedger::is_zero() const {
  return std::all_of(counts.begin(), counts.end(), [](ToppleCount c) { return c == 0; });
}

std::vector<SiteId> ToppleLedger::support() const {
  std::vector<SiteId> s;
  for (SiteId x = 0; x < counts.size(); ++x) {
    if (counts[x] > 0) s.push_back(x);
  }
  return s;
}

bool ToppleLedger::dominated_by(const ToppleLedger& other) const {
  if (counts.size() != other.counts.size()) throw PreconditionError("ToppleLedger::dominated_by: size mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > other.counts[i]) return false;
  }
  return true;
}

bool is_stable(const HeightConfig& c, const ToppleMatrix& m) {
  if (c.size() != m.dim()) throw PreconditionError("is_stable: configuration size does not match the matrix");
  for (SiteId x = 0; x < c.size(); ++x) {
    if (c[x] > m.diag(x)) return false;
  }
  return true;
}

HeightConfig topple_site(const HeightConfig& c, SiteId x, const ToppleMatrix& m) {
  if (c.size() != m.dim() || x >= c.size()) throw PreconditionError("topple_site: site or size mismatch");
  HeightConfig out = c;
  if (c[x] <= m.diag(x)) return out;
  out[x] -= m.diag(x);
  const auto cols = m.row_cols(x);
  const auto vals = m.row_vals(x);
  for (std::size_t k = 0; k < cols.size(); ++k) out[cols[k]] -= vals[k];
  return out;
}

// ---------------------------------------------------------------------------
// Stabilizer

Stabilizer::Stabilizer(const ToppleMatrix& m, ToppleCount budget)
    : m_(m), budget_(budget), queued_(m.dim(), 0) {
  queue_.reserve(m.dim());
}

void Stabilizer::push(SiteId x) {
  if (!queued_[x]) {
    queued_[x] = 1;
    queue_.push_back(x);
  }
}

ToppleCount Stabilizer::drain(std::span<Height> heights, std::span<ToppleCount> counts) {
  ToppleCount total = 0;
  // FIFO over a growing vector; compacted when the consumed prefix is large.
  std::size_t head = 0;
  while (head < queue_.size()) {
    const SiteId x = queue_[head++];
    queued_[x] = 0;
    const Height dxx = m_.diag(x);
    const Height h = heights[x];
    if (h > dxx) {
      const Height k = (h - 1) / dxx;
      heights[x] = h - k * dxx;
      const auto cols = m_.row_cols(x);
      const auto vals = m_.row_vals(x);
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const SiteId y = cols[j];
        heights[y] -= k * vals[j];
        if (heights[y] > m_.diag(y)) push(y);
      }
      const auto uk = static_cast<ToppleCount>(k);
      if (!counts.empty()) {
        if (counts[x] > std::numeric_limits<ToppleCount>::max() - uk) {
          throw StabilizationError("toppling counter overflow");
        }
        counts[x] += uk;
      }
      total += uk;
      if (total > budget_) {
        queue_.clear();
        std::fill(queued_.begin(), queued_.end(), 0);
        throw StabilizationError("stabilization exceeded the toppling budget; is the matrix dissipative?");
      }
    }
    if (head > 4096 && head * 2 > queue_.size()) {
      queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(head));
      head = 0;
    }
  }
  queue_.clear();
  return total;
}

ToppleCount Stabilizer::relax(std::span<Height> heights, std::span<ToppleCount> counts) {
  if (heights.size() != m_.dim() || (!counts.empty() && counts.size() != m_.dim())) {
    throw PreconditionError("Stabilizer::relax: size mismatch");
  }
  for (SiteId x = 0; x < heights.size(); ++x) {
    if (heights[x] > m_.diag(x)) push(x);
  }
  return drain(heights, counts);
}

ToppleCount Stabilizer::add_and_relax(std::span<Height> heights, SiteId x, std::span<ToppleCount> counts,
                                      Height grains) {
  if (heights.size() != m_.dim() || x >= heights.size() || (!counts.empty() && counts.size() != m_.dim())) {
    throw PreconditionError("Stabilizer::add_and_relax: size mismatch");
  }
  heights[x] += grains;
  if (heights[x] > m_.diag(x)) push(x);
  return drain(heights, counts);
}

Stabilized stabilize(HeightConfig c, const ToppleMatrix& m) {
  if (c.size() != m.dim()) throw PreconditionError("stabilize: configuration size does not match the matrix");
  Stabilized out{std::move(c), ToppleLedger(m.dim())};
  Stabilizer s(m);
  s.relax(out.config.heights(), out.ledger.counts);
  return out;
}

Stabilized add_grain(const HeightConfig& c, SiteId x, const ToppleMatrix& m) {
  if (c.size() != m.dim() || x >= c.size()) throw PreconditionError("add_grain: site or size mismatch");
  if (!is_stable(c, m)) throw PreconditionError("add_grain: configuration must be stable");
  Stabilized out{c, ToppleLedger(m.dim())};
  Stabilizer s(m);
  s.add_and_relax(out.config.heights(), x, out.ledger.counts);
  return out;
}

// ---------------------------------------------------------------------------
// Dynamics

void check_probability_vector(std::span<const double> p, std::size_t n, bool allow_degenerate) {
  if (p.size() != n) throw PreconditionError("probability vector size does not match the volume");
  double sum = 0;
  for (double q : p) {
    if (!(q >= 0) || !std::isfinite(q)) throw PreconditionError("probability vector has a negative or non-finite entry");
    if (q == 0 && !allow_degenerate) throw PreconditionError("probability vector must be strictly positive");
    sum += q;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw PreconditionError("probability vector must sum to 1");
}

SiteId draw_site(std::span<const double> p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0;
  SiteId last_positive = 0;
  for (SiteId x = 0; x < p.size(); ++x) {
    if (p[x] > 0) last_positive = x;
    acc += p[x];
    if (u < acc) return x;
  }
  return last_positive;
}

HeightConfig discrete_step(const HeightConfig& c, std::span<const double> p, const ToppleMatrix& m, Rng& rng,
                           bool allow_degenerate) {
  check_probability_vector(p, m.dim(), allow_degenerate);
  return add_grain(c, draw_site(p, rng), m).config;
}

double exponential(Rng& rng, double rate) {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform01(rng)) / rate;
}

ContinuousRun continuous_run(const HeightConfig& c, std::span<const double> rates, double t,
                             const ToppleMatrix& m, Rng& rng) {
  if (rates.size() != m.dim()) throw PreconditionError("continuous_run: rate vector size mismatch");
  if (!(t >= 0) || !std::isfinite(t)) throw PreconditionError("continuous_run: horizon must be finite and >= 0");
  if (!is_stable(c, m)) throw PreconditionError("continuous_run: initial configuration must be stable");
  double total_rate = 0;
  for (double r : rates) {
    if (!(r >= 0) || !std::isfinite(r)) throw PreconditionError("continuous_run: rates must be finite and >= 0");
    total_rate += r;
  }
  ContinuousRun run{{}, c, ToppleLedger(m.dim())};
  if (t == 0 || total_rate == 0) return run;

  // Cumulative table for the site draw.
  std::vector<double> cumulative(rates.size());
  std::partial_sum(rates.begin(), rates.end(), cumulative.begin());
  Stabilizer s(m);
  double now = 0;
  for (;;) {
    now += exponential(rng, total_rate);
    if (now > t) break;
    const double u = uniform01(rng) * total_rate;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    auto x = static_cast<SiteId>(it - cumulative.begin());
    while (rates[x] == 0 && x > 0) --x;  // u landed on a zero-width step at the end
    run.events.push_back({now, x});
    s.add_and_relax(run.config.heights(), x, run.ledger.counts);
  }
  return run;
}

ContinuousRun continuous_run(const HeightConfig& c, const RateFunction& phi, double t, const VolumeGraph& v,
                             Rng& rng) {
  const auto rates = phi.on_volume(v);
  return continuous_run(c, rates, t, v.laplacian(), rng);
}

}  // namespace sandpile
