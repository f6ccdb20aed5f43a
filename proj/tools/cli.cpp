#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sandpile/sandpile.hpp"

namespace sandpile::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AssertionFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Manifest parsing

VolumeGraph parse_volume(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw UsageError("volume must be an object with a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  const int d = j.value("d", 2);
  if (kind == "tree") {
    if (j.contains("sites")) return build_tree_prefix(d, j.at("sites").get<std::size_t>());
    if (!j.contains("generations")) throw UsageError("tree volume needs \"generations\" or \"sites\"");
    return build_tree_volume(d, j.at("generations").get<int>());
  }
  if (kind == "grid") {
    if (!j.contains("side")) throw UsageError("grid volume needs \"side\"");
    return build_grid_volume(d, j.at("side").get<int>());
  }
  throw UsageError("unknown volume kind '" + kind + "'");
}

RateFunction parse_phi(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw UsageError("phi must be an object with a \"kind\"");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") return RateFunction::constant(j.value("c", 1.0));
  if (kind == "geometric") {
    if (!j.contains("r")) throw UsageError("geometric phi needs \"r\"");
    return RateFunction::geometric(j.at("r").get<double>());
  }
  if (kind == "table") {
    if (!j.contains("values")) throw UsageError("table phi needs \"values\"");
    return RateFunction::table(j.at("values").get<std::vector<double>>());
  }
  throw UsageError("unknown phi kind '" + kind + "'");
}

SamplerOptions parse_sampler(const json& j) {
  SamplerOptions o;
  if (j.is_null()) return o;
  if (j.is_string()) {
    o.kind = sampler_kind_from_string(j.get<std::string>());
    return o;
  }
  o.kind = sampler_kind_from_string(j.value("kind", std::string("mcmc")));
  if (j.contains("burn_in")) o.burn_in = j.at("burn_in").get<std::uint64_t>();
  if (j.contains("thinning")) o.thinning = j.at("thinning").get<std::uint64_t>();
  if (j.contains("enumeration_cap")) o.enumeration_cap = j.at("enumeration_cap").get<std::size_t>();
  return o;
}

json sampler_json(const SamplerOptions& o) {
  json j{{"kind", to_string(o.kind)}, {"enumeration_cap", o.enumeration_cap}};
  if (o.burn_in) j["burn_in"] = *o.burn_in;
  if (o.thinning) j["thinning"] = *o.thinning;
  return j;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw UsageError("not an integer list: '" + s + "'");
    }
  }
  return out;
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError("invalid JSON for " + what + ": " + e.what());
  }
}

/// Flag values given on the command line; each overrides the config key
/// of the same name.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<std::uint64_t> runs;
  std::optional<double> t;
  std::optional<unsigned> threads;
  std::optional<std::string> volume;
  std::optional<std::string> phi;
  std::optional<std::string> sampler;
  std::optional<std::string> schedule;
  std::optional<std::string> generations;
  std::optional<std::string> window;
  std::optional<int> cluster_generations;
  bool allow_nonsummable = false;
  std::string out_dir = "out";
};

json build_manifest(const std::string& command, const Overrides& o) {
  json m = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw UsageError("cannot read config file " + o.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    m = parse_json_text(buf.str(), o.config_path);
    if (!m.is_object()) throw UsageError("config must be a JSON object");
  }
  m["command"] = command;
  if (o.seed) m["seed"] = *o.seed;
  if (o.samples) m["samples"] = *o.samples;
  if (o.runs) m["runs"] = *o.runs;
  if (o.t) m["t"] = *o.t;
  if (o.threads) m["threads"] = *o.threads;
  if (o.volume) m["volume"] = parse_json_text(*o.volume, "--volume");
  if (o.phi) m["phi"] = parse_json_text(*o.phi, "--phi");
  if (o.sampler) m["sampler"] = *o.sampler;
  if (o.schedule) m["schedule"] = parse_int_list(*o.schedule);
  if (o.generations) m["generations"] = parse_int_list(*o.generations);
  if (o.window) m["window"] = parse_int_list(*o.window);
  if (o.cluster_generations) m["cluster_generations"] = *o.cluster_generations;
  if (o.allow_nonsummable) m["allow_nonsummable"] = true;
  if (!m.contains("seed") || !m["seed"].is_number_unsigned()) {
    throw UsageError("a seed is required (--seed or \"seed\" in the config); there is no clock-based default");
  }
  if (!m.contains("threads")) m["threads"] = 1;
  return m;
}

std::uint64_t require_positive(const json& m, const char* key, std::uint64_t fallback) {
  const std::uint64_t v = m.contains(key) ? m.at(key).get<std::uint64_t>() : fallback;
  if (v == 0) throw UsageError(std::string("\"") + key + "\" must be positive");
  return v;
}

std::vector<VolumeGraph> tree_schedule(const json& m, const VolumeGraph& hint) {
  std::vector<VolumeGraph> out;
  const int d = m.contains("volume") ? m["volume"].value("d", 2) : hint.d();
  for (int n : m.at("schedule").get<std::vector<int>>()) out.push_back(build_tree_volume(d, n));
  return out;
}

// ---------------------------------------------------------------------------
// Output

class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(root_ / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (root_ / name).string());
    f << text;
  }
  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }
  const fs::path& root() const noexcept { return root_; }

 private:
  fs::path root_;
};

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_verify(const json& m, const OutputDir& out, std::ostream& log) {
  if (!m.contains("volume")) throw UsageError("verify needs a volume");
  const VolumeGraph v = parse_volume(m["volume"]);
  const std::size_t cap = m.value("enumeration_cap", kDefaultEnumerationCap);
  if (v.size() > cap) {
    throw UsageError("verify enumerates R_V; " + std::to_string(v.size()) + " sites exceed the enumeration cap " +
                     std::to_string(cap));
  }
  const ToppleValidation val = validate_toppling_matrix(v.laplacian());
  const GroupAxiomReport axioms = verify_group_axioms(v, cap);
  json report;
  report["volume"] = v.describe();
  report["toppling_matrix_valid"] = val.ok();
  report["dissipative_sites"] = val.dissipative;
  report["group"] = axioms.to_json();
  const bool ok = val.ok() && axioms.ok();
  report["ok"] = ok;
  out.write_json("report.json", report);
  {
    std::ostringstream os;
    write_recurrent_csv(os, v, cap);
    out.write("recurrent.csv", os.str());
  }
  log << "|R| = " << axioms.recurrent << ", det = " << axioms.determinant << (ok ? ", all identities hold\n" : "\n");
  if (!ok) {
    const std::string first = axioms.violations.empty() ? "toppling matrix invalid" : axioms.violations.front();
    throw AssertionFailed(first);
  }
  return kOk;
}

json greens_rows(const VolumeGraph& v, std::uint64_t samples, const SamplerOptions& so, std::uint64_t seed,
                 unsigned threads, std::string& csv) {
  const Eigen::VectorXd g0 = greens_column(v.laplacian(), v.origin());
  std::vector<SiteId> ys(v.size());
  for (SiteId y = 0; y < v.size(); ++y) ys[y] = y;
  const auto est = expected_topplings_mc(v, v.origin(), ys, samples, so, seed, threads);
  std::ostringstream os;
  os << "x,y,exact,mc,stderr\n";
  std::size_t within = 0;
  for (SiteId y = 0; y < v.size(); ++y) {
    const double ex = g0[static_cast<Eigen::Index>(y)];
    os << v.origin() << ',' << y << ',' << fmt(ex) << ',' << fmt(est[y].mean) << ',' << fmt(est[y].std_error) << '\n';
    if (std::abs(est[y].mean - ex) <= 3 * est[y].std_error) ++within;
  }
  csv = os.str();
  return {{"pairs", v.size()}, {"within_3_stderr", within}};
}

int cmd_stats(const json& m, const OutputDir& out, std::ostream& log) {
  if (!m.contains("volume")) throw UsageError("stats needs a volume");
  const VolumeGraph v = parse_volume(m["volume"]);
  const std::uint64_t samples = require_positive(m, "samples", 0);
  const std::uint64_t seed = m["seed"].get<std::uint64_t>();
  const unsigned threads = m["threads"].get<unsigned>();
  const SamplerOptions so = parse_sampler(m.value("sampler", json()));
  json summary;
  summary["volume"] = v.describe();
  summary["sampler"] = sampler_json(so);

  const Height top = v.laplacian().diag(v.origin());
  json heights = json::array();
  for (Height h = 1; h <= top; ++h) {
    heights.push_back(expectation(LocalObservable::indicator_height(v.origin(), h), v, samples, so,
                                  derive_seed(seed, 1, static_cast<std::uint64_t>(h)), threads)
                          .to_json());
  }
  summary["origin_height_distribution"] = heights;
  summary["origin_height_mean"] =
      expectation(LocalObservable::height_at(v.origin()), v, samples, so, derive_seed(seed, 2), threads).to_json();

  std::string csv;
  summary["greens"] = greens_rows(v, samples, so, derive_seed(seed, 3), threads, csv);
  out.write("greens.csv", csv);

  if (v.kind() == LatticeKind::tree && v.size() >= 2 && v.is_boundary(static_cast<SiteId>(v.size() - 1))) {
    summary["boundary_identity"] = boundary_height3_identity(v, samples, so, derive_seed(seed, 4), threads).to_json();
  }

  const ClusterHistogram h = cluster_size_distribution(v, samples, so, derive_seed(seed, 5), threads);
  out.write("clusters.csv", h.to_csv());
  summary["cluster_fit"] = fit_tail(h).to_json();

  if (m.contains("schedule")) {
    const auto sched = tree_schedule(m, v);
    summary["cauchy_net"] =
        cauchy_net_diagnostic(LocalObservable::height_at(0), sched, samples, so, derive_seed(seed, 6), threads)
            .to_json();
  }
  out.write_json("summary.json", summary);
  log << "stats written to " << out.root().string() << "\n";
  return kOk;
}

int cmd_greens(const json& m, const OutputDir& out, std::ostream& log) {
  const std::uint64_t seed = m["seed"].get<std::uint64_t>();
  const unsigned threads = m["threads"].get<unsigned>();
  json report;
  if (m.contains("generations")) {
    const int d = m.contains("volume") ? m["volume"].value("d", 2) : 2;
    const GreensDecayReport dec = greens_decay_check(d, m["generations"].get<std::vector<int>>());
    report["decay"] = dec.to_json();
  }
  if (m.contains("volume")) {
    const VolumeGraph v = parse_volume(m["volume"]);
    if (v.size() <= kDefaultGreensCap) {
      const Eigen::MatrixXd g = greens_exact(v);
      report["identity_residual"] = greens_identity_residual(v.laplacian(), g);
    }
    const std::uint64_t samples = m.value("samples", std::uint64_t{0});
    if (samples > 0) {
      std::string csv;
      report["comparison"] = greens_rows(v, samples, parse_sampler(m.value("sampler", json())), seed, threads, csv);
      out.write("greens.csv", csv);
    }
  }
  if (report.empty()) throw UsageError("greens needs \"generations\" and/or a volume");
  out.write_json("greens.json", report);
  log << "greens written to " << out.root().string() << "\n";
  return kOk;
}

int cmd_clusters(const json& m, const OutputDir& out, std::ostream& log) {
  const std::uint64_t samples = require_positive(m, "samples", 0);
  const std::uint64_t seed = m["seed"].get<std::uint64_t>();
  const unsigned threads = m["threads"].get<unsigned>();
  ClusterHistogram h;
  json report;
  if (m.contains("cluster_generations")) {
    const int d = m.contains("volume") ? m["volume"].value("d", 2) : 2;
    const BallClusterSampler s(d, m["cluster_generations"].get<int>());
    report["ball"] = {{"d", d}, {"generations", s.generations()}, {"sampler", "lazy_tree_exact"}};
    h = cluster_size_distribution(s, samples, seed, threads);
  } else {
    if (!m.contains("volume")) throw UsageError("clusters needs a volume or \"cluster_generations\"");
    const VolumeGraph v = parse_volume(m["volume"]);
    const SamplerOptions so = parse_sampler(m.value("sampler", json()));
    report["volume"] = v.describe();
    report["sampler"] = sampler_json(so);
    h = cluster_size_distribution(v, samples, so, seed, threads);
  }
  const TailFit fit = fit_tail(h);
  report["samples"] = h.samples;
  report["empty"] = h.empty;
  report["censored"] = h.censored_total();
  report["fit"] = fit.to_json();
  // Finite-volume mean of |C_3(0)|, censored clusters at their observed size.
  // It grows with the volume; no limit is claimed.
  double total = 0;
  for (const auto& [k, c] : h.counts) total += static_cast<double>(k) * static_cast<double>(c);
  for (const auto& [k, c] : h.censored) total += static_cast<double>(k) * static_cast<double>(c);
  report["mean_size"] = total / static_cast<double>(h.samples);
  out.write("histogram.csv", h.to_csv());
  out.write_json("fit.json", report);
  log << "tail exponent " << fmt(fit.exponent) << " +- " << fmt(fit.std_error) << "\n";
  return kOk;
}

int cmd_dynamics(const json& m, const OutputDir& out, std::ostream& log) {
  if (!m.contains("phi")) throw UsageError("dynamics needs \"phi\"");
  if (!m.contains("schedule")) throw UsageError("dynamics needs a \"schedule\" of tree generations");
  const RateFunction phi = parse_phi(m["phi"]);
  const std::uint64_t seed = m["seed"].get<std::uint64_t>();
  const unsigned threads = m["threads"].get<unsigned>();
  const std::uint64_t runs = require_positive(m, "runs", 100);
  const double t = m.value("t", 1.0);
  DynamicsOptions dopts;
  dopts.allow_nonsummable = m.value("allow_nonsummable", false);
  const SamplerOptions so = parse_sampler(m.value("sampler", json()));
  const int d = m.contains("volume") ? m["volume"].value("d", 2) : 2;
  const VolumeGraph hint = build_tree_volume(d, 0);
  const auto sched = tree_schedule(m, hint);
  std::vector<SiteId> window{0};
  if (m.contains("window")) window = m["window"].get<std::vector<SiteId>>();

  const SummabilityReport sum = summability_check(phi, d);
  if (!sum.summable && !dopts.allow_nonsummable) {
    throw RefusedError("phi = " + phi.describe() + " violates the summability condition sum_x phi(x) 2^{-|x|} < inf (" +
                       sum.diagnosis + "); pass --allow-nonsummable for a negative-control run");
  }
  json report;
  report["phi"] = phi.describe();
  report["summability"] = sum.to_json();
  report["negative_control"] = !sum.summable;
  const WindowStudy ws =
      window_stabilization_study(phi, t, window, sched, runs, so, derive_seed(seed, 1), threads, dopts);
  report["stabilization"] = ws.to_json();
  const MonotoneStudy ms = monotone_coupling_study(phi, t, window, sched, runs, so, derive_seed(seed, 2), threads, dopts);
  report["monotone_coupling"] = ms.to_json();
  if (m.contains("bound_volume")) {
    const VolumeGraph bv = parse_volume(m["bound_volume"]);
    report["toppling_bound"] =
        toppling_bound_check(phi, t, runs, bv, so, derive_seed(seed, 3), threads, dopts).to_json();
  }
  out.write_json("stabilization.json", report);

  // Per-run window series for the first few runs.
  std::ostringstream os;
  os << "run,volume_index,generations,site,height\n";
  const RecurrentSampler sampler(sched.back(), so);
  const std::uint64_t series_runs = std::min<std::uint64_t>(runs, 20);
  for (std::uint64_t r = 0; r < series_runs; ++r) {
    auto st = sampler.stream(derive_seed(seed, 4, r));
    const WindowRun wr =
        stabilized_window_run(st.next(), phi, t, window, sched, derive_seed(seed, 5, r), dopts);
    for (std::size_t k = 0; k < wr.snapshots.size(); ++k) {
      for (std::size_t i = 0; i < window.size(); ++i) {
        os << r << ',' << k << ',' << sched[k].max_generation() << ',' << window[i] << ',' << wr.snapshots[k][i] << '\n';
      }
    }
  }
  out.write("window_series.csv", os.str());
  log << "last-step change fraction " << fmt(ws.last_step_change_fraction) << " over " << runs << " runs\n";
  if (ms.violations != 0) throw AssertionFailed("monotone coupling violated");
  return kOk;
}

int cmd_sample(const json& m, const OutputDir& out, std::ostream& log) {
  if (!m.contains("volume")) throw UsageError("sample needs a volume");
  const VolumeGraph v = parse_volume(m["volume"]);
  const std::uint64_t samples = require_positive(m, "samples", 1);
  const std::uint64_t seed = m["seed"].get<std::uint64_t>();
  const SamplerOptions so = parse_sampler(m.value("sampler", json()));
  const RecurrentSampler sampler(v, so);
  auto st = sampler.stream(seed);
  std::ostringstream csv;
  csv << "sample,site,generation,height\n";
  json arr = json::array();
  for (std::uint64_t i = 0; i < samples; ++i) {
    const HeightConfig& c = st.next();
    for (SiteId x = 0; x < c.size(); ++x) csv << i << ',' << x << ',' << v.generation(x) << ',' << c[x] << '\n';
    arr.push_back(config_to_json(c));
  }
  out.write("samples.csv", csv.str());
  out.write_json("samples.json", arr);
  log << samples << " samples written\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Abelian sandpile on Bethe-lattice balls and Z^d boxes"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON manifest; flags override its keys");
    sub->add_option("--seed", o.seed, "RNG seed (required)");
    sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--threads", o.threads, "Replica threads (0 = all cores)");
    sub->add_option("--volume", o.volume, "Volume JSON, e.g. {\"kind\":\"tree\",\"d\":2,\"generations\":3}");
    sub->add_option("--samples", o.samples, "Number of stationary samples");
    sub->add_option("--sampler", o.sampler, "enumeration | mcmc | tree_exact");
  };
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const json&, const OutputDir&, std::ostream&);
  };
  const Sub subs[] = {
      {"verify", "Exact group-structure checks on an enumerable volume", cmd_verify},
      {"stats", "Stationary estimates, Green's comparison, clusters, Cauchy diagnostic", cmd_stats},
      {"greens", "Exact Green's function decay and Monte Carlo comparison", cmd_greens},
      {"clusters", "Height-3 cluster size distribution and tail fit", cmd_clusters},
      {"dynamics", "Coupled truncations of the Poisson-clock dynamics", cmd_dynamics},
      {"sample", "Draw stationary configurations", cmd_sample},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    apps.emplace_back(sub, &s);
  }
  for (auto& [sub, s] : apps) {
    const std::string name = s->name;
    if (name == "stats" || name == "dynamics") {
      sub->add_option("--schedule", o.schedule, "Comma-separated tree generations, e.g. 2,4,6,8");
    }
    if (name == "greens") sub->add_option("--generations", o.generations, "Comma-separated ball radii");
    if (name == "clusters") {
      sub->add_option("--cluster-generations", o.cluster_generations, "Radius of a lazily sampled tree ball");
    }
    if (name == "dynamics") {
      sub->add_option("--phi", o.phi, "Rate JSON, e.g. {\"kind\":\"geometric\",\"r\":0.25}");
      sub->add_option("--t", o.t, "Time horizon");
      sub->add_option("--runs", o.runs, "Independent runs");
      sub->add_option("--window", o.window, "Comma-separated window site ids");
      sub->add_flag("--allow-nonsummable", o.allow_nonsummable, "Run a non-summable phi as a negative control");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (auto& [sub, s] : apps) {
    if (!sub->parsed()) continue;
    try {
      const json manifest = build_manifest(s->name, o);
      const OutputDir dir(o.out_dir);
      dir.write_json("manifest.json", manifest);
      return s->fn(manifest, dir, out);
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const RefusedError& e) {
      err << "refused: " << e.what() << "\n";
      return kRefused;
    } catch (const AssertionFailed& e) {
      err << "assertion failed: " << e.what() << "\n";
      return kAssertionFailed;
    } catch (const PreconditionError& e) {
      err << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const ResourceError& e) {
      err << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const json::exception& e) {
      err << "usage error: malformed manifest: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kAssertionFailed;
    }
  }
  return kUsage;
}

}  // namespace sandpile::cli
