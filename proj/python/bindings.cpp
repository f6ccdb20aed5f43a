#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sandpile/io.hpp"
#include "sandpile/sandpile.hpp"

namespace py = pybind11;
using namespace sandpile;

namespace {

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& e : j) out.append(to_py(e));
      return out;
    }
    default: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it) out[py::str(it.key())] = to_py(it.value());
      return out;
    }
  }
}

HeightConfig to_config(const VolumeGraph& v, const std::vector<Height>& h) {
  if (h.size() != v.size()) throw PreconditionError("height vector length does not match the volume");
  return HeightConfig(h);
}

SamplerOptions sampler_options(const std::string& kind) {
  SamplerOptions o;
  o.kind = sampler_kind_from_string(kind);
  return o;
}

RateFunction make_phi(const std::string& kind, double param, const std::vector<double>& values) {
  if (kind == "constant") return RateFunction::constant(param);
  if (kind == "geometric") return RateFunction::geometric(param);
  if (kind == "table") return RateFunction::table(values);
  throw PreconditionError("unknown phi kind '" + kind + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Abelian sandpile on Bethe-lattice balls and Z^d boxes";

  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<ResourceError>(m, "ResourceError", PyExc_RuntimeError);
  py::register_exception<RefusedError>(m, "RefusedError", PyExc_ValueError);
  py::register_exception<StabilizationError>(m, "StabilizationError", PyExc_RuntimeError);

  py::class_<VolumeGraph>(m, "Volume")
      .def_property_readonly("size", &VolumeGraph::size)
      .def_property_readonly("d", &VolumeGraph::d)
      .def_property_readonly("is_tree", [](const VolumeGraph& v) { return v.kind() == LatticeKind::tree; })
      .def_property_readonly("max_generation", &VolumeGraph::max_generation)
      .def("generation", &VolumeGraph::generation)
      .def("neighbors", [](const VolumeGraph& v, SiteId x) {
        auto n = v.neighbors(x);
        return std::vector<SiteId>(n.begin(), n.end());
      })
      .def("is_boundary", &VolumeGraph::is_boundary)
      .def("max_height", [](const VolumeGraph& v, SiteId x) { return v.laplacian().diag(x); })
      .def("__len__", &VolumeGraph::size)
      .def("__repr__", &VolumeGraph::describe);

  m.def("tree_ball", [](int d, int n) { return build_tree_volume(d, n); }, py::arg("d"), py::arg("generations"));
  m.def("tree_prefix", [](int d, std::size_t k) { return build_tree_prefix(d, k); }, py::arg("d"), py::arg("sites"));
  m.def("grid_box", [](int d, int side) { return build_grid_volume(d, side); }, py::arg("d"), py::arg("side"));

  m.def(
      "stabilize",
      [](const VolumeGraph& v, const std::vector<Height>& h) {
        Stabilized s = stabilize(to_config(v, h), v.laplacian());
        return py::make_tuple(s.config.vec(), s.ledger.counts);
      },
      py::arg("volume"), py::arg("heights"), "Stable configuration and per-site toppling counts.");
  m.def(
      "add_grain",
      [](const VolumeGraph& v, const std::vector<Height>& h, SiteId x) {
        Stabilized s = add_grain(to_config(v, h), x, v.laplacian());
        return py::make_tuple(s.config.vec(), s.ledger.counts);
      },
      py::arg("volume"), py::arg("heights"), py::arg("site"));
  m.def(
      "is_recurrent", [](const VolumeGraph& v, const std::vector<Height>& h) { return is_recurrent(to_config(v, h), v); },
      py::arg("volume"), py::arg("heights"));
  m.def(
      "count_recurrent",
      [](const VolumeGraph& v) -> py::object {
        const RecurrentCount c = count_recurrent(v);
        if (c.exact) return py::int_(py::str(c.exact->get_str()));
        return py::float_(c.log_count);
      },
      py::arg("volume"), "|R_V| as an int, or its natural log as a float beyond the exact cap.");
  m.def(
      "enumerate_recurrent",
      [](const VolumeGraph& v) {
        std::vector<std::vector<Height>> out;
        for (const HeightConfig& c : enumerate_recurrent(v)) out.push_back(c.vec());
        return out;
      },
      py::arg("volume"));
  m.def(
      "verify_group_axioms", [](const VolumeGraph& v) { return to_py(verify_group_axioms(v).to_json()); },
      py::arg("volume"));

  m.def(
      "sample",
      [](const VolumeGraph& v, std::uint64_t n, const std::string& sampler, std::uint64_t seed) {
        const RecurrentSampler s(v, sampler_options(sampler));
        auto st = s.stream(seed);
        std::vector<std::vector<Height>> out;
        out.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) out.push_back(st.next().vec());
        return out;
      },
      py::arg("volume"), py::arg("n"), py::arg("sampler") = "mcmc", py::arg("seed"));
  m.def(
      "height_probability",
      [](const VolumeGraph& v, SiteId x, Height h, std::uint64_t n, const std::string& sampler, std::uint64_t seed,
         unsigned threads) {
        return to_py(expectation(LocalObservable::indicator_height(x, h), v, n, sampler_options(sampler), seed, threads)
                         .to_json());
      },
      py::arg("volume"), py::arg("site"), py::arg("height"), py::arg("n"), py::arg("sampler") = "mcmc",
      py::arg("seed"), py::arg("threads") = 1);
  m.def(
      "boundary_identity",
      [](const VolumeGraph& v, std::uint64_t n, const std::string& sampler, std::uint64_t seed) {
        return to_py(boundary_height3_identity(v, n, sampler_options(sampler), seed).to_json());
      },
      py::arg("volume"), py::arg("n"), py::arg("sampler") = "mcmc", py::arg("seed"));

  m.def(
      "greens", [](const VolumeGraph& v) { return greens_exact(v); }, py::arg("volume"),
      "Exact G_V = (Delta^V)^{-1} as a dense matrix.");
  m.def(
      "greens_decay",
      [](int d, const std::vector<int>& gens) { return to_py(greens_decay_check(d, gens).to_json()); }, py::arg("d"),
      py::arg("generations"));
  m.def(
      "cluster_tail",
      [](int d, int generations, std::uint64_t n, std::uint64_t seed, unsigned threads) {
        const ClusterHistogram h = cluster_size_distribution(BallClusterSampler(d, generations), n, seed, threads);
        py::dict out;
        out["fit"] = to_py(fit_tail(h).to_json());
        out["empty"] = h.empty;
        out["censored"] = h.censored_total();
        out["counts"] = h.counts;
        return out;
      },
      py::arg("d"), py::arg("generations"), py::arg("n"), py::arg("seed"), py::arg("threads") = 1);
  m.def(
      "transfer_matrix_bound",
      [](const std::vector<double>& gamma) { return to_py(transfer_matrix_bound(gamma).to_json()); },
      py::arg("gamma"), "Product of the 2x2 transfer matrices for per-level couplings gamma.");

  m.def(
      "summability",
      [](const std::string& kind, double param, const std::vector<double>& values, int d) {
        return to_py(summability_check(make_phi(kind, param, values), d).to_json());
      },
      py::arg("kind"), py::arg("param") = 1.0, py::arg("values") = std::vector<double>{}, py::arg("d") = 2);
  m.def(
      "window_study",
      [](const std::string& kind, double param, double t, const std::vector<int>& schedule, std::uint64_t runs,
         std::uint64_t seed, bool allow_nonsummable, unsigned threads) {
        std::vector<VolumeGraph> sched;
        for (int n : schedule) sched.push_back(build_tree_volume(2, n));
        DynamicsOptions o;
        o.allow_nonsummable = allow_nonsummable;
        return to_py(window_stabilization_study(make_phi(kind, param, {}), t, {0}, sched, runs, SamplerOptions{}, seed,
                                                threads, o)
                         .to_json());
      },
      py::arg("kind"), py::arg("param"), py::arg("t"), py::arg("schedule"), py::arg("runs"), py::arg("seed"),
      py::arg("allow_nonsummable") = false, py::arg("threads") = 1);
}
