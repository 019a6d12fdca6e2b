#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <memory>
#include <optional>

#include "covphase/bracket.hpp"
#include "covphase/pipeline.hpp"

namespace py = pybind11;
using namespace covphase;

namespace {

PyObject* g_error = nullptr;

struct Theory {
  struct State {
    SliceModel model;
    ConstraintChainResult chain;
    std::optional<ConnectionProjector> projector;
    FlowOperator flow;
    FlatMap flat;
  };
  std::unique_ptr<State> s;

  Theory(const std::string& kind, double mass, int r, std::vector<int> shape, double h, double t0, double t1,
         const std::string& mode, double leapfrog_dt) {
    ModelConfig mc;
    if (kind == "free_particle")
      mc.kind = ModelKind::FreeParticle;
    else if (kind == "vector_boson")
      mc.kind = ModelKind::VectorBoson;
    else if (kind == "electrodynamics")
      mc.kind = ModelKind::Electrodynamics;
    else
      throw Error(ErrorKind::InvalidArgument, "unknown model kind '" + kind + "'");
    if (mc.kind != ModelKind::FreeParticle && shape.empty()) shape = {4, 4, 4};
    mc.mass = mass;
    mc.r = r;
    mc.shape = std::move(shape);
    mc.h = h;
    FlowOptions opt;
    if (mode == "leapfrog")
      opt.mode = FlowMode::Leapfrog;
    else if (mode != "spectral")
      throw Error(ErrorKind::InvalidArgument, "flow mode must be 'spectral' or 'leapfrog'");
    opt.leapfrog_dt = leapfrog_dt;
    opt.window_begin = t0;
    opt.window_end = t1;

    SliceModel m(make_spec(mc), make_lattice(mc));
    auto chain = analyze_slice(m);
    std::optional<ConnectionProjector> P;
    if (chain.classification == Classification::Gauge) P = coulomb_projector(chain, m);
    auto flow = build_flow(chain, P ? &*P : nullptr, &m, opt);
    FlatMap flat(chain.omega_final, P ? &P->matrix() : nullptr, chain.rank_rtol);
    s = std::make_unique<State>(State{std::move(m), std::move(chain), std::move(P), std::move(flow), std::move(flat)});
  }

  static FieldPoint point(const std::string& component, std::vector<int> site, double t) {
    FieldPoint f;
    f.component = component;
    f.site = std::move(site);
    f.t = t;
    return f;
  }

  // {f, g}; the spacetime routine takes its arguments the other way round
  double bracket(const py::tuple& f, const py::tuple& g, double sigma) const {
    return bracket_spacetime(to_point(g), to_point(f), s->flow, s->model, sigma, s->flat);
  }

  static FieldPoint to_point(const py::tuple& t) {
    if (t.size() != 3) throw Error(ErrorKind::InvalidArgument, "observable must be (component, site, t)");
    return point(t[0].cast<std::string>(), t[1].cast<std::vector<int>>(), t[2].cast<double>());
  }
};

}  // namespace

PYBIND11_MODULE(_covphase, m) {
  m.doc() = "lattice covariant phase space: constraint analysis, slice flow and brackets";

  static py::exception<Error> exc(m, "CovphaseError", PyExc_RuntimeError);
  g_error = exc.ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(g_error)(e.what());
      inst.attr("kind") = to_string(e.kind());
      PyErr_SetObject(g_error, inst.ptr());
    }
  });

  m.def("version", &version);

  m.def(
      "_run",
      [](const std::string& command, const std::string& config_text, bool stable, unsigned threads) {
        RunConfig cfg = parse_config_text(config_text);
        RunOptions opt;
        opt.stable_output = stable;
        opt.threads = threads;
        RunReport rep;
        {
          py::gil_scoped_release release;
          if (command == "analyze")
            rep = cmd_analyze(cfg, opt);
          else if (command == "bracket")
            rep = cmd_bracket(cfg, opt);
          else if (command == "evolve")
            rep = cmd_evolve(cfg, opt);
          else if (command == "verify")
            rep = cmd_verify(cfg, opt);
          else
            throw Error(ErrorKind::InvalidArgument, "unknown command '" + command + "'");
        }
        return py::make_tuple(rep.json.dump(), rep.ok);
      },
      py::arg("command"), py::arg("config_text"), py::arg("stable_output") = true, py::arg("threads") = 0);

  m.def("_emit_config", [](const std::string& text) { return emit_config(parse_config_text(text)).dump(); });

  const double inf = std::numeric_limits<double>::infinity();
  py::class_<Theory>(m, "Theory")
      .def(py::init<const std::string&, double, int, std::vector<int>, double, double, double, const std::string&,
                    double>(),
           py::arg("kind"), py::arg("mass") = 1.0, py::arg("r") = 1, py::arg("shape") = std::vector<int>{},
           py::arg("h") = 1.0, py::arg("window_begin") = -inf, py::arg("window_end") = inf,
           py::arg("mode") = "spectral", py::arg("leapfrog_dt") = 1e-2)
      .def_property_readonly("classification",
                             [](const Theory& t) { return std::string(to_string(t.s->chain.classification)); })
      .def_property_readonly("ambient_dim", [](const Theory& t) { return t.s->model.dim(); })
      .def_property_readonly("final_dim", [](const Theory& t) { return t.s->chain.final_space.dim(); })
      .def_property_readonly("kernel_dim", [](const Theory& t) { return t.s->chain.kernel_final.dim(); })
      .def_property_readonly("iterations", [](const Theory& t) { return t.s->chain.iterations; })
      .def_property_readonly("components", [](const Theory& t) { return t.s->model.components(); })
      .def_property_readonly("omega_final", [](const Theory& t) { return t.s->chain.omega_final; })
      .def_property_readonly("final_basis", [](const Theory& t) { return t.s->chain.final_space.basis; })
      .def_property_readonly("projector", [](const Theory& t) -> std::optional<Matrix> {
        if (!t.s->projector) return std::nullopt;
        return t.s->projector->matrix();
      })
      .def("frequencies", [](const Theory& t) { return t.s->flow.frequencies(); })
      .def("evolve", [](const Theory& t, const Vector& w, double time) { return t.s->flow.evolve(w, time); },
           py::arg("w"), py::arg("t"))
      .def("energy", [](const Theory& t, const Vector& w) { return t.s->flow.energy(w); }, py::arg("w"))
      .def("embed", [](const Theory& t, const Vector& w) { return t.s->chain.final_space.embed(w); }, py::arg("w"))
      .def(
          "observable",
          [](const Theory& t, const std::string& component, std::vector<int> site, double time, double sigma) {
            return pullback_observable(Theory::point(component, std::move(site), time), t.s->flow, t.s->model, sigma)
                .coefficients;
          },
          py::arg("component"), py::arg("site"), py::arg("t"), py::arg("sigma") = 0.0,
          "coefficients of the point evaluation pulled back to the slice at sigma")
      .def("bracket", &Theory::bracket, py::arg("f"), py::arg("g"), py::arg("sigma") = 0.0,
           "{f, g} for observables given as (component, site, t)");
}
