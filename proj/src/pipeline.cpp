#include "covphase/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "covphase/gauge.hpp"
#include "covphase/slicing.hpp"

#ifndef COVPHASE_VERSION
#define COVPHASE_VERSION "unknown"
#endif

namespace covphase {

const char* version() { return COVPHASE_VERSION; }

namespace {

using json = nlohmann::json;

// dense algebra on the ambient space; beyond this the SVDs take minutes
constexpr Eigen::Index kMaxAmbientDim = 6000;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::InvalidConfig, "at " + (path.empty() ? std::string("/") : path) + ": " + msg);
}

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; }))
      fail(path + "/" + item.key(), "unknown key");
  }
}

double get_number(const json& j, const char* key, const std::string& path, std::optional<double> def) {
  const std::string p = path + "/" + key;
  if (!j.contains(key)) {
    if (!def) fail(p, "required number is missing");
    return *def;
  }
  const json& v = j.at(key);
  if (!v.is_number()) fail(p, "expected a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) fail(p, "must be finite");
  return x;
}

long long get_integer(const json& j, const char* key, const std::string& path, std::optional<long long> def) {
  const std::string p = path + "/" + key;
  if (!j.contains(key)) {
    if (!def) fail(p, "required integer is missing");
    return *def;
  }
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(p, "expected an integer");
  return v.get<long long>();
}

std::vector<int> get_int_list(const json& j, const char* key, const std::string& path, bool required) {
  const std::string p = path + "/" + key;
  if (!j.contains(key)) {
    if (required) fail(p, "required list is missing");
    return {};
  }
  const json& v = j.at(key);
  if (!v.is_array()) fail(p, "expected a list of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) fail(p + "/" + std::to_string(i), "expected an integer");
    long long x = v[i].get<long long>();
    if (x < -(1LL << 30) || x > (1LL << 30)) fail(p + "/" + std::to_string(i), "integer out of range");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

ModelConfig parse_model(const json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1)
    fail(path, "expected exactly one of free_particle, vector_boson, electrodynamics");
  ModelConfig m;
  const std::string name = j.begin().key();
  const json& b = j.begin().value();
  const std::string p = path + "/" + name;
  auto positive = [&](double x, const char* key) {
    if (!(x > 0)) fail(p + "/" + key, "must be > 0");
    return x;
  };
  auto shape = [&](std::size_t lo, std::size_t hi) {
    auto s = get_int_list(b, "shape", p, true);
    if (s.size() < lo || s.size() > hi)
      fail(p + "/shape", "expected " + (lo == hi ? std::to_string(lo) : std::to_string(lo) + " to " + std::to_string(hi)) +
                             " entries");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] < 2) fail(p + "/shape/" + std::to_string(i), "lattice extent must be >= 2");
    return s;
  };
  if (name == "free_particle") {
    check_keys(b, p, {"mass"});
    m.kind = ModelKind::FreeParticle;
    m.mass = positive(get_number(b, "mass", p, 1.0), "mass");
  } else if (name == "vector_boson") {
    check_keys(b, p, {"mass", "r", "shape", "h"});
    m.kind = ModelKind::VectorBoson;
    m.mass = positive(get_number(b, "mass", p, 1.0), "mass");
    long long r = get_integer(b, "r", p, 1);
    if (r < 1 || r > 16) fail(p + "/r", "fiber dimension must be in [1, 16]");
    m.r = static_cast<int>(r);
    m.shape = shape(1, 3);
    m.h = positive(get_number(b, "h", p, 1.0), "h");
  } else if (name == "electrodynamics") {
    check_keys(b, p, {"shape", "h"});
    m.kind = ModelKind::Electrodynamics;
    m.mass = 0.0;
    m.r = 4;
    m.shape = shape(3, 3);
    m.h = positive(get_number(b, "h", p, 1.0), "h");
  } else {
    fail(p, "unknown model");
  }
  double sites = 1;
  for (int n : m.shape) sites *= n;
  double dim = m.kind == ModelKind::FreeParticle       ? 2
               : m.kind == ModelKind::Electrodynamics ? 10 * sites
                                                       : (2.0 + m.shape.size()) * m.r * sites;
  if (dim > static_cast<double>(kMaxAmbientDim))
    fail(p + "/shape", "slice system of dimension " + std::to_string(static_cast<long long>(dim)) +
                           " exceeds the dense limit " + std::to_string(kMaxAmbientDim));
  return m;
}

std::vector<std::string> model_components(const ModelConfig& m) {
  switch (m.kind) {
    case ModelKind::FreeParticle: return {"q", "p"};
    case ModelKind::VectorBoson: {
      std::vector<std::string> c{"phi"};
      for (std::size_t mu = 0; mu <= m.shape.size(); ++mu) c.push_back("P" + std::to_string(mu));
      return c;
    }
    case ModelKind::Electrodynamics:
      return {"A0", "A1", "A2", "A3", "AT1", "AT2", "AT3", "AL1", "AL2", "AL3",
              "P01", "P02", "P03", "P10", "P20", "P30", "P12", "P13", "P23", "P21", "P31", "P32"};
  }
  return {};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

FieldPoint to_point(const ObservableConfig& o) {
  FieldPoint f;
  f.component = o.component;
  f.site = o.site;
  f.t = o.t;
  f.fiber = o.fiber;
  return f;
}

// Everything a command needs, built once in dependency order.
class Context {
 public:
  Context(const RunConfig& cfg, bool need_flow)
      : cfg_(cfg), model_(make_spec(cfg.model), make_lattice(cfg.model)) {
    auto t0 = std::chrono::steady_clock::now();
    chain_ = analyze_slice(model_, cfg.tolerances.rank_rtol);
    timings_["constraint_algorithm_s"] = seconds_since(t0);
    if (chain_.classification == Classification::Gauge) {
      t0 = std::chrono::steady_clock::now();
      projector_ = coulomb_projector(chain_, model_);
      timings_["projector_s"] = seconds_since(t0);
    }
    if (need_flow) {
      t0 = std::chrono::steady_clock::now();
      FlowOptions opt;
      opt.window_begin = 0.0;
      opt.window_end = cfg.window_end();
      flow_ = build_flow(chain_, projector(), &model_, opt);
      flat_.emplace(chain_.omega_final, projector_ ? &projector_->matrix() : nullptr, chain_.rank_rtol);
      timings_["flow_s"] = seconds_since(t0);
    }
  }

  const RunConfig& cfg() const { return cfg_; }
  const SliceModel& model() const { return model_; }
  const ConstraintChainResult& chain() const { return chain_; }
  const ConnectionProjector* projector() const { return projector_ ? &*projector_ : nullptr; }
  const FlowOperator& flow() const { return *flow_; }
  const FlatMap& flat() const { return *flat_; }
  json& timings() { return timings_; }

  json chain_summary() const {
    json dims = json::array(), steps = json::array();
    for (const auto& s : chain_.chain) dims.push_back(s.dim());
    for (const auto& s : chain_.steps) steps.push_back(s.new_constraints);
    return {{"dims", dims},
            {"new_constraints", steps},
            {"iterations", chain_.iterations},
            {"chain_length", chain_.chain.size()},
            {"classification", to_string(chain_.classification)},
            {"pinned_blocks", model_.inert_blocks()},
            {"final_dim", chain_.final_space.dim()},
            {"kernel_dim", chain_.kernel_final.dim()}};
  }

  json base(const std::string& command) const {
    json cfg = emit_config(cfg_);
    cfg.erase("output");
    json j{{"tool", "covphase"},
           {"version", version()},
           {"command", command},
           {"config_hash", hex64(config_hash(cfg_))},
           {"seed", cfg_.seed},
           {"config", cfg},
           {"model", model_.summary()},
           {"chain", chain_summary()},
           {"kernel_dim", chain_.kernel_final.dim()},
           {"projector", projector_ ? projector_->diagnostics() : json(nullptr)}};
    if (flow_) {
      j["flow"] = {{"mode", to_string(flow_->mode())}, {"warnings", flow_->warnings()}};
      if (flow_->mode() == FlowMode::Leapfrog) j["flow"]["leapfrog_dt"] = flow_->leapfrog_dt();
    }
    return j;
  }

  // Cauchy datum in final-space coordinates (horizontal in the gauge case)
  Vector datum(std::uint64_t seed_offset = 0) const {
    const auto& init = cfg_.initial;
    const Matrix& B = chain_.final_space.basis;
    const Eigen::Index k = B.cols();
    Vector w;
    if (init.type == "random") {
      std::mt19937_64 rng(cfg_.seed + seed_offset);
      std::normal_distribution<double> g;
      w.resize(k);
      for (Eigen::Index i = 0; i < k; ++i) w(i) = g(rng);
    } else {
      const auto& L = model_.lattice();
      const Eigen::Index N = L.sites();
      const auto& pos = model_.block(model_.position_block());
      const auto& mom = model_.block(model_.momentum_block());
      int pol = 0;
      if (model_.spec().kind() == ModelKind::Electrodynamics) {
        pol = static_cast<int>(std::find(init.mode.begin(), init.mode.end(), 0) - init.mode.begin());
        if (pol == 3) fail("/initial/mode", "a transverse polarization needs a zero mode component");
      }
      Vector target = Vector::Zero(pos.size + mom.size);
      for (Eigen::Index s = 0; s < N; ++s) {
        auto x = L.coords(s);
        double ph = 0;
        for (int j = 0; j < L.dims(); ++j) ph += 2 * std::numbers::pi * init.mode[j] * x[j] / L.shape()[j];
        target(pol * N + s) = init.amplitude * std::cos(ph);
      }
      Matrix rows(pos.size + mom.size, k);
      rows << B.middleRows(pos.offset, pos.size), B.middleRows(mom.offset, mom.size);
      w = rows.colPivHouseholderQr().solve(target);
      if ((rows * w - target).norm() > 1e-8 * std::max(1.0, target.norm()))
        throw Error(ErrorKind::InvalidConfig, "at /initial: plane wave is not on the final constraint manifold");
    }
    if (projector_) w -= projector_->apply(w);
    if (init.type == "random" && w.norm() > 0) w *= init.amplitude / w.norm();
    return w;
  }

  std::vector<BracketPair> bracket_pairs() const {
    std::vector<BracketPair> out;
    const auto& obs = cfg_.observables;
    if (!cfg_.pairs.empty()) {
      for (const auto& p : cfg_.pairs) out.push_back({to_point(obs[p[0]]), to_point(obs[p[1]])});
    } else {
      for (std::size_t i = 0; i < obs.size(); ++i)
        for (std::size_t j = i + 1; j < obs.size(); ++j) out.push_back({to_point(obs[i]), to_point(obs[j])});
    }
    return out;
  }

  // gauge-invariant pairs for the invariant suite: configured ones, else a default pair
  std::vector<BracketPair> probe_pairs() const {
    std::vector<BracketPair> out;
    for (const auto& p : bracket_pairs())
      if (!model_.gauge_variant(p.F.component) && !model_.gauge_variant(p.G.component)) out.push_back(p);
    if (!out.empty()) return out;
    const double W = cfg_.window_end();
    const int d = model_.lattice().dims();
    std::vector<int> s0(d, 0), s1(d, 0);
    if (d) s1[0] = 1;
    auto pt = [](const char* c, std::vector<int> s, double t) {
      FieldPoint f;
      f.component = c;
      f.site = std::move(s);
      f.t = t;
      return f;
    };
    switch (model_.spec().kind()) {
      case ModelKind::FreeParticle: out.push_back({pt("q", s0, 0.2 * W), pt("q", s0, 0.7 * W)}); break;
      case ModelKind::VectorBoson: out.push_back({pt("phi", s0, 0.25 * W), pt("P0", s1, 0.6 * W)}); break;
      case ModelKind::Electrodynamics: out.push_back({pt("AT1", s0, 0.25 * W), pt("AT2", s1, 0.6 * W)}); break;
    }
    return out;
  }

 private:
  RunConfig cfg_;
  SliceModel model_;
  ConstraintChainResult chain_;
  std::optional<ConnectionProjector> projector_;
  std::optional<FlowOperator> flow_;
  std::optional<FlatMap> flat_;
  json timings_ = json::object();
};

json invariants_json(const std::vector<InvariantResult>& inv) {
  json a = json::array();
  for (const auto& r : inv) {
    json e{{"name", r.name},
           {"measured", r.measured},
           {"threshold", r.threshold},
           {"relation", r.upper_bound ? "<=" : ">="},
           {"pass", r.pass}};
    if (!r.detail.empty()) e["detail"] = r.detail;
    a.push_back(e);
  }
  return a;
}

std::string invariants_csv(const std::vector<InvariantResult>& inv) {
  std::ostringstream os;
  os.precision(17);
  os << "name,measured,relation,threshold,pass\n";
  for (const auto& r : inv)
    os << r.name << "," << r.measured << "," << (r.upper_bound ? "<=" : ">=") << "," << r.threshold << ","
       << (r.pass ? "true" : "false") << "\n";
  return os.str();
}

void add_invariant(std::vector<InvariantResult>& inv, std::string name, double measured, double threshold,
                   bool upper = true, std::string detail = {}) {
  bool pass = std::isfinite(measured) && (upper ? measured <= threshold : measured >= threshold);
  inv.push_back({std::move(name), measured, threshold, upper, pass, std::move(detail)});
}

void finish(RunReport& rep, Context* ctx, const RunOptions& opt, std::chrono::steady_clock::time_point t0) {
  rep.ok = std::all_of(rep.invariants.begin(), rep.invariants.end(), [](const auto& r) { return r.pass; });
  if (!rep.invariants.empty()) {
    rep.json["invariants"] = invariants_json(rep.invariants);
    rep.tables.emplace_back("invariants.csv", invariants_csv(rep.invariants));
  }
  rep.json["status"] = rep.ok ? "ok" : "invariant_failure";
  if (!opt.stable_output) {
    json t = ctx ? ctx->timings() : json::object();
    t["total_s"] = seconds_since(t0);
    rep.json["timings"] = t;
  }
}

std::vector<Vector> trajectory(const Context& ctx, const Vector& w0, int steps, double dt) {
  std::vector<Vector> out;
  out.reserve(steps + 1);
  const double sigma = ctx.cfg().sigma_time();
  for (int n = 0; n <= steps; ++n) out.push_back(ctx.flow().evolve(w0, n * dt - sigma));
  return out;
}

DiscretizedSection assemble(const Context& ctx, const std::vector<Vector>& ws, double dt) {
  std::vector<Vector> states;
  states.reserve(ws.size());
  for (const auto& w : ws) states.push_back(ctx.chain().final_space.embed(w));
  return curve_to_section(ctx.model(), states,
                          SpacetimeLattice(static_cast<int>(ws.size()), dt, ctx.model().lattice(), 0.0));
}

double gauss_violation(const Context& ctx, const Vector& w) {
  const auto& L = ctx.model().lattice();
  const auto& pb = ctx.model().block("p");
  Vector z = ctx.chain().final_space.embed(w);
  return (L.divergence() * z.segment(pb.offset, pb.size)).cwiseAbs().maxCoeff();
}

}  // namespace

// ---- config ----

RunConfig parse_config(const json& j) {
  check_keys(j, "", {"model", "time", "observables", "pairs", "initial", "tolerances", "output", "seed",
                     "description"});
  RunConfig c;
  if (!j.contains("model")) fail("/model", "required section is missing");
  c.model = parse_model(j.at("model"), "/model");

  if (!j.contains("time")) fail("/time", "required section is missing");
  const json& t = j.at("time");
  check_keys(t, "/time", {"dt", "n_steps", "sigma_index"});
  c.time.dt = get_number(t, "dt", "/time", std::nullopt);
  if (!(c.time.dt > 0)) fail("/time/dt", "must be > 0");
  long long n = get_integer(t, "n_steps", "/time", std::nullopt);
  if (n < 2 || n > 1000000) fail("/time/n_steps", "must be in [2, 1000000]");
  c.time.n_steps = static_cast<int>(n);
  long long si = get_integer(t, "sigma_index", "/time", 0);
  if (si < 0 || si > n) fail("/time/sigma_index", "must lie in the window [0, n_steps]");
  c.time.sigma_index = static_cast<int>(si);

  const auto comps = model_components(c.model);
  const int d = static_cast<int>(c.model.shape.size());
  if (j.contains("observables")) {
    const json& obs = j.at("observables");
    if (!obs.is_array()) fail("/observables", "expected a list");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string p = "/observables/" + std::to_string(i);
      check_keys(obs[i], p, {"component", "site", "t", "fiber"});
      ObservableConfig o;
      if (!obs[i].contains("component") || !obs[i]["component"].is_string())
        fail(p + "/component", "required string is missing");
      o.component = obs[i]["component"].get<std::string>();
      if (std::find(comps.begin(), comps.end(), o.component) == comps.end())
        fail(p + "/component", "unknown component '" + o.component + "' for this model");
      o.site = get_int_list(obs[i], "site", p, d > 0);
      if (static_cast<int>(o.site.size()) != d)
        fail(p + "/site", "expected " + std::to_string(d) + " coordinates");
      for (int a = 0; a < d; ++a)
        if (o.site[a] < 0 || o.site[a] >= c.model.shape[a])
          fail(p + "/site/" + std::to_string(a), "outside the lattice");
      o.t = get_number(obs[i], "t", p, std::nullopt);
      if (o.t < 0 || o.t > c.window_end() * (1 + 1e-12))
        fail(p + "/t", "outside the evolution window [0, n_steps*dt]");
      long long fib = get_integer(obs[i], "fiber", p, 0);
      const int r = c.model.kind == ModelKind::VectorBoson ? c.model.r : 1;
      if (fib < 0 || fib >= r) fail(p + "/fiber", "fiber index out of range");
      o.fiber = static_cast<int>(fib);
      c.observables.push_back(o);
    }
  }

  if (j.contains("pairs")) {
    const json& pr = j.at("pairs");
    if (!pr.is_array()) fail("/pairs", "expected a list of index pairs");
    for (std::size_t i = 0; i < pr.size(); ++i) {
      const std::string p = "/pairs/" + std::to_string(i);
      if (!pr[i].is_array() || pr[i].size() != 2 || !pr[i][0].is_number_integer() || !pr[i][1].is_number_integer())
        fail(p, "expected [i, j]");
      std::array<int, 2> ij{pr[i][0].get<int>(), pr[i][1].get<int>()};
      for (int k = 0; k < 2; ++k)
        if (ij[k] < 0 || ij[k] >= static_cast<int>(c.observables.size()))
          fail(p + "/" + std::to_string(k), "no such observable");
      c.pairs.push_back(ij);
    }
  }

  if (j.contains("initial")) {
    const json& in = j.at("initial");
    check_keys(in, "/initial", {"type", "mode", "amplitude"});
    if (in.contains("type")) {
      if (!in["type"].is_string()) fail("/initial/type", "expected a string");
      c.initial.type = in["type"].get<std::string>();
    }
    if (c.initial.type != "random" && c.initial.type != "plane_wave")
      fail("/initial/type", "expected random or plane_wave");
    c.initial.mode = get_int_list(in, "mode", "/initial", c.initial.type == "plane_wave");
    if (c.initial.type == "plane_wave") {
      if (c.model.kind == ModelKind::FreeParticle) fail("/initial/type", "plane_wave needs a spatial lattice");
      if (static_cast<int>(c.initial.mode.size()) != d) fail("/initial/mode", "expected " + std::to_string(d) + " entries");
    }
    c.initial.amplitude = get_number(in, "amplitude", "/initial", 1.0);
  }

  if (j.contains("tolerances")) {
    const json& tl = j.at("tolerances");
    check_keys(tl, "/tolerances", {"rank_rtol", "bracket_tol"});
    c.tolerances.rank_rtol = get_number(tl, "rank_rtol", "/tolerances", kDefaultRankRtol);
    if (!(c.tolerances.rank_rtol > 0 && c.tolerances.rank_rtol < 1e-2))
      fail("/tolerances/rank_rtol", "must lie in (0, 1e-2)");
    c.tolerances.bracket_tol = get_number(tl, "bracket_tol", "/tolerances", 1e-10);
    if (!(c.tolerances.bracket_tol > 0)) fail("/tolerances/bracket_tol", "must be > 0");
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "/output", {"dir", "formats"});
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) fail("/output/dir", "expected a string");
      c.output.dir = o["dir"].get<std::string>();
    }
    if (o.contains("formats")) {
      const json& f = o["formats"];
      if (!f.is_array() || f.empty()) fail("/output/formats", "expected a non-empty list");
      c.output.formats.clear();
      for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f[i].is_string() || (f[i] != "json" && f[i] != "csv"))
          fail("/output/formats/" + std::to_string(i), "expected json or csv");
        std::string s = f[i].get<std::string>();
        if (std::find(c.output.formats.begin(), c.output.formats.end(), s) != c.output.formats.end())
          fail("/output/formats/" + std::to_string(i), "duplicate format");
        c.output.formats.push_back(s);
      }
    }
  }

  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      fail("/seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    auto pos = msg.find("parse error");
    throw Error(ErrorKind::InvalidConfig, pos == std::string::npos ? msg : msg.substr(pos));
  }
  return parse_config(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json emit_config(const RunConfig& c) {
  json model;
  switch (c.model.kind) {
    case ModelKind::FreeParticle: model["free_particle"] = {{"mass", c.model.mass}}; break;
    case ModelKind::VectorBoson:
      model["vector_boson"] = {{"mass", c.model.mass}, {"r", c.model.r}, {"shape", c.model.shape}, {"h", c.model.h}};
      break;
    case ModelKind::Electrodynamics: model["electrodynamics"] = {{"shape", c.model.shape}, {"h", c.model.h}}; break;
  }
  json obs = json::array();
  for (const auto& o : c.observables)
    obs.push_back({{"component", o.component}, {"site", o.site}, {"t", o.t}, {"fiber", o.fiber}});
  json pairs = json::array();
  for (const auto& p : c.pairs) pairs.push_back({p[0], p[1]});
  json init{{"type", c.initial.type}, {"amplitude", c.initial.amplitude}};
  if (!c.initial.mode.empty()) init["mode"] = c.initial.mode;
  return {{"model", model},
          {"time", {{"dt", c.time.dt}, {"n_steps", c.time.n_steps}, {"sigma_index", c.time.sigma_index}}},
          {"observables", obs},
          {"pairs", pairs},
          {"initial", init},
          {"tolerances", {{"rank_rtol", c.tolerances.rank_rtol}, {"bracket_tol", c.tolerances.bracket_tol}}},
          {"output", {{"dir", c.output.dir}, {"formats", c.output.formats}}},
          {"seed", c.seed}};
}

std::uint64_t config_hash(const RunConfig& c) {
  json j = emit_config(c);
  j.erase("output");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

FieldTheorySpec make_spec(const ModelConfig& m) {
  switch (m.kind) {
    case ModelKind::FreeParticle: return FieldTheorySpec::free_particle(m.mass);
    case ModelKind::VectorBoson: return FieldTheorySpec::vector_boson(m.mass, m.r, static_cast<int>(m.shape.size()));
    case ModelKind::Electrodynamics: return FieldTheorySpec::electrodynamics();
  }
  throw Error(ErrorKind::UnsupportedSpec, "unknown model");
}

SpatialLattice make_lattice(const ModelConfig& m) {
  if (m.kind == ModelKind::FreeParticle) return SpatialLattice();
  return SpatialLattice(m.shape, std::vector<double>(m.shape.size(), m.h));
}

// ---- commands ----

RunReport cmd_analyze(const RunConfig& config, const RunOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  Context ctx(config, false);
  RunReport rep;
  rep.command = "analyze";
  rep.json = ctx.base("analyze");
  const auto& ch = ctx.chain();
  if (ch.classification == Classification::Symplectic && ch.final_space.dim() > 0) {
    Vector sv = singular_values(ch.omega_final);
    rep.json["omega_final_condition"] = sv(sv.size() - 1) / sv(0);
  }
  std::ostringstream csv;
  csv << "step,dim,new_constraints\n";
  for (std::size_t i = 0; i < ch.chain.size(); ++i)
    csv << i << "," << ch.chain[i].dim() << "," << (i ? ch.steps[i - 1].new_constraints : 0) << "\n";
  rep.tables.emplace_back("chain.csv", csv.str());
  finish(rep, &ctx, options, t0);
  return rep;
}

RunReport cmd_bracket(const RunConfig& config, const RunOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  Context ctx(config, true);
  RunReport rep;
  rep.command = "bracket";
  rep.json = ctx.base("bracket");
  auto tb = std::chrono::steady_clock::now();
  auto rows = bracket_batch(ctx.bracket_pairs(), ctx.flow(), ctx.model(), config.sigma_time(), ctx.flat(),
                            options.threads);
  ctx.timings()["brackets_s"] = seconds_since(tb);
  rep.json["sigma_time"] = config.sigma_time();
  rep.json["brackets"] = brackets_to_json(rows);
  rep.tables.emplace_back("brackets.csv", brackets_to_csv(rows));
  finish(rep, &ctx, options, t0);
  return rep;
}

RunReport cmd_evolve(const RunConfig& config, const RunOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  Context ctx(config, true);
  RunReport rep;
  rep.command = "evolve";
  rep.json = ctx.base("evolve");
  const double dt = config.time.dt;
  Vector w0 = ctx.datum();
  auto ws = trajectory(ctx, w0, config.time.n_steps, dt);
  auto sec = assemble(ctx, ws, dt);
  SpacetimeLattice lat(config.time.n_steps + 1, dt, ctx.model().lattice(), 0.0);
  auto res = ddw_residual(ctx.model().spec(), lat, sec);

  json energies = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "step,t,energy\n";
  const double e0 = ctx.flow().energy(ws[0]);
  double drift = 0, gauss = 0, horiz = 0;
  const bool ed = ctx.model().spec().kind() == ModelKind::Electrodynamics;
  for (std::size_t n = 0; n < ws.size(); ++n) {
    const double e = ctx.flow().energy(ws[n]);
    energies.push_back(e);
    drift = std::max(drift, std::abs(e - e0));
    csv << n << "," << n * dt << "," << e << "\n";
    if (ed) gauss = std::max(gauss, gauss_violation(ctx, ws[n]));
    if (ctx.projector()) horiz = std::max(horiz, ctx.flow().horizontality_defect(ws[n]));
  }
  json tr{{"time_steps", ws.size()},
          {"dt", dt},
          {"sigma_time", config.sigma_time()},
          {"initial", config.initial.type},
          {"energy_initial", e0},
          {"energy_max_deviation", drift},
          {"ddw_residual_max", res.max_interior()},
          {"energies", energies}};
  if (ed) tr["gauss_law_max"] = gauss;
  if (ctx.projector()) tr["horizontality_max"] = horiz;
  rep.json["trajectory"] = tr;
  rep.tables.emplace_back("trajectory.csv", csv.str());
  rep.section = std::move(sec);
  finish(rep, &ctx, options, t0);
  return rep;
}

RunReport cmd_verify(const RunConfig& config, const RunOptions& options) {
  auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.command = "verify";
  auto& inv = rep.invariants;

  // structural checks on the slice system itself, where the fault hook lands
  {
    SliceModel m(make_spec(config.model), make_lattice(config.model));
    Matrix omega = m.system().omega();
    if (options.corrupt_omega && omega.rows() > 1) omega(0, omega.cols() - 1) += 1e-3;
    try {
      PresymplecticSystem checked(omega, m.system().hamiltonian());
      add_invariant(inv, "omega_antisymmetric", antisymmetry_defect(checked.omega()), 1e-12);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonAntisymmetric) throw;
      add_invariant(inv, "omega_antisymmetric", antisymmetry_defect(omega), 1e-12, true, to_string(e.kind()));
      rep.json = {{"tool", "covphase"},
                  {"version", version()},
                  {"command", "verify"},
                  {"config_hash", hex64(config_hash(config))},
                  {"seed", config.seed},
                  {"error", e.what()}};
      finish(rep, nullptr, options, t0);
      return rep;
    }
    add_invariant(inv, "hamiltonian_symmetric", symmetry_defect(m.system().hamiltonian().Q()), 1e-12);
  }

  Context ctx(config, true);
  rep.json = ctx.base("verify");
  const auto& ch = ctx.chain();
  const auto& sys = ctx.model().system();
  const auto& flow = ctx.flow();
  const Eigen::Index k = ch.final_space.dim();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> g;
  auto randvec = [&](Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    return v;
  };
  auto horizontal = [&]() {
    Vector v = randvec(k);
    if (ctx.projector()) v -= ctx.projector()->apply(v);
    return Vector(v / v.norm());
  };

  // constraint chain
  double nest = 0;
  for (std::size_t i = 0; i + 1 < ch.chain.size(); ++i) {
    const Matrix& A = ch.chain[i].basis;
    const Matrix& B = ch.chain[i + 1].basis;
    nest = std::max(nest, max_abs(B - A * (A.transpose() * B)));
  }
  add_invariant(inv, "chain_nested", nest, 1e-10);
  add_invariant(inv, "final_basis_orthonormal", ch.final_space.orthonormality_defect(), 1e-10);
  Matrix probes(k, 4);
  for (int c = 0; c < 4; ++c) probes.col(c) = randvec(k);
  add_invariant(inv, "stability", stability_defect(sys, ch, probes) / std::max(1.0, max_abs(sys.hamiltonian().Q())),
                1e-9);
  if (ch.classification == Classification::Symplectic) {
    Vector sv = singular_values(ch.omega_final);
    add_invariant(inv, "omega_final_nondegenerate", sv.size() ? sv(sv.size() - 1) / sv(0) : 1.0,
                  config.tolerances.rank_rtol, false);
  } else {
    const auto* P = ctx.projector();
    add_invariant(inv, "projector_idempotent", P->idempotency_residual(), 1e-12);
    add_invariant(inv, "projector_rank_matches_kernel", std::abs(double(P->rank() - ch.kernel_final.dim())), 0.0);
    add_invariant(inv, "projector_range_in_kernel", P->range_residual(), 1e-10);
  }

  // flow
  const double dt = config.time.dt;
  const int n = config.time.n_steps;
  const bool exact = flow.mode() == FlowMode::Spectral;
  {
    Vector u = horizontal(), v = horizontal();
    const Matrix& W = flow.omega();
    const double scale = std::max(1e-300, max_abs(W));
    const double ref = u.dot(W * v);
    double iso = 0;
    for (int s : {1, std::max(1, n / 2), n})
      iso = std::max(iso, std::abs(flow.evolve(u, s * dt).dot(W * flow.evolve(v, s * dt)) - ref) / scale);
    add_invariant(inv, "flow_isotropy", iso, exact ? 1e-10 : 1e-6);
  }
  Vector w0 = ctx.datum();
  auto ws = trajectory(ctx, w0, n, dt);
  {
    const double e0 = flow.energy(w0);
    double dev = 0;
    for (const auto& w : ws) dev = std::max(dev, std::abs(flow.energy(w) - e0));
    add_invariant(inv, "energy_conservation", dev / std::max(std::abs(e0), 1e-300), exact ? 1e-10 : 1e-2);
  }
  if (ctx.projector()) {
    double hd = 0;
    for (const auto& w : ws) hd = std::max(hd, flow.horizontality_defect(w) / std::max(1.0, w.norm()));
    add_invariant(inv, "horizontality_preserved", hd, 1e-9);
  }
  if (ctx.model().spec().kind() == ModelKind::Electrodynamics) {
    double gv = 0;
    for (const auto& w : ws) gv = std::max(gv, gauss_violation(ctx, w) / std::max(1.0, w.norm()));
    add_invariant(inv, "gauss_law_preserved", gv, 1e-10);
  }

  // covariant equations on the sampled solution
  {
    const int steps = std::min(n, 10);
    auto fine = [&](int refine) {
      auto w = trajectory(ctx, w0, steps * refine, dt / refine);
      SpacetimeLattice lat(steps * refine + 1, dt / refine, ctx.model().lattice(), 0.0);
      return ddw_residual(ctx.model().spec(), lat, assemble(ctx, w, dt / refine)).max_interior();
    };
    const double r1 = fine(1);
    if (ctx.model().spec().kind() == ModelKind::FreeParticle) {
      add_invariant(inv, "ddw_residual", r1 / std::max(1.0, w0.norm()), 1e-12);
    } else {
      const double r2 = fine(2);
      add_invariant(inv, "ddw_residual_order", r2 > 0 ? std::log2(r1 / r2) : 0.0, 1.9, false,
                    "time-step halving on the sampled exact slice solution");
    }
  }

  // brackets
  {
    double anti = 0;
    for (int trial = 0; trial < 4; ++trial) {
      Vector a = randvec(k), b = randvec(k);
      if (ch.kernel_final.dim()) {
        const Matrix& K = ch.kernel_final.basis;
        a -= K * (K.transpose() * a);
        b -= K * (K.transpose() * b);
      }
      CauchyLinear f{a, "f"}, h{b, "h"};
      anti = std::max(anti, std::abs(bracket(f, h, ctx.flat()) + bracket(h, f, ctx.flat())) / (a.norm() * b.norm()));
    }
    add_invariant(inv, "bracket_antisymmetry", anti, 1e-12);

    double slice = 0, lift = 0;
    const double tol = config.tolerances.bracket_tol;
    for (const auto& p : ctx.probe_pairs()) {
      const double base = bracket_spacetime(p.F, p.G, flow, ctx.model(), config.sigma_time(), ctx.flat());
      for (int s = 1; s <= 10; ++s) {
        const double sigma = ((config.time.sigma_index + s) % (n + 1)) * dt;
        slice = std::max(slice, std::abs(bracket_spacetime(p.F, p.G, flow, ctx.model(), sigma, ctx.flat()) - base));
      }
      lift = std::max(lift, std::abs(bracket_spacetime_tangent_lift(p.F, p.G, flow, ctx.model(), config.sigma_time(),
                                                                    ctx.flat()) -
                                     base));
    }
    add_invariant(inv, "slice_independence", slice, tol, true, "10 slice shifts");
    add_invariant(inv, "tangent_lift_agreement", lift, tol);

    if (ch.kernel_final.dim()) {
      // transverse observables see no pure-gauge shift of the datum
      const Matrix& K = ch.kernel_final.basis;
      double gi = 0;
      for (const auto& p : ctx.probe_pairs())
        for (const auto* fp : {&p.F, &p.G}) {
          auto f = pullback_observable(*fp, flow, ctx.model(), config.sigma_time());
          gi = std::max(gi, (K.transpose() * f.coefficients).cwiseAbs().maxCoeff());
        }
      add_invariant(inv, "gauge_invariance", gi, 1e-10);
    }
  }
  finish(rep, &ctx, options, t0);
  return rep;
}

std::vector<std::string> write_outputs(const RunReport& report, const std::string& dir,
                                       const std::vector<std::string>& formats) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir + ": " + ec.message());
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text, std::ios::openmode mode = std::ios::out) {
    fs::path p = fs::path(dir) / name;
    std::ofstream out(p, mode);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    out << text;
    written.push_back(p.string());
  };
  const bool want_json = std::find(formats.begin(), formats.end(), "json") != formats.end();
  const bool want_csv = std::find(formats.begin(), formats.end(), "csv") != formats.end();
  if (want_json) put("report.json", report.json.dump(2) + "\n");
  if (want_csv)
    for (const auto& [name, text] : report.tables) put(name, text);
  if (report.section) {
    std::ostringstream bin;
    write_section_binary(bin, *report.section);
    put("section.bin", bin.str(), std::ios::out | std::ios::binary);
    if (want_json) put("section.json", section_to_json(*report.section).dump() + "\n");
  }
  return written;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidArgument:
    case ErrorKind::Io:
    case ErrorKind::UnsupportedSpec:
    case ErrorKind::IndexOutOfRange:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::LengthMismatch:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::OutOfWindow:
    case ErrorKind::GaugeVariantObservable:
      return 1;
    default:
      return 2;
  }
}

}  // namespace covphase
