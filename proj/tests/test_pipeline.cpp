#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "covphase/pipeline.hpp"

using namespace covphase;
using json = nlohmann::json;

namespace {

std::string shipped(const std::string& name) { return std::string(COVPHASE_SOURCE_DIR) + "/configs/" + name; }

json base_config() {
  return json::parse(R"({
    "model": {"vector_boson": {"mass": 1.0, "r": 1, "shape": [3, 3, 3], "h": 1.0}},
    "time": {"dt": 0.1, "n_steps": 20, "sigma_index": 5},
    "observables": [
      {"component": "phi", "site": [0, 0, 0], "t": 0.5},
      {"component": "P0", "site": [1, 2, 0], "t": 1.5}
    ],
    "seed": 4
  })");
}

std::string error_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config round trip") {
  for (const char* name : {"free_particle.json", "vector_boson_4.json", "electrodynamics_4.json"}) {
    RunConfig c = load_config(shipped(name));
    CHECK(parse_config(emit_config(c)) == c);
    CHECK(emit_config(parse_config(emit_config(c))) == emit_config(c));
    CHECK(parse_config_text(emit_config(c).dump(2)) == c);
  }
  RunConfig c = parse_config(base_config());
  CHECK(c.model.kind == ModelKind::VectorBoson);
  CHECK(c.tolerances.rank_rtol == kDefaultRankRtol);
  CHECK(c.output.formats == std::vector<std::string>{"json"});
  CHECK(c.sigma_time() == doctest::Approx(0.5));
  CHECK(parse_config(emit_config(c)) == c);
}

TEST_CASE("config validation names the offending field") {
  auto expect = [](json j, const std::string& path) {
    std::string msg = error_of(j);
    INFO(msg);
    CHECK(msg.find("at " + path + ":") != std::string::npos);
  };
  json j = base_config();
  j["model"]["vector_boson"]["shape"][1] = 1;
  expect(j, "/model/vector_boson/shape/1");
  j = base_config();
  j["time"]["dt"] = 0.0;
  expect(j, "/time/dt");
  j = base_config();
  j["time"]["sigma_index"] = 21;
  expect(j, "/time/sigma_index");
  j = base_config();
  j["observables"][1]["t"] = 2.5;
  expect(j, "/observables/1/t");
  j = base_config();
  j["observables"][0]["site"] = {0, 3, 0};
  expect(j, "/observables/0/site/1");
  j = base_config();
  j["observables"][0]["component"] = "AT1";
  expect(j, "/observables/0/component");
  j = base_config();
  j["tolerances"] = {{"rank_rtl", 1e-9}};
  expect(j, "/tolerances/rank_rtl");
  j = base_config();
  j["output"] = {{"formats", {"json", "xml"}}};
  expect(j, "/output/formats/1");
  j = base_config();
  j["pairs"] = {{0, 2}};
  expect(j, "/pairs/0/1");
  j = base_config();
  j["seed"] = -1;
  expect(j, "/seed");
  j = base_config();
  j.erase("time");
  expect(j, "/time");
  j = base_config();
  j["model"] = {{"electrodynamics", {{"shape", {40, 40, 40}}}}};
  expect(j, "/model/electrodynamics/shape");
  j = base_config();
  j["initial"] = {{"type", "plane_wave"}, {"mode", {1, 0}}};
  expect(j, "/initial/mode");

  try {
    parse_config_text("{\n  \"model\": {\"free_particle\": {}},\n  \"time\": {\"dt\": 0.1 \"n_steps\": 4}\n}");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("config hash") {
  RunConfig c = parse_config(base_config());
  RunConfig d = c;
  d.output.dir = "elsewhere";
  d.output.formats = {"csv"};
  CHECK(config_hash(c) == config_hash(d));
  d.seed = 5;
  CHECK(config_hash(c) != config_hash(d));
}

TEST_CASE("analyze") {
  auto vb = cmd_analyze(load_config(shipped("vector_boson_4.json")));
  CHECK(vb.json["chain"]["classification"] == "Symplectic");
  CHECK(vb.json["chain"]["iterations"] == 1);
  CHECK(vb.json["chain"]["new_constraints"][0] == 3 * 64);
  CHECK(vb.json["omega_final_condition"].get<double>() > 1e-3);

  auto ed = cmd_analyze(load_config(shipped("electrodynamics_4.json")));
  CHECK(ed.json["chain"]["classification"] == "Gauge");
  CHECK(ed.json["kernel_dim"] == 63);
  CHECK(ed.json["projector"]["rank"] == 63);

  auto fp = cmd_analyze(load_config(shipped("free_particle.json")));
  CHECK(fp.json["chain"]["classification"] == "Symplectic");
  CHECK(fp.json["chain"]["chain_length"] == 1);
  CHECK(fp.json.contains("timings"));
  CHECK(fp.json["version"] == version());
}

TEST_CASE("bracket") {
  RunConfig c = load_config(shipped("free_particle.json"));
  c.observables.resize(2);
  auto rep = cmd_bracket(c);
  REQUIRE(rep.json["brackets"].size() == 1);
  CHECK(rep.json["brackets"][0]["value"].get<double>() == doctest::Approx(-3.0).epsilon(1e-12));
  std::swap(c.observables[0], c.observables[1]);
  rep = cmd_bracket(c);
  CHECK(rep.json["brackets"][0]["value"].get<double>() == doctest::Approx(3.0).epsilon(1e-12));

  auto ed = cmd_bracket(load_config(shipped("electrodynamics_4.json")));
  const auto& rows = ed.json["brackets"];
  REQUIRE(rows.size() == 4);
  CHECK(rows[3]["error"] == "GaugeVariantObservable");
  CHECK_FALSE(rows[0].contains("error"));
  CHECK(ed.ok);
}

TEST_CASE("evolve") {
  RunConfig c = load_config(shipped("electrodynamics_4.json"));
  c.time.n_steps = 20;
  auto rep = cmd_evolve(c);
  REQUIRE(rep.section);
  CHECK(rep.section->time_steps == 21);
  const auto& tr = rep.json["trajectory"];
  CHECK(tr["gauss_law_max"].get<double>() < 1e-10);
  CHECK(tr["horizontality_max"].get<double>() < 1e-9);
  CHECK(tr["energy_max_deviation"].get<double>() < 1e-10 * tr["energy_initial"].get<double>());

  c.initial.mode = {1, 1, 1};
  CHECK_THROWS_AS(cmd_evolve(c), Error);

  auto dir = std::filesystem::temp_directory_path() / "covphase_test_evolve";
  std::filesystem::remove_all(dir);
  RunConfig f = load_config(shipped("free_particle.json"));
  auto fr = cmd_evolve(f, {.stable_output = true});
  auto files = write_outputs(fr, dir.string(), {"json", "csv"});
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "trajectory.csv"));
  CHECK(std::filesystem::exists(dir / "section.json"));
  std::ifstream bin(dir / "section.bin", std::ios::binary);
  CHECK(read_section_binary(bin) == *fr.section);
  std::filesystem::remove_all(dir);
}

TEST_CASE("verify") {
  for (const char* name : {"free_particle.json", "vector_boson_4.json", "electrodynamics_4.json"}) {
    auto rep = cmd_verify(load_config(shipped(name)));
    CHECK(rep.ok);
    for (const auto& r : rep.invariants) {
      INFO(name, " ", r.name, " ", r.measured);
      CHECK(r.pass);
    }
    for (const auto& e : rep.json["invariants"]) {
      CHECK(e.contains("measured"));
      CHECK(e.contains("threshold"));
    }
  }
  auto bad = cmd_verify(load_config(shipped("vector_boson_4.json")), {.corrupt_omega = true});
  CHECK_FALSE(bad.ok);
  REQUIRE(bad.invariants.size() == 1);
  CHECK(bad.invariants[0].detail == "NonAntisymmetric");
  CHECK(bad.json["status"] == "invariant_failure");
}

TEST_CASE("stable output is byte identical") {
  RunConfig c = load_config(shipped("vector_boson_4.json"));
  RunOptions opt;
  opt.stable_output = true;
  CHECK(cmd_verify(c, opt).json.dump() == cmd_verify(c, opt).json.dump());
  opt.threads = 1;
  auto serial = cmd_bracket(c, opt).json.dump();
  opt.threads = 4;
  CHECK(cmd_bracket(c, opt).json.dump() == serial);
  CHECK_FALSE(cmd_bracket(c, opt).json.contains("timings"));
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::InvalidConfig) == 1);
  CHECK(exit_code(ErrorKind::Io) == 1);
  CHECK(exit_code(ErrorKind::NonAntisymmetric) == 2);
  CHECK(exit_code(ErrorKind::KernelMismatch) == 2);
}
