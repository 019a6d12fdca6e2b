#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "covphase/bracket.hpp"
#include "covphase/ddw.hpp"
#include "covphase/error.hpp"

namespace covphase {

const char* version();

struct ModelConfig {
  ModelKind kind = ModelKind::FreeParticle;
  double mass = 1.0;
  int r = 1;
  std::vector<int> shape;  // empty for the free particle
  double h = 1.0;
  bool operator==(const ModelConfig&) const = default;
};

struct TimeConfig {
  double dt = 0.1;
  int n_steps = 50;
  int sigma_index = 0;
  bool operator==(const TimeConfig&) const = default;
};

struct ObservableConfig {
  std::string component;
  std::vector<int> site;
  double t = 0.0;
  int fiber = 0;
  bool operator==(const ObservableConfig&) const = default;
};

// Cauchy datum used by evolve and the invariant suite. "random" draws from the
// seed; "plane_wave" puts cos(k.x) into the position block (vector boson) or
// into a transverse component of a (electrodynamics).
struct InitialConfig {
  std::string type = "random";
  std::vector<int> mode;
  double amplitude = 1.0;
  bool operator==(const InitialConfig&) const = default;
};

struct ToleranceConfig {
  double rank_rtol = kDefaultRankRtol;
  double bracket_tol = 1e-10;
  bool operator==(const ToleranceConfig&) const = default;
};

struct OutputConfig {
  std::string dir;
  std::vector<std::string> formats{"json"};
  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TimeConfig time;
  std::vector<ObservableConfig> observables;
  std::vector<std::array<int, 2>> pairs;  // empty: every i < j
  InitialConfig initial;
  ToleranceConfig tolerances;
  OutputConfig output;
  std::uint64_t seed = 0;
  bool operator==(const RunConfig&) const = default;

  double window_end() const { return time.dt * time.n_steps; }
  double sigma_time() const { return time.dt * time.sigma_index; }
};

// Schema validation; errors are InvalidConfig with a JSON-pointer style path.
RunConfig parse_config(const nlohmann::json& j);
// Also maps syntax errors (with line and column) to InvalidConfig.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
nlohmann::json emit_config(const RunConfig& c);
// FNV-1a over the canonical dump, output block excluded
std::uint64_t config_hash(const RunConfig& c);

FieldTheorySpec make_spec(const ModelConfig& m);
SpatialLattice make_lattice(const ModelConfig& m);

struct RunOptions {
  bool stable_output = false;
  unsigned threads = 0;
  // test hook: breaks the antisymmetry of omega before the structural checks
  bool corrupt_omega = false;
};

struct InvariantResult {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool upper_bound = true;  // pass iff measured <= threshold, else measured >= threshold
  bool pass = false;
  std::string detail;
};

struct RunReport {
  std::string command;
  nlohmann::json json;
  std::vector<InvariantResult> invariants;
  // file name -> CSV text, written when "csv" is among the formats
  std::vector<std::pair<std::string, std::string>> tables;
  std::optional<DiscretizedSection> section;
  bool ok = true;
};

RunReport cmd_analyze(const RunConfig& config, const RunOptions& options = {});
RunReport cmd_bracket(const RunConfig& config, const RunOptions& options = {});
RunReport cmd_evolve(const RunConfig& config, const RunOptions& options = {});
RunReport cmd_verify(const RunConfig& config, const RunOptions& options = {});

// Writes report.json / tables / section files into dir according to formats.
std::vector<std::string> write_outputs(const RunReport& report, const std::string& dir,
                                       const std::vector<std::string>& formats);

// 1 validation, 2 invariant failure
int exit_code(ErrorKind kind);

}  // namespace covphase
