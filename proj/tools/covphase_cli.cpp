#include <CLI11.hpp>

#include <iostream>

#include "covphase/pipeline.hpp"

using namespace covphase;

int main(int argc, char** argv) {
  CLI::App app{"covariant phase space pipeline: constraint analysis, slice evolution and brackets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  std::string config_path, out_dir;
  std::vector<std::string> formats;
  std::optional<std::uint64_t> seed;
  bool stable = false;
  unsigned threads = 0;
  std::string fault;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: config output.dir, else stdout)");
    sub->add_option("--format", formats, "json and/or csv")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--stable-output", stable, "omit wall-clock timings for byte-identical reports");
    sub->add_option("--threads", threads, "bracket worker threads (0: hardware)");
  };
  auto* analyze = app.add_subcommand("analyze", "slice system and constraint algorithm");
  auto* brk = app.add_subcommand("bracket", "brackets of the configured observables");
  auto* evolve = app.add_subcommand("evolve", "evolve a Cauchy datum and dump the trajectory");
  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  for (auto* s : {analyze, brk, evolve, verify}) add_common(s);
  verify->add_option("--inject-fault", fault, "test hook")->check(CLI::IsMember({"corrupt-omega"}))->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (!formats.empty()) cfg.output.formats = formats;

    RunOptions opt;
    opt.stable_output = stable;
    opt.threads = threads;
    opt.corrupt_omega = fault == "corrupt-omega";

    RunReport rep;
    if (analyze->parsed())
      rep = cmd_analyze(cfg, opt);
    else if (brk->parsed())
      rep = cmd_bracket(cfg, opt);
    else if (evolve->parsed())
      rep = cmd_evolve(cfg, opt);
    else
      rep = cmd_verify(cfg, opt);

    if (!cfg.output.dir.empty()) {
      for (const auto& f : write_outputs(rep, cfg.output.dir, cfg.output.formats)) std::cerr << "wrote " << f << "\n";
    } else {
      const bool csv_only = cfg.output.formats.size() == 1 && cfg.output.formats[0] == "csv";
      if (csv_only) {
        for (const auto& [name, text] : rep.tables) std::cout << "# " << name << "\n" << text;
      } else {
        std::cout << rep.json.dump(2) << "\n";
      }
    }
    if (!rep.ok) {
      for (const auto& r : rep.invariants)
        if (!r.pass)
          std::cerr << "invariant failed: " << r.name << " measured " << r.measured << (r.upper_bound ? " > " : " < ")
                    << r.threshold << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
      return 2;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
