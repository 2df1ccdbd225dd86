#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "fieldflow/config.hpp"
#include "fieldflow/dynamics.hpp"
#include "fieldflow/scenario.hpp"

namespace {

std::vector<long> parse_levels(const std::string& text) {
  std::vector<long> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string tok = text.substr(pos, comma - pos);
    size_t used = 0;
    long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("bad level: " + tok);
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fieldsim: structure-preserving simulator for classical field "
               "theories with boundary energy flow"};
  std::string config_path, outdir = "out", axis = "h", levels_str;
  unsigned seed = 0;
  bool check = false;
  app.add_option("--config", config_path, "scenario configuration file (INI)");
  app.add_option("--out", outdir, "output directory");
  app.add_option("--levels", levels_str,
                 "comma-separated refinement levels; runs a convergence study");
  app.add_option("--axis", axis, "refinement axis for --levels: h or dt");
  app.add_flag("--check", check, "run the randomized invariant suite and exit");
  app.add_option("--seed", seed, "random seed for --check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (check) {
      int fails = ff::invariant_suite(seed);
      return fails == 0 ? 0 : 3;
    }
    if (config_path.empty()) {
      std::fprintf(stderr, "error: --config is required\n");
      return 2;
    }
    if (axis != "h" && axis != "dt") {
      std::fprintf(stderr, "error: --axis must be h or dt\n");
      return 2;
    }
    ff::Config cfg = ff::Config::from_file(config_path);
    if (!levels_str.empty()) {
      std::vector<long> levels = parse_levels(levels_str);
      int code = ff::convergence_study(cfg, outdir, axis, levels);
      if (code == 0)
        std::printf("study ok: results in %s\n", outdir.c_str());
      else
        std::printf("study FAILED: see %s/study.json\n", outdir.c_str());
      return code;
    }
    ff::RunSummary sum = ff::run_scenario(cfg, outdir);
    std::printf("steps %ld  dt %.6g  energy %.12g -> %.12g\n", sum.steps,
                sum.dt, sum.energy_initial, sum.energy_final);
    std::printf("max residuals: balance %.3e  local %.3e  charge %.3e  "
                "bianchi %.3e  cross %.3e\n",
                sum.max_balance, sum.max_local, sum.max_charge,
                sum.max_bianchi, sum.max_cross);
    if (sum.rep_deviation > 0)
      std::printf("representation deviation: %.3e\n", sum.rep_deviation);
    return 0;
  } catch (const ff::NumericalGuard& e) {
    std::fprintf(stderr, "numerical guard: %s\n", e.what());
    return 3;
  } catch (const ff::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
