#pragma once

#include "fieldflow/config.hpp"
#include "fieldflow/dynamics.hpp"
#include "fieldflow/expression.hpp"

#include <string>

namespace ff {

enum class RepMode { star, dagger, both };

// A fully built scenario: model, initial state, and run controls.
struct ScenarioSetup {
  std::string name;
  Model model;
  State init;
  double dt = 0;
  double cfl = 0.4;
  long steps = 0;
  long sample_every = 1;
  Scheme scheme = Scheme::leapfrog;
  RepMode rep = RepMode::star;
  long probe_node = 0;
  int probe_slot = 0, probe_comp = 0;
  std::string csv_name = "diagnostics.csv";
  std::string manifest_name = "manifest.json";
  bool snapshot = false;
  unsigned seed = 0;
};

// Builds grid, metric, sectors, forces, and initial data from the merged
// configuration (named-scenario defaults overlaid by explicit keys). Throws
// ConfigError for invalid configuration and NumericalGuard for unsound
// geometry or time steps.
ScenarioSetup build_scenario(const Config& cfg);

struct RunSummary {
  std::vector<DiagRow> rows;
  std::vector<Face> faces;
  double energy_initial = 0, energy_final = 0;
  double max_balance = 0, max_local = 0, max_charge = 0, max_bianchi = 0;
  double max_cross = 0, max_bc_res = 0;
  double rep_deviation = 0;  // only meaningful in RepMode::both
  double dt = 0;
  long steps = 0;
};

// Runs the scenario and writes diagnostics CSV, manifest, and optional final
// snapshot into `outdir`.
RunSummary run_scenario(const Config& cfg, const std::string& outdir);

// Refinement study along `axis` ("h" or "dt"): runs each level, writes
// study.csv and study.json with per-level residual maxima and fitted log-log
// slopes. Returns 0 when all active slopes reach target - 0.3 (or the
// residual sits at the noise floor), 4 otherwise.
int convergence_study(const Config& cfg, const std::string& outdir,
                      const std::string& axis, const std::vector<long>& levels);

// Randomized structural identity suite used by --check. Prints one line per
// check, returns the number of failures.
int invariant_suite(unsigned seed);

}  // namespace ff
