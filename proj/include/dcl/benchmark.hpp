#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dcl/experiment.hpp"

namespace dcl {

// ---- desk-scale presets --------------------------------------------------------
//
// Shared starting points for the benchmark suites and the acceptance tests:
// T = 1e5 (100 trials x 1000), a few thousand optimizer steps, shared
// negatives per step. Tuned to finish in minutes per run on one CPU core.

ExperimentConfig preset_lds_desk();
ExperimentConfig preset_slds_desk();
ExperimentConfig preset_lorenz_desk(real dt, real sigma_eps);
ExperimentConfig preset_control_desk(ControlKind kind);
ExperimentConfig preset_noninjective_desk(std::size_t rank, std::size_t lag_k,
                                          std::size_t lag_tau);
ExperimentConfig preset_kde_desk(real marginal_kappa, bool kde_enabled);

// Sets the model block for a given dynamics choice, adjusting the mode count
// and Lorenz-style bank biases where that is the natural pairing.
void set_model_dynamics(ExperimentConfig& cfg, DynamicsKind kind,
                        std::size_t num_modes = 0);

// ---- suites ---------------------------------------------------------------------

struct SuiteCell {
  std::string label;
  ExperimentConfig config;
};

// Known names: table1, slds_angles, lorenz, ablations, lorenz_modes, control,
// noninjective, kde. Scale: "desk" (default) or "smoke" (seconds per cell).
std::vector<SuiteCell> build_suite(const std::string& name,
                                   const std::string& scale = "desk");
std::vector<std::string> suite_names();

struct SuiteOptions {
  std::string name;
  std::filesystem::path out_dir;
  std::string scale = "desk";
  int jobs = 1;
  // Optional seed overrides applied to every cell.
  std::vector<std::uint64_t> dataset_seeds;
  std::vector<std::uint64_t> model_seeds;
};

// Runs every cell (dataset seeds x model seeds), appends one JSONL record per
// run, writes aggregated mean/std per cell to summary.json, and prints a
// table. Cell failures are recorded and the suite continues. Returns the
// number of failed runs.
int run_suite(const SuiteOptions& opt);

}  // namespace dcl
