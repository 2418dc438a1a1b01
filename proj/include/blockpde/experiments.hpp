#pragma once

#include <map>
#include <string>

#include "blockpde/diagnostics.hpp"
#include "blockpde/training.hpp"

namespace blockpde {

// Initial-condition descriptor: a seeded prior sample or a named closed form.
struct InitialCondition {
  std::string type = "prior";  // "prior" | "closed_form"
  double amp = 1.0;            // prior amplitude
  double alpha = 0.5;          // prior decay
  std::string name;            // closed-form name
  double amplitude = 1.0;      // closed-form amplitude
};

// One experiment instance: registry defaults are the full-scale settings;
// desk-scale sizes are explicit overrides, never silent defaults.
struct ExperimentSpec {
  std::string experiment;  // burgers1d | heat1d_lifted | gl1d | ac2d | ns2d_short
  int Q = 0;               // Shen nodes
  int K = 0;               // Shen retained modes
  int N = 0;               // 2D grid points per direction
  int K_cut = 0;           // 2D retained band
  double dt = 0.0;
  double T = 0.0;
  long n_steps = 0;        // consistent with T = n_steps * dt
  uint64_t seed = 0;
  int store_stride = 100;
  bool log_structure = false;
  InitialCondition ic;
  std::map<std::string, double> params;        // experiment physics parameters
  std::map<std::string, std::string> checkpoints;  // block role -> path
  std::string out_dir = "out";

  void validate() const;
};

ExperimentSpec experiment_defaults(const std::string& name);
std::vector<std::string> experiment_names();

ExperimentSpec experiment_from_json_file(const std::string& path);
ExperimentSpec experiment_from_json_text(const std::string& text);
std::string experiment_to_json(const ExperimentSpec& spec);

// Fully assembled experiment: baseplate, lifting, initial state, learned and
// reference block sets sharing one schedule plan.
struct Assembly {
  Baseplate bp;
  LiftingField lift;
  Vec a0;
  BlockSet learned;
  BlockSet reference;
  std::vector<std::string> order;  // schedule order (last = pivot)
};

// exact_blocks: use reference fields in the "learned" slot (--exact mode)
Assembly assemble_experiment(const ExperimentSpec& spec, bool exact_blocks);

// ---- pretraining registry ----

struct PretrainRecipe {
  std::string name;       // registry key
  std::string family;
  int Q = 0, K = 0, N = 0, K_cut = 0;
  std::string refop;
  std::string role;       // block name used inside experiment assemblies
  PriorConfig prior;
  TrainConfig train;
  int samples = 20000;
  int width = 128;        // network width/depth where applicable
  int depth = 4;
};

PretrainRecipe pretrain_recipe(const std::string& name);
std::vector<std::string> pretrain_names();

Baseplate recipe_baseplate(const PretrainRecipe& r);
Block recipe_block(const PretrainRecipe& r, const Baseplate& bp, uint64_t seed);

// ---- command layer (the CLI binary parses argv and dispatches here) ----

struct PretrainResult {
  std::string checkpoint_path;
  std::string history_path;
  std::string mismatch_path;
  Mismatch holdout;
};
PretrainResult cmd_pretrain(const PretrainRecipe& recipe, const std::string& out_dir,
                            bool save_dataset_file = false);

struct RunResult {
  std::string summary_path;
  ErrorReport report;
  std::string schedule_plan;
};
RunResult cmd_run(const ExperimentSpec& spec, bool exact_blocks);

struct SweepResult {
  std::string table_path;
  ConvergenceOrder order;
  double slope_eps = 0.0;
};
SweepResult cmd_sweep_convergence(const ExperimentSpec& spec, int halvings);
SweepResult cmd_sweep_epsilons(const ExperimentSpec& spec,
                               const std::vector<double>& eps_list);

std::string cmd_verify_checkpoint(const std::string& path,
                                  const ExperimentSpec& baseplate_spec);
std::string cmd_info();

}  // namespace blockpde
