#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blockpde/experiments.hpp"

using namespace blockpde;

namespace {

// shared experiment options: registry name or config file, plus explicit
// desk-scale overrides
struct RunOpts {
  std::string experiment;
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  double dt = 0.0;
  double T = 0.0;
  int Q = 0, K = 0, N = 0, K_cut = 0;
  int store_stride = 0;
  bool log_structure = false;
  std::vector<std::string> checkpoints;  // role=path
};

void add_run_options(CLI::App* cmd, RunOpts& o) {
  cmd->add_option("--experiment", o.experiment, "registry experiment name");
  cmd->add_option("--config", o.config, "experiment JSON config file");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "run seed")->each([&](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--dt", o.dt, "time step override");
  cmd->add_option("--T", o.T, "final time override");
  cmd->add_option("--Q", o.Q, "Shen quadrature nodes override");
  cmd->add_option("--K", o.K, "Shen retained modes override");
  cmd->add_option("--N", o.N, "2D grid size override");
  cmd->add_option("--kcut", o.K_cut, "2D retained band override");
  cmd->add_option("--store-stride", o.store_stride, "state storage stride");
  cmd->add_flag("--log-structure", o.log_structure, "log per-substep dE/dH");
  cmd->add_option("--checkpoint", o.checkpoints,
                  "role=path checkpoint binding (repeatable)");
}

ExperimentSpec spec_from_opts(const RunOpts& o) {
  ExperimentSpec spec;
  if (!o.config.empty())
    spec = experiment_from_json_file(o.config);
  else if (!o.experiment.empty())
    spec = experiment_defaults(o.experiment);
  else
    throw std::invalid_argument("provide --experiment or --config");
  if (!o.out.empty()) spec.out_dir = o.out;
  if (o.seed_set) spec.seed = o.seed;
  if (o.dt > 0.0) spec.dt = o.dt;
  if (o.T > 0.0) spec.T = o.T;
  if (o.dt > 0.0 || o.T > 0.0)
    spec.n_steps = static_cast<long>(std::llround(spec.T / spec.dt));
  if (o.Q > 0) spec.Q = o.Q;
  if (o.K > 0) spec.K = o.K;
  if (o.N > 0) spec.N = o.N;
  if (o.K_cut > 0) spec.K_cut = o.K_cut;
  if (o.store_stride > 0) spec.store_stride = o.store_stride;
  if (o.log_structure) spec.log_structure = true;
  for (const auto& c : o.checkpoints) {
    const auto eq = c.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--checkpoint expects role=path");
    spec.checkpoints[c.substr(0, eq)] = c.substr(eq + 1);
  }
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional spectral PDE solver built from operator blocks"};
  app.require_subcommand(1);

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "pretrain a block by operator matching");
  std::string block_name, pre_out = "out";
  int samples = 0, epochs = 0, batch = 0, width = 0, depth = 0;
  int pQ = 0, pK = 0, pN = 0, pKcut = 0, sched_step = 0;
  double lr = 0.0, wd = -1.0, sched_decay = 0.0;
  uint64_t pre_seed = 0;
  bool save_ds = false;
  pre->add_option("--block", block_name, "pretrain recipe name")->required();
  pre->add_option("--out", pre_out, "output directory");
  pre->add_option("--samples", samples, "coefficient sample count M");
  pre->add_option("--epochs", epochs, "training epochs");
  pre->add_option("--batch", batch, "batch size");
  pre->add_option("--lr", lr, "learning rate");
  pre->add_option("--wd", wd, "weight decay");
  pre->add_option("--sched-step", sched_step, "StepLR step size (epochs)");
  pre->add_option("--sched-decay", sched_decay, "StepLR decay factor");
  pre->add_option("--width", width, "network width");
  pre->add_option("--depth", depth, "network depth");
  pre->add_option("--seed", pre_seed, "training seed");
  pre->add_option("--Q", pQ, "Shen quadrature nodes");
  pre->add_option("--K", pK, "Shen retained modes");
  pre->add_option("--N", pN, "2D grid size");
  pre->add_option("--kcut", pKcut, "2D retained band");
  pre->add_flag("--save-dataset", save_ds, "write the dataset JSONL file");

  // ---- run ----
  auto* run = app.add_subcommand("run", "learned vs reference rollout");
  RunOpts ro;
  bool exact = false;
  add_run_options(run, ro);
  run->add_flag("--exact", exact, "use reference blocks in the learned slot");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "convergence / perturbation studies");
  RunOpts so;
  int halvings = 0;
  std::vector<double> eps_list;
  add_run_options(sweep, so);
  sweep->add_option("--dt-halvings", halvings, "number of dt halvings (>= 3)");
  sweep->add_option("--epsilons", eps_list, "perturbation sizes");

  // ---- verify-checkpoint ----
  auto* verify = app.add_subcommand("verify-checkpoint", "check a checkpoint file");
  RunOpts vo;
  std::string ckpt_path;
  add_run_options(verify, vo);
  verify->add_option("--path", ckpt_path, "checkpoint file")->required();

  // ---- info ----
  app.add_subcommand("info", "list experiments and pretrain recipes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      PretrainRecipe r = pretrain_recipe(block_name);
      if (samples > 0) r.samples = samples;
      if (samples < 0) throw std::invalid_argument("--samples must be positive");
      if (epochs > 0) r.train.epochs = epochs;
      if (batch > 0) r.train.batch = batch;
      if (lr > 0.0) r.train.lr = lr;
      if (wd >= 0.0) r.train.weight_decay = wd;
      if (sched_step > 0) r.train.schedule.step_size = sched_step;
      if (sched_decay > 0.0) r.train.schedule.decay = sched_decay;
      if (width > 0) r.width = width;
      if (depth > 0) r.depth = depth;
      r.train.seed = pre_seed;
      if (pQ > 0) r.Q = pQ;
      if (pK > 0) r.K = pK;
      if (pN > 0) r.N = pN;
      if (pKcut > 0) r.K_cut = pKcut;
      const auto res = cmd_pretrain(r, pre_out, save_ds);
      std::printf("checkpoint: %s\n", res.checkpoint_path.c_str());
      std::printf("holdout mismatch: max %.6e mean %.6e\n", res.holdout.max,
                  res.holdout.mean);
    } else if (run->parsed()) {
      const auto spec = spec_from_opts(ro);
      const auto res = cmd_run(spec, exact);
      std::printf("schedule: %s\n", res.schedule_plan.c_str());
      std::printf("final rel %.6e max rel %.6e mean rel %.6e\n",
                  res.report.final_rel, res.report.max_rel, res.report.mean_rel);
      std::printf("summary: %s\n", res.summary_path.c_str());
    } else if (sweep->parsed()) {
      const auto spec = spec_from_opts(so);
      if (!eps_list.empty()) {
        const auto res = cmd_sweep_epsilons(spec, eps_list);
        std::printf("eps slope: %.4f\n", res.slope_eps);
        std::printf("table: %s\n", res.table_path.c_str());
      } else if (halvings >= 3) {
        const auto res = cmd_sweep_convergence(spec, halvings);
        std::printf("estimated order: %.4f (%.4f, %.4f)\n", res.order.mean,
                    res.order.first, res.order.second);
        std::printf("table: %s\n", res.table_path.c_str());
      } else {
        throw std::invalid_argument("sweep: give --dt-halvings >= 3 or --epsilons");
      }
    } else if (verify->parsed()) {
      const auto spec = spec_from_opts(vo);
      std::printf("%s", cmd_verify_checkpoint(ckpt_path, spec).c_str());
    } else {
      std::printf("%s", cmd_info().c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
