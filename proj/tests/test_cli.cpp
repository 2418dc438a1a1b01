#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "blockpde/errors.hpp"
#include "blockpde/experiments.hpp"

using namespace blockpde;
namespace fs = std::filesystem;

namespace {
std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}
}  // namespace

TEST_CASE("registry carries the five assemblies with their stated settings") {
  CHECK(experiment_names().size() == 5);

  const auto burgers = experiment_defaults("burgers1d");
  CHECK(burgers.params.at("nu") == 0.03);
  CHECK(burgers.dt == 1e-5);
  CHECK(burgers.T == 1.0);
  CHECK(burgers.Q == 256);
  CHECK(burgers.K == 96);

  const auto heat = experiment_defaults("heat1d_lifted");
  CHECK(heat.params.at("nu") == 2e-2);
  CHECK(heat.params.at("A0") == 0.2);
  CHECK(heat.params.at("B0") == -0.2);
  CHECK(heat.params.at("alphaA") == 5.6);
  CHECK(heat.params.at("omega") == 1.0);
  CHECK(heat.dt == 1e-3);

  const auto gl = experiment_defaults("gl1d");
  CHECK(gl.dt == 1e-4);
  CHECK(gl.T == 0.1);
  CHECK(gl.n_steps == 1000);

  const auto ac = experiment_defaults("ac2d");
  CHECK(ac.params.at("eps") == 1e-2);
  CHECK(ac.N == 64);
  CHECK(ac.K_cut == 21);

  const auto ns = experiment_defaults("ns2d_short");
  CHECK(ns.params.at("nu") == 1e-4);
  CHECK(ns.params.at("forcing_amp") == 0.1);

  CHECK_THROWS_AS(experiment_defaults("nope"), ParseError);
}

TEST_CASE("config json: round-trip, unknown keys rejected, consistency checks") {
  auto spec = experiment_defaults("gl1d");
  spec.Q = 64;
  spec.K = 24;
  spec.T = 0.01;
  spec.n_steps = 100;
  spec.seed = 42;
  const std::string text = experiment_to_json(spec);
  const auto back = experiment_from_json_text(text);
  CHECK(back.experiment == "gl1d");
  CHECK(back.Q == 64);
  CHECK(back.K == 24);
  CHECK(back.seed == 42);
  CHECK(experiment_to_json(back) == text);

  CHECK_THROWS_AS(experiment_from_json_text(
                      R"({"experiment":"gl1d","bogus_key":1})"),
                  ParseError);
  CHECK_THROWS_AS(experiment_from_json_text(
                      R"({"experiment":"gl1d","params":{"zeta":1.0}})"),
                  ParseError);
  CHECK_THROWS_AS(experiment_from_json_text("not json"), ParseError);

  // T inconsistent with n_steps * dt
  auto bad = experiment_defaults("gl1d");
  bad.n_steps = 999;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("assembly: learned and reference share the schedule plan; checkpoints must exist") {
  auto spec = experiment_defaults("burgers1d");
  spec.Q = 64;
  spec.K = 24;
  spec.T = 0.001;
  spec.n_steps = 100;
  spec.dt = 1e-5;

  const auto as = assemble_experiment(spec, false);
  CHECK(as.learned.blocks.size() == 2);
  CHECK(as.reference.blocks.size() == 2);
  CHECK(as.learned.blocks[0].kind == BlockKind::H);
  CHECK(as.learned.blocks[1].kind == BlockKind::E);
  CHECK(as.learned.blocks[1].scale == 0.03);

  auto missing = spec;
  missing.checkpoints["diffusion"] = "/nonexistent/path.json";
  missing.checkpoints["transport"] = "/nonexistent/path2.json";
  CHECK_THROWS_AS(assemble_experiment(missing, false), std::invalid_argument);
}

TEST_CASE("cmd_run emits reproducible artifacts (byte-identical reruns)") {
  auto spec = experiment_defaults("gl1d");
  spec.Q = 48;
  spec.K = 16;
  spec.dt = 1e-4;
  spec.T = 0.005;
  spec.n_steps = 50;
  spec.seed = 7;
  spec.store_stride = 10;

  spec.out_dir = "/tmp/blockpde_cli_run_a";
  fs::remove_all(spec.out_dir);
  const auto r1 = cmd_run(spec, true);
  spec.out_dir = "/tmp/blockpde_cli_run_b";
  fs::remove_all(spec.out_dir);
  const auto r2 = cmd_run(spec, true);

  for (const char* f :
       {"error_report.csv", "learned_series.csv", "reference_series.csv"}) {
    CHECK(slurp("/tmp/blockpde_cli_run_a/" + std::string(f)) ==
          slurp("/tmp/blockpde_cli_run_b/" + std::string(f)));
  }
  // summaries differ only in the echoed out_dir; compare after normalizing
  std::string s1 = slurp("/tmp/blockpde_cli_run_a/summary.json");
  std::string s2 = slurp("/tmp/blockpde_cli_run_b/summary.json");
  const auto scrub = [](std::string s, const std::string& what) {
    for (size_t p = s.find(what); p != std::string::npos; p = s.find(what))
      s.replace(p, what.size(), "OUT");
    return s;
  };
  CHECK(scrub(s1, "blockpde_cli_run_a") == scrub(s2, "blockpde_cli_run_b"));
  CHECK(r1.schedule_plan == r2.schedule_plan);
  CHECK(r1.schedule_plan == "diffusion:half|reaction:full|diffusion:half");

  // exact mode: learned equals reference, so errors vanish
  CHECK(r1.report.final_rel == 0.0);
}

TEST_CASE("cmd_pretrain writes checkpoint, history and mismatch files") {
  PretrainRecipe r = pretrain_recipe("fourier_laplacian_diag");
  r.N = 12;
  r.K_cut = 4;
  r.samples = 200;
  r.train.epochs = 40;
  r.train.schedule = {10, 0.3};
  r.train.seed = 3;
  const std::string out = "/tmp/blockpde_cli_pre";
  fs::remove_all(out);
  const auto res = cmd_pretrain(r, out, true);
  CHECK(fs::exists(res.checkpoint_path));
  CHECK(fs::exists(res.history_path));
  CHECK(fs::exists(res.mismatch_path));
  CHECK(fs::exists(out + "/fourier_laplacian_diag.dataset.jsonl"));

  // the checkpoint round-trips through the experiment assembly
  auto spec = experiment_defaults("ac2d");
  spec.N = 12;
  spec.K_cut = 4;
  spec.T = 0.01;
  spec.dt = 1e-3;
  spec.n_steps = 10;
  spec.checkpoints["diffusion"] = res.checkpoint_path;
  const auto as = assemble_experiment(spec, false);
  CHECK(as.learned.blocks[0].name == "diffusion");
  CHECK(as.learned.blocks[0].scale == 1e-2);

  // verify-checkpoint accepts it
  const std::string report = cmd_verify_checkpoint(res.checkpoint_path, spec);
  CHECK(report.find("checkpoint ok") != std::string::npos);

  // pretraining determinism: identical seeds give identical checkpoints
  const std::string out2 = "/tmp/blockpde_cli_pre2";
  fs::remove_all(out2);
  const auto res2 = cmd_pretrain(r, out2, false);
  CHECK(slurp(res.checkpoint_path) == slurp(res2.checkpoint_path));
}

TEST_CASE("sweep commands: orders and slopes on a small GL instance") {
  auto spec = experiment_defaults("gl1d");
  spec.Q = 48;
  spec.K = 16;
  spec.dt = 4e-4;
  spec.T = 0.008;
  spec.n_steps = 20;
  spec.seed = 5;
  spec.out_dir = "/tmp/blockpde_cli_sweep";
  fs::remove_all(spec.out_dir);

  const auto conv = cmd_sweep_convergence(spec, 3);
  CHECK(conv.order.mean > 1.8);
  CHECK(conv.order.mean < 2.2);
  CHECK(fs::exists(conv.table_path));

  spec.dt = 1e-4;
  spec.n_steps = 80;
  const auto eps = cmd_sweep_epsilons(spec, {1e-4, 1e-3, 1e-2});
  CHECK(eps.slope_eps > 0.9);
  CHECK(eps.slope_eps < 1.1);

  CHECK_THROWS_AS(cmd_sweep_epsilons(spec, {}), std::invalid_argument);
}

TEST_CASE("ns assembly: auxiliary poisson block is exposed and transport uses it") {
  auto spec = experiment_defaults("ns2d_short");
  spec.N = 16;
  spec.K_cut = 4;
  spec.dt = 1e-3;
  spec.T = 0.01;
  spec.n_steps = 10;

  const auto as = assemble_experiment(spec, false);
  REQUIRE(as.learned.blocks.size() == 4);
  CHECK(as.learned.blocks[3].kind == BlockKind::auxiliary);
  CHECK(as.learned.blocks[3].name == "poisson");

  // the auxiliary map reproduces the exact inverse
  const Vec w = sample_prior(as.bp, {1.0, 1.0}, 1, 3)[0];
  const Vec psi_aux = as.learned.blocks[3].eval(as.bp, w);
  const Vec psi_ref = ref_poisson_inverse(as.bp, w);
  for (int k = 0; k < as.bp.K; ++k)
    CHECK(psi_aux[k] == doctest::Approx(psi_ref[k]).epsilon(1e-12));

  // learned transport (through the aux map) matches the reference transport
  const Vec t1 = as.learned.blocks[0].eval(as.bp, w);
  const Vec t2 = as.reference.blocks[0].eval(as.bp, w);
  for (int k = 0; k < as.bp.K; ++k)
    CHECK(t1[k] == doctest::Approx(t2[k]).epsilon(1e-12));
}
