#include "blockpde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/rng.hpp"

namespace blockpde {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_keys(const ordered_json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ParseError("unknown key '" + it.key() + "' in " + ctx);
  }
}

std::string experiment_family(const std::string& name) {
  if (name == "burgers1d" || name == "heat1d_lifted" || name == "gl1d")
    return "shen_legendre_1d";
  if (name == "ac2d" || name == "ns2d_short") return "fourier_2d";
  throw ParseError("unknown experiment: " + name);
}

double param(const ExperimentSpec& s, const std::string& key) {
  auto it = s.params.find(key);
  require(it != s.params.end(),
          "experiment " + s.experiment + ": missing parameter '" + key + "'");
  return it->second;
}

LiftingField heat_lift(const ExperimentSpec& s) {
  const double A0 = param(s, "A0"), B0 = param(s, "B0");
  const double aA = param(s, "alphaA"), aB = param(s, "alphaB");
  const double om = param(s, "omega");
  LiftingField lift;
  lift.is_zero = false;
  lift.value = [=](double x, double, double t) {
    const double A = A0 + aA * std::sin(2.0 * kPi * om * t);
    const double B = B0 + aB * std::cos(2.0 * kPi * om * t);
    return 0.5 * (1.0 - x) * A + 0.5 * (1.0 + x) * B;
  };
  lift.time_derivative = [=](double x, double, double t) {
    const double dA = aA * 2.0 * kPi * om * std::cos(2.0 * kPi * om * t);
    const double dB = -aB * 2.0 * kPi * om * std::sin(2.0 * kPi * om * t);
    return 0.5 * (1.0 - x) * dA + 0.5 * (1.0 + x) * dB;
  };
  return lift;
}

Block lift_forcing_block() {
  return make_r_block(
      "forcing",
      [](const Baseplate& bp, const Vec&, const LiftingField& lift, double t) {
        return ref_forcing(
            bp,
            [&lift](double x, double y, double tt) {
              return -lift.time_derivative(x, y, tt);
            },
            t);
      },
      1.0, false, true);
}

Block gl_reaction_block() {
  return make_r_block(
      "reaction",
      [](const Baseplate& bp, const Vec& a, const LiftingField& lift, double t) {
        return ref_pointwise(bp, a, [](double u) { return -(u + u * u * u); },
                             lift, t);
      },
      1.0);
}

Block ac_reaction_block() {
  return make_r_block(
      "reaction",
      [](const Baseplate& bp, const Vec& a, const LiftingField& lift, double t) {
        return ref_pointwise(bp, a, [](double u) { return u - u * u * u; },
                             lift, t);
      },
      1.0);
}

Block ns_forcing_block(double amp) {
  return make_r_block(
      "forcing",
      [amp](const Baseplate& bp, const Vec&, const LiftingField&, double t) {
        return ref_forcing(
            bp,
            [amp](double x, double y, double) {
              return amp * (std::sin(x + y) + std::cos(x + y));
            },
            t);
      },
      1.0);
}

// vorticity advection with an injectable Poisson map (learned assemblies
// route it through the auxiliary block)
Block ns_transport_block(std::shared_ptr<Block> poisson_aux) {
  return make_r_block(
      "transport",
      [poisson_aux](const Baseplate& bp, const Vec& w, const LiftingField&,
                    double) {
        const Vec psi = poisson_aux ? poisson_aux->eval(bp, w)
                                    : ref_poisson_inverse(bp, w);
        const Vec u = bp.fourier_nodal_deriv(psi, 1);
        const Vec vx = bp.fourier_nodal_deriv(psi, 0);
        const Vec wx = bp.fourier_nodal_deriv(w, 0);
        const Vec wy = bp.fourier_nodal_deriv(w, 1);
        Vec p(u.size());
        for (size_t q = 0; q < u.size(); ++q)
          p[q] = -(u[q] * wx[q] - vx[q] * wy[q]);
        return bp.dealias(bp.project(p));
      },
      1.0);
}

Vec laplacian_multipliers(const Baseplate& bp) {
  Vec mult(bp.K);
  const Vec& lm = bp.laplacian_multiplier();
  for (int k = 0; k < bp.K; ++k) mult[k] = -lm[k];
  return mult;
}

Vec poisson_inverse_multipliers(const Baseplate& bp) {
  Vec mult(bp.K, 0.0);
  const Vec& lm = bp.laplacian_multiplier();
  for (int k = 0; k < bp.K; ++k) mult[k] = lm[k] == 0.0 ? 0.0 : 1.0 / (-lm[k]);
  return mult;
}

Block load_role_checkpoint(const ExperimentSpec& spec, const Baseplate& bp,
                           const std::string& role, double scale) {
  const auto it = spec.checkpoints.find(role);
  require(it != spec.checkpoints.end(), "missing checkpoint for role " + role);
  if (!fs::exists(it->second))
    throw std::invalid_argument("checkpoint file does not exist: " + it->second);
  Block b = load_checkpoint(it->second, bp);
  b.name = role;
  b.scale = scale;
  return b;
}

}  // namespace

void ExperimentSpec::validate() const {
  experiment_family(experiment);  // throws for unknown names
  require(dt > 0.0, "experiment: dt must be positive");
  require(n_steps >= 0, "experiment: n_steps must be non-negative");
  if (T > 0.0 && n_steps > 0)
    require(std::abs(T - n_steps * dt) <= 1e-12 * std::max(1.0, T),
            "experiment: T and n_steps*dt disagree");
  require(store_stride >= 1, "experiment: store_stride must be >= 1");
  require(ic.type == "prior" || ic.type == "closed_form",
          "experiment: ic.type must be 'prior' or 'closed_form'");
}

std::vector<std::string> experiment_names() {
  return {"burgers1d", "heat1d_lifted", "gl1d", "ac2d", "ns2d_short"};
}

ExperimentSpec experiment_defaults(const std::string& name) {
  ExperimentSpec s;
  s.experiment = name;
  if (name == "burgers1d") {
    s.Q = 256;
    s.K = 96;
    s.dt = 1e-5;
    s.T = 1.0;
    s.params = {{"nu", 0.03}};
    s.ic = {"prior", 1.0, 0.5, "", 1.0};
  } else if (name == "heat1d_lifted") {
    s.Q = 256;
    s.K = 96;
    s.dt = 1e-3;
    s.T = 20.0;
    s.params = {{"nu", 2e-2}, {"A0", 0.2},    {"B0", -0.2},
                {"alphaA", 5.6}, {"alphaB", 5.6}, {"omega", 1.0}};
    s.ic = {"closed_form", 1.0, 0.5, "first_mode_bump", 0.2};
  } else if (name == "gl1d") {
    s.Q = 256;
    s.K = 96;
    s.dt = 1e-4;
    s.T = 0.1;
    s.params = {};
    s.ic = {"prior", 0.5, 2.0, "", 1.0};
  } else if (name == "ac2d") {
    s.N = 64;
    s.K_cut = 21;
    s.dt = 1e-3;
    s.T = 100.0;
    s.params = {{"eps", 1e-2}};
    s.ic = {"prior", 0.5, 1.0, "", 1.0};
  } else if (name == "ns2d_short") {
    s.N = 64;
    s.K_cut = 21;
    s.dt = 1e-3;
    s.T = 50.0;
    s.params = {{"nu", 1e-4}, {"forcing_amp", 0.1}};
    s.ic = {"prior", 1.0, 2.0, "", 1.0};
  } else {
    throw ParseError("unknown experiment: " + name);
  }
  s.n_steps = static_cast<long>(std::llround(s.T / s.dt));
  return s;
}

ExperimentSpec experiment_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("experiment config: ") + e.what());
  }
  check_keys(j,
             {"experiment", "baseplate", "dt", "T", "n_steps", "seed",
              "store_stride", "log_structure", "ic", "params", "checkpoints",
              "out_dir"},
             "experiment config");
  ExperimentSpec s = experiment_defaults(j.at("experiment").get<std::string>());
  if (j.contains("baseplate")) {
    const auto& b = j.at("baseplate");
    check_keys(b, {"Q", "K", "N", "K_cut"}, "baseplate");
    if (b.contains("Q")) s.Q = b.at("Q").get<int>();
    if (b.contains("K")) s.K = b.at("K").get<int>();
    if (b.contains("N")) s.N = b.at("N").get<int>();
    if (b.contains("K_cut")) s.K_cut = b.at("K_cut").get<int>();
  }
  if (j.contains("dt")) s.dt = j.at("dt").get<double>();
  if (j.contains("T")) {
    s.T = j.at("T").get<double>();
    s.n_steps = static_cast<long>(std::llround(s.T / s.dt));
  }
  if (j.contains("n_steps")) {
    s.n_steps = j.at("n_steps").get<long>();
    if (!j.contains("T")) s.T = s.n_steps * s.dt;
  }
  if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
  if (j.contains("store_stride")) s.store_stride = j.at("store_stride").get<int>();
  if (j.contains("log_structure")) s.log_structure = j.at("log_structure").get<bool>();
  if (j.contains("ic")) {
    const auto& ic = j.at("ic");
    check_keys(ic, {"type", "amp", "alpha", "name", "amplitude"}, "ic");
    s.ic.type = ic.at("type").get<std::string>();
    if (ic.contains("amp")) s.ic.amp = ic.at("amp").get<double>();
    if (ic.contains("alpha")) s.ic.alpha = ic.at("alpha").get<double>();
    if (ic.contains("name")) s.ic.name = ic.at("name").get<std::string>();
    if (ic.contains("amplitude")) s.ic.amplitude = ic.at("amplitude").get<double>();
  }
  if (j.contains("params")) {
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it) {
      if (s.params.find(it.key()) == s.params.end())
        throw ParseError("unknown key '" + it.key() + "' in params for " +
                         s.experiment);
      s.params[it.key()] = it.value().get<double>();
    }
  }
  if (j.contains("checkpoints"))
    for (auto it = j.at("checkpoints").begin(); it != j.at("checkpoints").end(); ++it)
      s.checkpoints[it.key()] = it.value().get<std::string>();
  if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
  s.validate();
  return s;
}

ExperimentSpec experiment_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw ParseError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return experiment_from_json_text(ss.str());
}

std::string experiment_to_json(const ExperimentSpec& s) {
  ordered_json j;
  j["experiment"] = s.experiment;
  if (experiment_family(s.experiment) == "shen_legendre_1d")
    j["baseplate"] = {{"Q", s.Q}, {"K", s.K}};
  else
    j["baseplate"] = {{"N", s.N}, {"K_cut", s.K_cut}};
  j["dt"] = s.dt;
  j["T"] = s.T;
  j["n_steps"] = s.n_steps;
  j["seed"] = s.seed;
  j["store_stride"] = s.store_stride;
  j["log_structure"] = s.log_structure;
  if (s.ic.type == "prior")
    j["ic"] = {{"type", "prior"}, {"amp", s.ic.amp}, {"alpha", s.ic.alpha}};
  else
    j["ic"] = {{"type", "closed_form"},
               {"name", s.ic.name},
               {"amplitude", s.ic.amplitude}};
  j["params"] = s.params;
  j["checkpoints"] = s.checkpoints;
  j["out_dir"] = s.out_dir;
  return j.dump(2);
}

namespace {

Vec initial_state(const ExperimentSpec& s, const Baseplate& bp) {
  if (s.ic.type == "prior")
    return sample_prior(bp, {s.ic.amp, s.ic.alpha}, 1, s.seed)[0];
  if (s.ic.name == "neg_sin_pi") {
    require(bp.family == Family::shen_legendre_1d, "neg_sin_pi: Shen only");
    Vec f(bp.grid.Q());
    for (int q = 0; q < bp.grid.Q(); ++q)
      f[q] = -s.ic.amplitude * std::sin(kPi * bp.grid.x[q]);
    return bp.project(f);
  }
  if (s.ic.name == "sine_bump") {
    // smooth, boundary-compatible and asymmetric, so odd-symmetry
    // cancellations do not zero out the transport Hamiltonian
    require(bp.family == Family::shen_legendre_1d, "sine_bump: Shen only");
    Vec f(bp.grid.Q());
    for (int q = 0; q < bp.grid.Q(); ++q) {
      const double x = bp.grid.x[q];
      f[q] = s.ic.amplitude * (-std::sin(kPi * x) + 0.5 * (1.0 - x * x));
    }
    return bp.project(f);
  }
  if (s.ic.name == "first_mode_bump") {
    require(bp.family == Family::shen_legendre_1d, "first_mode_bump: Shen only");
    Vec a(bp.K, 0.0);
    a[0] = s.ic.amplitude;
    return a;
  }
  throw ParseError("unknown closed-form initial condition: " + s.ic.name);
}

}  // namespace

Assembly assemble_experiment(const ExperimentSpec& spec, bool exact_blocks) {
  spec.validate();
  Assembly as;
  const std::string family = experiment_family(spec.experiment);
  if (family == "shen_legendre_1d")
    as.bp = build_shen_baseplate(spec.Q, spec.K);
  else
    as.bp = build_fourier2d_baseplate(spec.N, spec.K_cut);
  as.lift = LiftingField::zero();

  const bool has_ckpt = !spec.checkpoints.empty();

  if (spec.experiment == "burgers1d") {
    const double nu = param(spec, "nu");
    as.order = {"transport", "diffusion"};
    as.reference.blocks.push_back(make_ref_block(
        "transport", BlockKind::H, ref_registry("shen_uux"), 1.0, false));
    as.reference.blocks.push_back(make_ref_block(
        "diffusion", BlockKind::E, ref_registry("shen_uxx"), nu, true));
    if (exact_blocks) {
      as.learned = as.reference;
    } else if (has_ckpt) {
      as.learned.blocks.push_back(
          load_role_checkpoint(spec, as.bp, "transport", 1.0));
      as.learned.blocks.push_back(
          load_role_checkpoint(spec, as.bp, "diffusion", nu));
    } else {
      as.learned.blocks.push_back(make_h_block(
          "transport", make_cubic_density(-1.0 / 6.0), StructKind::shen_derivative, 1.0));
      as.learned.blocks.push_back(make_e_block(
          "diffusion", make_shen_stiffness_generator(as.bp),
          StructKind::shen_mass_inverse, nu));
    }
  } else if (spec.experiment == "heat1d_lifted") {
    const double nu = param(spec, "nu");
    as.lift = heat_lift(spec);
    as.order = {"forcing", "diffusion"};
    as.reference.blocks.push_back(lift_forcing_block());
    as.reference.blocks.push_back(make_ref_block(
        "diffusion", BlockKind::E, ref_registry("shen_uxx"), nu, true));
    if (exact_blocks) {
      as.learned = as.reference;
    } else {
      as.learned.blocks.push_back(lift_forcing_block());
      if (has_ckpt)
        as.learned.blocks.push_back(
            load_role_checkpoint(spec, as.bp, "diffusion", nu));
      else
        as.learned.blocks.push_back(make_e_block(
            "diffusion", make_shen_stiffness_generator(as.bp),
            StructKind::shen_mass_inverse, nu));
    }
  } else if (spec.experiment == "gl1d") {
    as.order = {"diffusion", "reaction"};
    as.reference.blocks.push_back(make_ref_block(
        "diffusion", BlockKind::E, ref_registry("shen_uxx"), 1.0, true));
    as.reference.blocks.push_back(gl_reaction_block());
    if (exact_blocks) {
      as.learned = as.reference;
    } else {
      if (has_ckpt)
        as.learned.blocks.push_back(
            load_role_checkpoint(spec, as.bp, "diffusion", 1.0));
      else
        as.learned.blocks.push_back(make_e_block(
            "diffusion", make_shen_stiffness_generator(as.bp),
            StructKind::shen_mass_inverse, 1.0));
      as.learned.blocks.push_back(gl_reaction_block());
    }
  } else if (spec.experiment == "ac2d") {
    const double eps = param(spec, "eps");
    as.order = {"diffusion", "reaction"};
    // explicit diagonal stores F = scale * d . a, so d is the (negative)
    // Laplacian multiplier array
    as.reference.blocks.push_back(
        make_ref_block("diffusion", BlockKind::E, ref_registry("fourier_laplacian"),
                       eps, true, as.bp.laplacian_multiplier()));
    as.reference.blocks.push_back(ac_reaction_block());
    if (exact_blocks) {
      as.learned = as.reference;
    } else {
      if (has_ckpt)
        as.learned.blocks.push_back(
            load_role_checkpoint(spec, as.bp, "diffusion", eps));
      else
        as.learned.blocks.push_back(
            make_e_block("diffusion", make_exact_diag_generator(laplacian_multipliers(as.bp)),
                         StructKind::identity, eps));
      as.learned.blocks.push_back(ac_reaction_block());
    }
  } else if (spec.experiment == "ns2d_short") {
    const double nu = param(spec, "nu");
    const double famp = param(spec, "forcing_amp");
    as.order = {"transport", "forcing", "diffusion"};

    auto make_diffusion_exact = [&]() {
      Block b = make_ref_block("diffusion", BlockKind::E,
                               ref_registry("fourier_laplacian"), nu, true);
      b.explicit_diag = as.bp.laplacian_multiplier();
      return b;
    };
    as.reference.blocks.push_back(ns_transport_block(nullptr));
    as.reference.blocks.push_back(ns_forcing_block(famp));
    as.reference.blocks.push_back(make_diffusion_exact());
    if (exact_blocks) {
      as.learned = as.reference;
    } else {
      std::shared_ptr<Block> aux;
      if (spec.checkpoints.count("poisson")) {
        aux = std::make_shared<Block>(
            load_role_checkpoint(spec, as.bp, "poisson", 1.0));
        aux->kind = BlockKind::auxiliary;
      } else {
        aux = std::make_shared<Block>(make_aux_block(
            "poisson", make_exact_diag_generator(poisson_inverse_multipliers(as.bp)),
            StructKind::identity));
      }
      as.learned.blocks.push_back(ns_transport_block(aux));
      as.learned.blocks.push_back(ns_forcing_block(famp));
      if (spec.checkpoints.count("diffusion"))
        as.learned.blocks.push_back(
            load_role_checkpoint(spec, as.bp, "diffusion", nu));
      else
        as.learned.blocks.push_back(
            make_e_block("diffusion",
                         make_exact_diag_generator(laplacian_multipliers(as.bp)),
                         StructKind::identity, nu));
      as.learned.blocks.push_back(*aux);
    }
  }

  as.learned.baseplate_id = as.bp.hash();
  as.reference.baseplate_id = as.bp.hash();
  as.a0 = initial_state(spec, as.bp);
  return as;
}

// ---- pretraining registry ----

std::vector<std::string> pretrain_names() {
  return {"shen_uxx_mlp", "shen_uux_density", "fourier_laplacian_diag",
          "fourier_poisson_diag", "cosine_laplacian_diag"};
}

PretrainRecipe pretrain_recipe(const std::string& name) {
  PretrainRecipe r;
  r.name = name;
  r.prior = {1.0, 0.5};
  if (name == "shen_uxx_mlp") {
    r.family = "shen_legendre_1d";
    r.Q = 256;
    r.K = 96;
    r.refop = "shen_uxx";
    r.role = "diffusion";
    r.train = {200, 128, 1e-3, 0.0, {50, 0.3}, 0, 0.1};
    r.samples = 20000;
    r.width = 128;
    r.depth = 4;
  } else if (name == "shen_uux_density") {
    r.family = "shen_legendre_1d";
    r.Q = 256;
    r.K = 96;
    r.refop = "shen_uux";
    r.role = "transport";
    r.train = {100, 128, 1e-4, 1e-4, {50, 0.3}, 0, 0.1};
    r.samples = 20000;
    r.width = 128;
    r.depth = 4;
  } else if (name == "fourier_laplacian_diag") {
    r.family = "fourier_2d";
    r.N = 64;
    r.K_cut = 21;
    r.refop = "fourier_laplacian";
    r.role = "diffusion";
    r.train = {200, 128, 2.0, 0.0, {25, 0.3}, 0, 0.1};
    r.samples = 20000;
  } else if (name == "fourier_poisson_diag") {
    r.family = "fourier_2d";
    r.N = 64;
    r.K_cut = 21;
    r.refop = "fourier_poisson_inverse";
    r.role = "poisson";
    r.train = {200, 128, 0.05, 0.0, {80, 0.3}, 0, 0.1};
    r.samples = 20000;
  } else if (name == "cosine_laplacian_diag") {
    r.family = "cosine_2d";
    r.N = 65;
    r.K_cut = 21;
    r.refop = "fourier_laplacian";
    r.role = "diffusion";
    r.train = {200, 128, 2.0, 0.0, {40, 0.3}, 0, 0.1};
    r.samples = 20000;
  } else {
    throw ParseError("unknown pretrain recipe: " + name);
  }
  return r;
}

Baseplate recipe_baseplate(const PretrainRecipe& r) {
  if (r.family == "shen_legendre_1d") return build_shen_baseplate(r.Q, r.K);
  if (r.family == "fourier_2d") return build_fourier2d_baseplate(r.N, r.K_cut);
  return build_cosine2d_baseplate(r.N, r.K_cut);
}

Block recipe_block(const PretrainRecipe& r, const Baseplate& bp, uint64_t seed) {
  if (r.name == "shen_uxx_mlp") {
    std::vector<int> widths(r.depth + 2, r.width);
    widths.front() = bp.K;
    widths.back() = 1;
    ScalarGenerator g;
    g.payload = MlpGenerator{mlp_init(widths, Activation::gelu, seed)};
    return make_e_block("diffusion", std::move(g), StructKind::shen_mass_inverse, 1.0);
  }
  if (r.name == "shen_uux_density")
    return make_h_block("transport",
                        make_density_generator(seed, true, r.width, r.depth),
                        StructKind::shen_derivative, 1.0);
  if (r.name == "fourier_laplacian_diag" || r.name == "cosine_laplacian_diag")
    return make_e_block("diffusion", make_quad_diag_softplus(bp.K, 1.0, 0.0),
                        StructKind::identity, 1.0);
  if (r.name == "fourier_poisson_diag")
    return make_aux_block("poisson", make_quad_diag_softplus(bp.K, 1.0, 0.0),
                          StructKind::identity);
  throw ParseError("unknown pretrain recipe: " + r.name);
}

// ---- commands ----

PretrainResult cmd_pretrain(const PretrainRecipe& recipe, const std::string& out_dir,
                            bool save_dataset_file) {
  require(recipe.samples >= 1, "pretrain: samples must be positive");
  fs::create_directories(out_dir);
  const Baseplate bp = recipe_baseplate(recipe);
  const ReferenceOp ref = ref_registry(recipe.refop);
  const OperatorDataset ds =
      make_dataset(bp, ref, recipe.prior, recipe.samples, recipe.train.seed);
  if (save_dataset_file)
    save_dataset(ds, out_dir + "/" + recipe.name + ".dataset.jsonl");

  Block b = recipe_block(recipe, bp, rng::derive(recipe.train.seed, 0xB10C));
  const TrainHistory hist = train_block(b, bp, ds, recipe.train);

  PretrainResult res;
  res.checkpoint_path = out_dir + "/" + recipe.name + ".ckpt.json";
  res.history_path = out_dir + "/" + recipe.name + ".history.csv";
  res.mismatch_path = out_dir + "/" + recipe.name + ".mismatch.json";
  res.holdout = hist.holdout_mismatch;
  save_checkpoint(b, bp, recipe.prior, recipe.train, hist.holdout_mismatch,
                  res.checkpoint_path);
  save_history_csv(hist, res.history_path);
  {
    ordered_json j;
    j["block"] = recipe.name;
    j["refop"] = recipe.refop;
    j["samples"] = recipe.samples;
    j["holdout_mismatch_max"] = hist.holdout_mismatch.max;
    j["holdout_mismatch_mean"] = hist.holdout_mismatch.mean;
    j["best_epoch"] = hist.best_epoch;
    j["best_holdout_loss"] = hist.best_holdout_loss;
    std::ofstream f(res.mismatch_path);
    f << j.dump(2) << "\n";
  }
  return res;
}

namespace {
std::string plan_string(const StrangSchedule& sch, const BlockSet& bs) {
  std::ostringstream os;
  for (size_t i = 0; i < sch.steps.size(); ++i) {
    if (i) os << "|";
    os << bs.blocks[sch.steps[i].block_index].name << ":"
       << (sch.steps[i].full ? "full" : "half");
  }
  return os.str();
}
}  // namespace

RunResult cmd_run(const ExperimentSpec& spec, bool exact_blocks) {
  Assembly as = assemble_experiment(spec, exact_blocks);
  fs::create_directories(spec.out_dir);

  const auto sch_learned = build_strang_schedule(as.learned, as.bp, as.order);
  const auto sch_ref = build_strang_schedule(as.reference, as.bp, as.order);

  // both runs must share the exact same palindromic plan
  const std::string plan = plan_string(sch_learned, as.learned);
  require(plan == plan_string(sch_ref, as.reference),
          "cmd_run: learned and reference schedules diverge");

  RolloutOptions opt;
  opt.store_stride = spec.store_stride;
  opt.log_structure = spec.log_structure;

  const auto rec_learned = rollout(as.bp, sch_learned, as.learned, as.a0,
                                   spec.dt, spec.n_steps, as.lift, opt);
  const auto rec_ref = reference_rollout(as.bp, sch_ref, as.reference, as.a0,
                                         spec.dt, spec.n_steps, as.lift, opt);

  const ErrorReport report = build_error_report(rec_learned, rec_ref, as.bp, as.lift);

  record_to_csv(rec_learned, as.bp, as.lift, spec.out_dir + "/learned_series.csv",
                false);
  record_to_csv(rec_ref, as.bp, as.lift, spec.out_dir + "/reference_series.csv",
                false);
  error_report_to_csv(report, spec.out_dir + "/error_report.csv");
  {
    std::ofstream f(spec.out_dir + "/config_echo.json");
    f << experiment_to_json(spec) << "\n";
  }

  ordered_json summary;
  summary["experiment"] = spec.experiment;
  summary["exact_blocks"] = exact_blocks;
  summary["baseplate"] = ordered_json::parse(as.bp.manifest_json());
  summary["schedule"] = plan;
  summary["seed"] = spec.seed;
  summary["errors"] = {{"max_rel", report.max_rel},
                       {"mean_rel", report.mean_rel},
                       {"final_rel", report.final_rel}};
  if (spec.log_structure) {
    const auto drift = substep_drift_report(rec_learned, as.learned);
    double max_de = 0.0, max_dh = 0.0;
    for (const auto& d : drift) {
      if (d.kind == BlockKind::E) max_de = std::max(max_de, d.delta);
      if (d.kind == BlockKind::H) max_dh = std::max(max_dh, std::abs(d.delta));
    }
    summary["structure"] = {{"max_dE", max_de}, {"max_abs_dH", max_dh}};
  }
  summary["config"] = ordered_json::parse(experiment_to_json(spec));

  RunResult res;
  res.report = report;
  res.schedule_plan = plan;
  res.summary_path = spec.out_dir + "/summary.json";
  std::ofstream f(res.summary_path);
  f << summary.dump(2) << "\n";
  return res;
}

SweepResult cmd_sweep_convergence(const ExperimentSpec& spec, int halvings) {
  require(halvings >= 3, "sweep: need at least 3 dt halvings for an order estimate");
  Assembly as = assemble_experiment(spec, true);
  fs::create_directories(spec.out_dir);

  std::vector<double> dts;
  for (int i = 0; i < halvings; ++i) dts.push_back(spec.dt / std::pow(2.0, i));
  Vec v(as.bp.K, 0.0);
  v[0] = 1.0;  // unused (no eps rows)
  const auto table = theorem1_decomposition(as.bp, as.reference, as.order, as.a0,
                                            spec.T, dts, {}, v, as.lift);
  SweepResult res;
  res.order = table.order_dt;
  res.table_path = spec.out_dir + "/convergence.csv";
  theorem1_to_csv(table, res.table_path);
  return res;
}

SweepResult cmd_sweep_epsilons(const ExperimentSpec& spec,
                               const std::vector<double>& eps_list) {
  require(!eps_list.empty(), "sweep: empty epsilon list");
  Assembly as = assemble_experiment(spec, true);
  fs::create_directories(spec.out_dir);

  // deterministic unit direction from the run seed
  Vec v(as.bp.K);
  rng::Stream s(rng::derive(spec.seed, 0xE75));
  for (auto& x : v) x = s.normal();
  double n = std::sqrt(kern::dot(v, v));
  for (auto& x : v) x /= n;

  const auto table = theorem1_decomposition(as.bp, as.reference, as.order, as.a0,
                                            spec.T, {spec.dt}, eps_list, v, as.lift);
  SweepResult res;
  res.slope_eps = table.slope_eps;
  res.table_path = spec.out_dir + "/theorem1.csv";
  theorem1_to_csv(table, res.table_path);
  return res;
}

std::string cmd_verify_checkpoint(const std::string& path,
                                  const ExperimentSpec& baseplate_spec) {
  Assembly as = assemble_experiment(baseplate_spec, true);
  const Block b = load_checkpoint(path, as.bp);
  std::ostringstream os;
  os << "checkpoint ok\n"
     << "  block: " << b.name << " kind " << block_kind_name(b.kind)
     << " structure " << struct_kind_name(b.structure.kind) << "\n"
     << "  generator: " << b.generator->variant_name() << " ("
     << b.generator->param_size() << " parameters)\n"
     << "  baseplate: " << as.bp.manifest_json() << "\n";
  return os.str();
}

std::string cmd_info() {
  std::ostringstream os;
  os << "experiments:\n";
  for (const auto& n : experiment_names()) {
    const auto s = experiment_defaults(n);
    os << "  " << n << ": dt=" << s.dt << " T=" << s.T;
    if (s.Q) os << " Q=" << s.Q << " K=" << s.K;
    if (s.N) os << " N=" << s.N << " K_cut=" << s.K_cut;
    os << "\n";
  }
  os << "pretrain blocks:\n";
  for (const auto& n : pretrain_names()) {
    const auto r = pretrain_recipe(n);
    os << "  " << n << ": target " << r.refop << ", M=" << r.samples
       << ", epochs=" << r.train.epochs << ", lr=" << r.train.lr << "\n";
  }
  return os.str();
}

}  // namespace blockpde
