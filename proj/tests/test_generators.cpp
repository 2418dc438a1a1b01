#include "doctest.h"

#include <cmath>

#include "blockpde/generators.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/rng.hpp"

using namespace blockpde;

namespace {
Vec random_state(int K, uint64_t seed, double scale = 1.0) {
  Vec a(K);
  rng::Stream s(seed);
  for (auto& v : a) v = scale * s.normal();
  return a;
}

// central finite differences of gen_value
Vec fd_grad(const ScalarGenerator& g, const Baseplate& bp, const Vec& a,
            const LiftingField& lift, double t, double h = 1e-5) {
  Vec out(a.size());
  for (size_t k = 0; k < a.size(); ++k) {
    Vec ap = a, am = a;
    ap[k] += h;
    am[k] -= h;
    out[k] = (gen_value(g, bp, ap, lift, t) - gen_value(g, bp, am, lift, t)) / (2 * h);
  }
  return out;
}

double rel_diff(const Vec& a, const Vec& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(1e-12, std::sqrt(den));
}
}  // namespace

TEST_CASE("quadratic values: zero payload, diag closed form") {
  const auto bp = build_shen_baseplate(16, 2);
  const auto lift0 = LiftingField::zero();

  auto zero = make_quad_lowrank(2, 4, 1);
  std::get<QuadLowRank>(zero.payload).U.d.assign(8, 0.0);
  for (int trial = 0; trial < 5; ++trial)
    CHECK(gen_value(zero, bp, random_state(2, trial), lift0, 0.0) == 0.0);

  auto diag = make_quad_lowrank(2, 1, 2);
  std::get<QuadLowRank>(diag.payload).U.d.assign(2, 0.0);
  std::get<QuadLowRank>(diag.payload).kdiag = {1.0, 2.0};
  CHECK(gen_value(diag, bp, {1.0, 1.0}, lift0, 0.0) == doctest::Approx(1.5));
}

TEST_CASE("all variants: gen_grad matches finite differences (20 states each)") {
  const auto bp = build_shen_baseplate(32, 8);
  const auto lift0 = LiftingField::zero();

  std::vector<ScalarGenerator> gens;
  gens.push_back(make_mlp_generator(bp.K, 11));
  gens.push_back(make_quad_lowrank(bp.K, 4, 12));
  {
    auto& q = std::get<QuadLowRank>(gens.back().payload);
    rng::Stream s(77);
    for (auto& v : q.kdiag) v = s.normal();
    for (auto& v : q.U.d) v = 0.3 * s.normal();
  }
  gens.push_back(make_quad_diag_softplus(bp.K, 1.0, 0.4));
  gens.push_back(make_density_generator(13, true, 16, 2));

  for (const auto& g : gens) {
    for (int trial = 0; trial < 20; ++trial) {
      const Vec a = random_state(bp.K, 900 + trial, 0.5);
      const Vec want = fd_grad(g, bp, a, lift0, 0.0);
      const Vec got = gen_grad(g, bp, a, lift0, 0.0);
      CHECK(rel_diff(got, want) < 1e-6);
    }
  }
}

TEST_CASE("quadratic gradients: linear in a, zero at origin") {
  const auto bp = build_shen_baseplate(16, 4);
  const auto lift0 = LiftingField::zero();
  auto g = make_quad_lowrank(bp.K, 2, 3);
  {
    auto& q = std::get<QuadLowRank>(g.payload);
    rng::Stream s(5);
    for (auto& v : q.kdiag) v = s.normal();
    for (auto& v : q.U.d) v = s.normal();
  }
  const Vec z = gen_grad(g, bp, Vec(bp.K, 0.0), lift0, 0.0);
  for (double v : z) CHECK(v == 0.0);

  const Vec a = random_state(bp.K, 6);
  const Vec b = random_state(bp.K, 7);
  Vec ab(bp.K);
  for (int k = 0; k < bp.K; ++k) ab[k] = 2.0 * a[k] + 3.0 * b[k];
  const Vec ga = gen_grad(g, bp, a, lift0, 0.0);
  const Vec gb = gen_grad(g, bp, b, lift0, 0.0);
  const Vec gab = gen_grad(g, bp, ab, lift0, 0.0);
  for (int k = 0; k < bp.K; ++k)
    CHECK(gab[k] == doctest::Approx(2.0 * ga[k] + 3.0 * gb[k]).epsilon(1e-11));
}

TEST_CASE("density value: rho(u)=u^2 equals weighted norm^2 (refined quadrature oracle)") {
  const auto bp = build_shen_baseplate(24, 6);
  const auto lift0 = LiftingField::zero();

  // train-free density net that implements u^2 is not expressible exactly;
  // instead compare the generic density machinery on rho = identity-squared
  // via a direct weighted sum, then cross-check with a finer grid.
  const Vec a = random_state(bp.K, 21, 0.4);
  const Vec u = bp.reconstruct(a);
  double direct = 0.0;
  for (int q = 0; q < bp.grid.Q(); ++q) direct += bp.grid.w[q] * u[q] * u[q];

  const auto fine = build_shen_baseplate(96, 6);
  const Vec uf = fine.reconstruct(a);
  double refined = 0.0;
  for (int q = 0; q < fine.grid.Q(); ++q) refined += fine.grid.w[q] * uf[q] * uf[q];
  CHECK(direct == doctest::Approx(refined).epsilon(1e-12));
}

TEST_CASE("density: analytic gradient identity for rho(u)=u^3/6 (FD oracle)") {
  const auto bp = build_shen_baseplate(24, 6);
  const auto lift0 = LiftingField::zero();
  const Vec a = random_state(bp.K, 31, 0.4);

  // Phi^T(w . u^2/2) computed directly
  const Vec u = bp.reconstruct(a);
  Vec wu(u.size());
  for (size_t q = 0; q < u.size(); ++q) wu[q] = bp.grid.w[q] * 0.5 * u[q] * u[q];
  const Vec analytic = kern::matvec_t(bp.phi, wu);

  // FD of the exact value sum_q w_q u^3/6
  auto value = [&](const Vec& s) {
    const Vec us = bp.reconstruct(s);
    double acc = 0.0;
    for (size_t q = 0; q < us.size(); ++q)
      acc += bp.grid.w[q] * us[q] * us[q] * us[q] / 6.0;
    return acc;
  };
  const double h = 1e-6;
  for (int k = 0; k < bp.K; ++k) {
    Vec ap = a, am = a;
    ap[k] += h;
    am[k] -= h;
    const double fd = (value(ap) - value(am)) / (2 * h);
    CHECK(analytic[k] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("param vjp: diag softplus bilinear form and density linear case") {
  const auto bp = build_shen_baseplate(16, 4);
  const auto lift0 = LiftingField::zero();

  SUBCASE("diag: d/dc_m [v^T (d(c) . a)] = v_m a_m sigmoid(c_m)") {
    auto g = make_quad_diag_softplus(bp.K, 1.0, 0.3);
    const Vec a = random_state(bp.K, 41);
    const Vec v = random_state(bp.K, 42);
    GenWorkspace ws;
    Vec grad(g.param_size(), 0.0);
    gen_grad_param_vjp(g, bp, a, lift0, 0.0, v, 1.0, ws, grad);
    const double sig = 1.0 / (1.0 + std::exp(-0.3));
    for (int k = 0; k < bp.K; ++k)
      CHECK(grad[k] == doctest::Approx(v[k] * a[k] * sig).epsilon(1e-14));
  }

  SUBCASE("all trainable variants: parameter FD oracle to 1e-5") {
    std::vector<ScalarGenerator> gens;
    gens.push_back(make_mlp_generator(bp.K, 51));
    gens.push_back(make_quad_lowrank(bp.K, 2, 52));
    {
      auto& q = std::get<QuadLowRank>(gens.back().payload);
      rng::Stream s(53);
      for (auto& x : q.kdiag) x = s.normal();
      for (auto& x : q.U.d) x = 0.5 * s.normal();
    }
    gens.push_back(make_quad_diag_softplus(bp.K, -1.0, 0.2));
    gens.push_back(make_density_generator(54, true, 8, 2));

    for (auto& g : gens) {
      const Vec a = random_state(bp.K, 61, 0.5);
      const Vec v = random_state(bp.K, 62);
      GenWorkspace ws;
      Vec grad(g.param_size(), 0.0);
      gen_grad_param_vjp(g, bp, a, lift0, 0.0, v, 1.0, ws, grad);

      Vec theta = g.flatten_params();
      const double h = 1e-6;
      const size_t stride = std::max<size_t>(1, theta.size() / 40);
      for (size_t idx = 0; idx < theta.size(); idx += stride) {
        Vec tp = theta, tm = theta;
        tp[idx] += h;
        tm[idx] -= h;
        ScalarGenerator gp = g, gm = g;
        gp.unflatten_params(tp);
        gm.unflatten_params(tm);
        const double fp = kern::dot(gen_grad(gp, bp, a, lift0, 0.0), v);
        const double fm = kern::dot(gen_grad(gm, bp, a, lift0, 0.0), v);
        const double fd = (fp - fm) / (2 * h);
        if (std::abs(fd) > 1e-7)
          CHECK(grad[idx] == doctest::Approx(fd).epsilon(1e-5));
        else
          CHECK(std::abs(grad[idx] - fd) < 1e-7);
      }
    }
  }
}

TEST_CASE("softplus diagonal is strictly positive; signed value is semidefinite") {
  const auto bp = build_shen_baseplate(16, 4);
  const auto lift0 = LiftingField::zero();
  for (double craw : {-20.0, -1.0, 0.0, 3.0}) {
    auto g = make_quad_diag_softplus(bp.K, 1.0, craw);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec a = random_state(bp.K, 700 + trial);
      CHECK(gen_value(g, bp, a, lift0, 0.0) >= 0.0);
    }
  }
}

TEST_CASE("density value invariant under node reordering") {
  const auto bp = build_shen_baseplate(24, 6);
  const auto lift0 = LiftingField::zero();
  auto g = make_density_generator(71, true, 8, 2);
  const auto& d = std::get<DensityGenerator>(g.payload);
  const Vec a = random_state(bp.K, 72, 0.4);
  const double val = gen_value(g, bp, a, lift0, 0.0);

  // reversed-order summation oracle over the same nodes
  const Vec u = bp.reconstruct(a);
  MlpWorkspace ws;
  ws.match(d.rho);
  double rev = 0.0;
  Vec in(1);
  for (int q = bp.grid.Q() - 1; q >= 0; --q) {
    in[0] = u[q];
    rev += bp.grid.w[q] * mlp_forward_scalar(d.rho, ws, in);
  }
  CHECK(std::abs(val - rev) < 1e-13 * std::max(1.0, std::abs(val)));
}

TEST_CASE("flatten/unflatten round-trips for every variant") {
  for (auto g : {make_mlp_generator(6, 1), make_quad_lowrank(6, 3, 2),
                 make_quad_diag_softplus(6), make_density_generator(3, false, 8, 2)}) {
    Vec f = g.flatten_params();
    rng::Stream s(9);
    for (auto& x : f) x = s.normal();
    g.unflatten_params(f);
    CHECK(g.flatten_params() == f);
  }
}
