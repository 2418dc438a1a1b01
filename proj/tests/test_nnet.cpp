#include "doctest.h"

#include <cmath>

#include "blockpde/errors.hpp"
#include "blockpde/nnet.hpp"
#include "blockpde/rng.hpp"

using namespace blockpde;

namespace {
Vec random_vec(int n, uint64_t seed, double scale = 1.0) {
  Vec v(n);
  rng::Stream s(seed);
  for (auto& x : v) x = scale * s.normal();
  return v;
}
}  // namespace

TEST_CASE("gelu matches the erf-based exact form and derivative FDs") {
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double want = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    CHECK(std::abs(act_value(Activation::gelu, x) - want) < 1e-12);
    const double h = 1e-6;
    const double fd1 =
        (act_value(Activation::gelu, x + h) - act_value(Activation::gelu, x - h)) / (2 * h);
    CHECK(act_d1(Activation::gelu, x) == doctest::Approx(fd1).epsilon(1e-7));
    const double fd2 =
        (act_d1(Activation::gelu, x + h) - act_d1(Activation::gelu, x - h)) / (2 * h);
    CHECK(act_d2(Activation::gelu, x) == doctest::Approx(fd2).epsilon(1e-6));
  }
}

TEST_CASE("forward: zero net, single affine layer, 2-layer straight-line oracle") {
  Mlp zero;
  zero.act = Activation::gelu;
  zero.W.push_back(Mat(2, 3));
  zero.b.push_back(Vec(2, 0.0));
  const Vec out = mlp_forward(zero, {1.0, -2.0, 0.5});
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  Mlp lin = zero;
  lin.W[0](0, 0) = 1.0;
  lin.W[0](0, 1) = 2.0;
  lin.W[0](0, 2) = -1.0;
  lin.W[0](1, 0) = 0.5;
  lin.b[0] = {0.25, -0.75};
  const Vec out2 = mlp_forward(lin, {1.0, -2.0, 0.5});
  CHECK(out2[0] == doctest::Approx(1.0 - 4.0 - 0.5 + 0.25));
  CHECK(out2[1] == doctest::Approx(0.5 - 0.75));

  // independent straight-line evaluation of a random 2-layer net
  const Mlp m = mlp_init({2, 3, 1}, Activation::gelu, 7);
  const Vec x = {0.3, -1.1};
  Vec hidden(3);
  for (int i = 0; i < 3; ++i) {
    double s = m.b[0][i];
    for (int j = 0; j < 2; ++j) s += m.W[0](i, j) * x[j];
    hidden[i] = act_value(Activation::gelu, s);
  }
  double y = m.b[1][0];
  for (int i = 0; i < 3; ++i) y += m.W[1](0, i) * hidden[i];
  CHECK(mlp_forward(m, x)[0] == doctest::Approx(y).epsilon(1e-15));

  CHECK_THROWS_AS(mlp_forward(m, {1.0}), std::invalid_argument);
}

TEST_CASE("input gradient: linear net, constant net, FD oracle") {
  Mlp lin;
  lin.act = Activation::gelu;
  lin.W.push_back(Mat(1, 4));
  lin.b.push_back(Vec(1, 0.3));
  const Vec w = {0.2, -1.0, 0.7, 2.0};
  for (int j = 0; j < 4; ++j) lin.W[0](0, j) = w[j];
  const Vec g = mlp_input_gradient(lin, {1.0, 1.0, 1.0, 1.0});
  for (int j = 0; j < 4; ++j) CHECK(g[j] == doctest::Approx(w[j]).epsilon(1e-15));

  Mlp constant = lin;
  for (auto& x : constant.W[0].d) x = 0.0;
  const Vec g0 = mlp_input_gradient(constant, {1.0, 2.0, 3.0, 4.0});
  for (double v : g0) CHECK(v == 0.0);

  // FD oracle over 20 random nets/points
  for (int trial = 0; trial < 20; ++trial) {
    const Mlp m = mlp_init({5, 16, 16, 1}, Activation::gelu, 100 + trial);
    const Vec x = random_vec(5, 200 + trial);
    const Vec grad = mlp_input_gradient(m, x);
    const double h = 1e-5;
    for (int j = 0; j < 5; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (mlp_forward(m, xp)[0] - mlp_forward(m, xm)[0]) / (2 * h);
      CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6));
    }
  }

  Mlp vecout = mlp_init({3, 4, 2}, Activation::gelu, 1);
  CHECK_THROWS_AS(mlp_input_gradient(vecout, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("parameter gradient of directional input derivative") {
  SUBCASE("linear net: gradient is v on weights, 0 on bias") {
    Mlp lin;
    lin.act = Activation::gelu;
    lin.W.push_back(Mat(1, 3));
    lin.b.push_back(Vec(1, 0.1));
    lin.W[0](0, 0) = 2.0;
    lin.W[0](0, 1) = -1.0;
    lin.W[0](0, 2) = 0.5;
    MlpWorkspace ws;
    ws.match(lin);
    MlpGrads g;
    g.match(lin);
    const Vec v = {0.4, 1.2, -0.6};
    const double dir = mlp_dir_grad_param(lin, ws, {1.0, 2.0, -1.0}, v, 1.0, g);
    CHECK(dir == doctest::Approx(2.0 * 0.4 - 1.2 - 0.3).epsilon(1e-15));
    for (int j = 0; j < 3; ++j) CHECK(g.dW[0](0, j) == doctest::Approx(v[j]).epsilon(1e-15));
    CHECK(g.db[0][0] == 0.0);
  }

  SUBCASE("zero direction gives zero parameter gradient") {
    const Mlp m = mlp_init({4, 8, 1}, Activation::gelu, 3);
    MlpWorkspace ws;
    ws.match(m);
    MlpGrads g;
    g.match(m);
    mlp_dir_grad_param(m, ws, random_vec(4, 5), Vec(4, 0.0), 1.0, g);
    for (const auto& dw : g.dW)
      for (double x : dw.d) CHECK(x == 0.0);
  }

  SUBCASE("random small nets: parameter FD oracle to 1e-5 relative") {
    for (int trial = 0; trial < 20; ++trial) {
      Mlp m = mlp_init({3, 6, 6, 1}, Activation::gelu, 400 + trial);
      const Vec x = random_vec(3, 500 + trial);
      const Vec v = random_vec(3, 600 + trial);
      MlpWorkspace ws;
      ws.match(m);
      MlpGrads g;
      g.match(m);
      mlp_dir_grad_param(m, ws, x, v, 1.0, g);

      Vec flatg(m.param_count());
      grads_flatten(g, flatg);
      Vec theta = mlp_flatten(m);
      const double h = 1e-6;
      for (size_t idx = 0; idx < theta.size(); idx += 7) {
        Vec tp = theta, tm = theta;
        tp[idx] += h;
        tm[idx] -= h;
        Mlp mp = m, mm = m;
        mlp_unflatten(mp, tp);
        mlp_unflatten(mm, tm);
        auto dirg = [&](const Mlp& net) {
          Vec gg = mlp_input_gradient(net, x);
          double s = 0.0;
          for (int j = 0; j < 3; ++j) s += gg[j] * v[j];
          return s;
        };
        const double fd = (dirg(mp) - dirg(mm)) / (2 * h);
        if (std::abs(fd) > 1e-8)
          CHECK(flatg[idx] == doctest::Approx(fd).epsilon(1e-5));
        else
          CHECK(std::abs(flatg[idx] - fd) < 1e-8);
      }
    }
  }
}

TEST_CASE("adamw: single-step oracle, decay-only shrink, zero-gradient fixpoint") {
  // hand-executed Adam recurrence: one step, g=1, lr=0.1 gives ~ -0.1
  {
    AdamW opt;
    opt.base_lr = opt.lr = 0.1;
    opt.init(1);
    double p = 1.0;
    const double g = 1.0;
    opt.step(&p, &g, 1);
    // m=0.1, v=1e-3; mhat=1, vhat=1 -> step = 0.1/(1+1e-8)
    CHECK(p == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  {
    AdamW opt;
    opt.base_lr = opt.lr = 0.05;
    opt.weight_decay = 0.2;
    opt.init(1);
    double p = 2.0;
    const double g = 0.0;
    opt.step(&p, &g, 1);
    CHECK(p == doctest::Approx(2.0 * (1.0 - 0.05 * 0.2)).epsilon(1e-14));
  }
  {
    AdamW opt;
    opt.base_lr = opt.lr = 0.1;
    opt.init(2);
    Vec p = {0.5, -0.5};
    const Vec g = {0.0, 0.0};
    opt.step(p.data(), g.data(), 2);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == -0.5);
  }
  {
    AdamW opt;
    opt.base_lr = opt.lr = 0.1;
    opt.init(1);
    double p = 0.0;
    const double g = std::nan("");
    CHECK_THROWS_AS(opt.step(&p, &g, 1), NumericError);
  }
}

TEST_CASE("step schedule decays every step_size epochs") {
  AdamW opt;
  opt.base_lr = 1e-3;
  opt.schedule = {50, 0.3};
  opt.init(1);
  opt.on_epoch(0);
  CHECK(opt.lr == doctest::Approx(1e-3));
  opt.on_epoch(49);
  CHECK(opt.lr == doctest::Approx(1e-3));
  opt.on_epoch(50);
  CHECK(opt.lr == doctest::Approx(3e-4));
  opt.on_epoch(149);
  CHECK(opt.lr == doctest::Approx(9e-5));
}

TEST_CASE("seeded init is deterministic and fan-in bounded") {
  const Mlp a = mlp_init({8, 16, 1}, Activation::gelu, 99);
  const Mlp b = mlp_init({8, 16, 1}, Activation::gelu, 99);
  CHECK(mlp_flatten(a) == mlp_flatten(b));
  const Mlp c = mlp_init({8, 16, 1}, Activation::gelu, 100);
  CHECK(mlp_flatten(a) != mlp_flatten(c));
  const double bound0 = std::sqrt(6.0 / 8.0);
  for (double w : a.W[0].d) CHECK(std::abs(w) <= bound0);
  for (double x : a.b[0]) CHECK(x == 0.0);
}
