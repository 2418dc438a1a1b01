#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "blockpde/errors.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/rng.hpp"
#include "blockpde/training.hpp"

using namespace blockpde;

namespace {
std::string tmp_path(const std::string& name) {
  return std::string("/tmp/blockpde_test_") + name;
}
std::string slurp(const std::string& path) {
  std::ifstream f(path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}
}  // namespace

TEST_CASE("prior: default parameters, sigma law, empirical moments") {
  const auto bp = build_shen_baseplate(32, 8);
  PriorConfig pc;  // amp=1, alpha=0.5
  CHECK(pc.amp == 1.0);
  CHECK(pc.alpha == 0.5);

  const Vec sigma = prior_sigma(bp, pc);
  for (int k = 0; k < bp.K; ++k)
    CHECK(sigma[k] == doctest::Approx(1.0 / std::sqrt(2.0 + k)).epsilon(1e-14));

  // Monte-Carlo vs closed form: per-coordinate std within 3% over 1e5 draws
  const int n = 100000;
  const auto samples = sample_prior(bp, pc, n, 42);
  for (int k = 0; k < bp.K; k += 3) {
    double s2 = 0.0;
    for (const auto& a : samples) s2 += a[k] * a[k];
    const double sd = std::sqrt(s2 / n);
    CHECK(std::abs(sd - sigma[k]) < 0.03 * sigma[k]);
  }
}

TEST_CASE("prior: alpha -> infinity concentrates energy in the lowest mode") {
  const auto bp = build_shen_baseplate(32, 8);
  PriorConfig pc{1.0, 50.0};
  const auto samples = sample_prior(bp, pc, 10000, 7);
  double v1 = 0.0, vtot = 0.0;
  for (const auto& a : samples) {
    v1 += a[0] * a[0];
    for (double x : a) vtot += x * x;
  }
  CHECK(v1 / vtot >= 0.99);
}

TEST_CASE("prior: 2d fourier uses the multi-index norm; DC sampled once") {
  const auto bp = build_fourier2d_baseplate(16, 2);
  PriorConfig pc{2.0, 1.0};
  const Vec sigma = prior_sigma(bp, pc);
  for (int k = 0; k < bp.K; ++k) {
    const ModeInfo& m = bp.mode_table[k];
    const double norm = std::sqrt(static_cast<double>(m.j * m.j + m.l * m.l));
    CHECK(sigma[k] == doctest::Approx(2.0 / (1.0 + norm)).epsilon(1e-14));
  }
  // slot 0 is the single real DC coordinate
  CHECK(bp.mode_table[0].j == 0);
  CHECK(bp.mode_table[0].l == 0);
}

TEST_CASE("dataset: determinism, save/load round-trip, verification on load") {
  const auto bp = build_shen_baseplate(32, 8);
  const auto ref = ref_registry("shen_uxx");
  PriorConfig pc;
  const auto ds1 = make_dataset(bp, ref, pc, 50, 11);
  const auto ds2 = make_dataset(bp, ref, pc, 50, 11);
  CHECK(ds1.states == ds2.states);
  CHECK(ds1.targets == ds2.targets);

  const std::string path = tmp_path("dataset.jsonl");
  save_dataset(ds1, path);
  const auto loaded = load_dataset(path, bp);
  CHECK(loaded.states == ds1.states);
  CHECK(loaded.targets == ds1.targets);
  CHECK(loaded.refop_name == "shen_uxx");

  // wrong baseplate rejected
  const auto bp2 = build_shen_baseplate(32, 9);
  CHECK_THROWS_AS(load_dataset(path, bp2), IncompatibleBaseplate);

  // corrupt a stored target: verification must fail
  {
    auto corrupt = ds1;
    corrupt.targets[3][0] += 1e-3;
    const std::string path2 = tmp_path("dataset_bad.jsonl");
    save_dataset(corrupt, path2);
    CHECK_THROWS_AS(load_dataset(path2, bp), ParseError);
  }
}

TEST_CASE("training: diagonal softplus on fourier laplacian recovers multipliers") {
  const auto bp = build_fourier2d_baseplate(12, 4);  // K = 81
  const auto ref = ref_registry("fourier_laplacian");
  PriorConfig pc;
  const auto ds = make_dataset(bp, ref, pc, 400, 3);

  Block b = make_e_block("lap", make_quad_diag_softplus(bp.K, 1.0, 0.0),
                         StructKind::identity, 1.0);
  TrainConfig tc;
  tc.epochs = 120;
  tc.batch = 64;
  tc.lr = 2.0;
  tc.schedule = {15, 0.3};
  tc.weight_decay = 0.0;
  tc.seed = 5;

  const auto hist = train_block(b, bp, ds, tc);

  // convex case: the loss collapses by far more than 100x
  CHECK(hist.rows.back().train_loss * 100.0 < hist.rows.front().train_loss);

  const auto& q = std::get<QuadDiagSoftplus>(b.generator->payload);
  for (int k = 0; k < bp.K; ++k) {
    const ModeInfo& m = bp.mode_table[k];
    const double want = static_cast<double>(m.j * m.j + m.l * m.l);
    const double got = q.c_raw[k] > 30.0 ? q.c_raw[k] : std::log1p(std::exp(q.c_raw[k]));
    CHECK(std::abs(got - want) / std::max(1.0, want) < 1e-3);
  }

  // holdout mismatch is tiny relative to the mean reference magnitude
  double mean_ref = 0.0;
  for (const auto& t : ds.targets) mean_ref += std::sqrt(kern::dot(t, t));
  mean_ref /= ds.size();
  CHECK(hist.holdout_mismatch.mean <= 1e-5 * mean_ref);
}

TEST_CASE("training: seeded determinism of history and parameters") {
  const auto bp = build_fourier2d_baseplate(12, 2);
  const auto ref = ref_registry("fourier_laplacian");
  const auto ds = make_dataset(bp, ref, PriorConfig{}, 100, 17);

  auto run = [&]() {
    Block b = make_e_block("lap", make_quad_diag_softplus(bp.K, 1.0, 0.0),
                           StructKind::identity, 1.0);
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch = 32;
    tc.lr = 0.3;
    tc.schedule = {5, 0.3};
    tc.seed = 9;
    const auto h = train_block(b, bp, ds, tc);
    return std::make_pair(h, b.generator->flatten_params());
  };
  const auto [h1, p1] = run();
  const auto [h2, p2] = run();
  CHECK(p1 == p2);
  REQUIRE(h1.rows.size() == h2.rows.size());
  for (size_t i = 0; i < h1.rows.size(); ++i) {
    CHECK(h1.rows[i].train_loss == h2.rows[i].train_loss);
    CHECK(h1.rows[i].holdout_loss == h2.rows[i].holdout_loss);
  }
}

TEST_CASE("training: rejects non-trainable blocks and foreign datasets") {
  const auto bp = build_shen_baseplate(24, 6);
  const auto ds = make_dataset(bp, ref_registry("shen_uux"), PriorConfig{}, 20, 1);

  Block exact = make_h_block("t", make_cubic_density(-1.0 / 6.0),
                             StructKind::shen_derivative, 1.0);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train_block(exact, bp, ds, tc), std::invalid_argument);

  Block b = make_h_block("t", make_density_generator(3, true, 8, 2),
                         StructKind::shen_derivative, 1.0);
  const auto bp2 = build_shen_baseplate(24, 7);
  CHECK_THROWS_AS(train_block(b, bp2, ds, tc), IncompatibleBaseplate);
}

TEST_CASE("checkpoint: save/load round-trip preserves the field to 1e-15") {
  const auto bp = build_shen_baseplate(24, 6);
  Block b = make_e_block("uxx_mlp", make_mlp_generator(bp.K, 77),
                         StructKind::shen_mass_inverse, 0.5);
  const std::string path = tmp_path("ckpt.json");
  save_checkpoint(b, bp, PriorConfig{}, TrainConfig{}, {1e-3, 5e-4}, path);

  const Block loaded = load_checkpoint(path, bp);
  rng::Stream s(3);
  Vec a(bp.K);
  for (auto& x : a) x = 0.3 * s.normal();
  const Vec f1 = b.eval(bp, a);
  const Vec f2 = loaded.eval(bp, a);
  for (int k = 0; k < bp.K; ++k)
    CHECK(std::abs(f1[k] - f2[k]) <= 1e-15 * std::max(1.0, std::abs(f1[k])));

  // different-K baseplate refused
  const auto bp2 = build_shen_baseplate(24, 7);
  CHECK_THROWS_AS(load_checkpoint(path, bp2), IncompatibleBaseplate);

  // unsupported version named in the error
  {
    std::string text = slurp(path);
    const auto pos = text.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 9");
    const std::string bad = tmp_path("ckpt_bad.json");
    std::ofstream(bad) << text;
    try {
      load_checkpoint(bad, bp);
      CHECK(false);
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("9") != std::string::npos);
    }
  }

  // identical save is byte-identical (determinism of serialization)
  const std::string path2 = tmp_path("ckpt2.json");
  save_checkpoint(b, bp, PriorConfig{}, TrainConfig{}, {1e-3, 5e-4}, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("holdout indices never appear in the training split") {
  // structural check of the split logic: re-derive the permutation
  const int M = 100;
  std::vector<int> perm(M);
  for (int i = 0; i < M; ++i) perm[i] = i;
  rng::Stream s(rng::derive(9, 0xD5));
  s.shuffle(perm.data(), perm.size());
  const int n_hold = 10;
  std::vector<bool> in_train(M, false);
  for (int i = 0; i < M - n_hold; ++i) in_train[perm[i]] = true;
  for (int i = M - n_hold; i < M; ++i) CHECK(!in_train[perm[i]]);
}
