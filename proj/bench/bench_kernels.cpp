// Serial-vs-OpenMP kernel comparison on representative solver shapes:
// basis matvecs (Shen reconstruct/project), complex transforms (Fourier),
// and the chunked gradient accumulation used by operator-matching training.

#include <benchmark/benchmark.h>

#include "blockpde/baseplate.hpp"
#include "blockpde/kernels.hpp"
#include "blockpde/nnet.hpp"
#include "blockpde/rng.hpp"

using namespace blockpde;

namespace {

Mat random_mat(int r, int c, uint64_t seed) {
  Mat m(r, c);
  rng::Stream s(seed);
  for (auto& v : m.d) v = s.normal();
  return m;
}

Vec random_vec(int n, uint64_t seed) {
  Vec v(n);
  rng::Stream s(seed);
  for (auto& x : v) x = s.normal();
  return v;
}

void bm_matvec_serial(benchmark::State& state) {
  const int Q = static_cast<int>(state.range(0));
  const Mat A = random_mat(Q, Q / 2, 1);
  const Vec x = random_vec(Q / 2, 2);
  Vec y(Q);
  for (auto _ : state) {
    kern::serial::matvec(A, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_matvec_omp(benchmark::State& state) {
  const int Q = static_cast<int>(state.range(0));
  const Mat A = random_mat(Q, Q / 2, 1);
  const Vec x = random_vec(Q / 2, 2);
  Vec y(Q);
  for (auto _ : state) {
    kern::matvec(A, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}


void bm_cmatmul_serial(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  rng::Stream s(3);
  CMat A(n, n), B(n, n), C;
  for (auto& z : A.d) z = {s.normal(), s.normal()};
  for (auto& z : B.d) z = {s.normal(), s.normal()};
  for (auto _ : state) {
    kern::serial::cmatmul(A, B, C);
    benchmark::DoNotOptimize(C.d.data());
  }
}

void bm_cmatmul_omp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  rng::Stream s(3);
  CMat A(n, n), B(n, n), C;
  for (auto& z : A.d) z = {s.normal(), s.normal()};
  for (auto& z : B.d) z = {s.normal(), s.normal()};
  for (auto _ : state) {
    kern::cmatmul(A, B, C);
    benchmark::DoNotOptimize(C.d.data());
  }
}

// batched MLP gradient accumulation: serial reference vs parallel chunks
void bm_accumulate(benchmark::State& state, bool parallel) {
  const Mlp net = mlp_init({48, 128, 128, 128, 128, 1}, Activation::gelu, 5);
  const int n = 128;
  std::vector<Vec> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = random_vec(48, 100 + i);
  const size_t psize = net.param_count();

  auto work = [&](int i, Vec& acc) {
    MlpWorkspace ws;
    ws.match(net);
    MlpGrads g;
    g.match(net);
    mlp_dir_grad_param(net, ws, xs[i], xs[i], 1.0, g);
    g.axpy_into(acc);
  };
  Vec acc(psize);
  for (auto _ : state) {
    std::fill(acc.begin(), acc.end(), 0.0);
    if (parallel)
      kern::chunked_accumulate(n, work, acc);
    else
      kern::serial::chunked_accumulate(n, work, acc);
    benchmark::DoNotOptimize(acc.data());
  }
}

void bm_accumulate_serial(benchmark::State& state) { bm_accumulate(state, false); }
void bm_accumulate_omp(benchmark::State& state) { bm_accumulate(state, true); }

}  // namespace

BENCHMARK(bm_matvec_serial)->Arg(256)->Arg(1024);
BENCHMARK(bm_matvec_omp)->Arg(256)->Arg(1024);
BENCHMARK(bm_cmatmul_serial)->Arg(43)->Arg(64);
BENCHMARK(bm_cmatmul_omp)->Arg(43)->Arg(64);
BENCHMARK(bm_accumulate_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_accumulate_omp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
