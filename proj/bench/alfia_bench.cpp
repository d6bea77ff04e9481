// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "alfia/kernels.hpp"
#include "alfia/random.hpp"

namespace {

using alfia::Matrix;
namespace k = alfia::kernels;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t stream) {
  alfia::Rng rng = alfia::derive_rng(7, {stream});
  return alfia::random_normal(r, c, 1.0, rng);
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Matrix a = random_matrix(n, d, 1);
  const Matrix b = random_matrix(d, d, 2);
  for (auto _ : state) {
    Matrix c(n, d);
    Kernel(a, b, c);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * d * d));
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_matmul_nt(benchmark::State& state) {
  // Attention scores: (T x d_head) times its own transpose.
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Matrix q = random_matrix(t, d, 3);
  const Matrix kk = random_matrix(t, d, 4);
  for (auto _ : state) {
    Matrix c(t, t);
    Kernel(q, kk, c);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(t * t * d));
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void bm_matmul_tn(benchmark::State& state) {
  // Weight gradient: x^T dy.
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Matrix x = random_matrix(n, d, 5);
  const Matrix dy = random_matrix(n, d, 6);
  for (auto _ : state) {
    Matrix c(d, d);
    Kernel(x, dy, c);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * d * d));
}

template <Matrix (*Kernel)(const Matrix&)>
void bm_distances(benchmark::State& state) {
  const Matrix p = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 8);
  for (auto _ : state) {
    Matrix d = Kernel(p);
    benchmark::DoNotOptimize(d.data().data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  for (long n : {64, 256, 1024})
    for (long d : {32, 64, 256}) b->Args({n, d});
}

}  // namespace

BENCHMARK(bm_matmul<k::serial::matmul>)->Apply(shapes);
BENCHMARK(bm_matmul<k::parallel::matmul>)->Apply(shapes)->UseRealTime();
BENCHMARK(bm_matmul_nt<k::serial::matmul_nt>)->Apply(shapes);
BENCHMARK(bm_matmul_nt<k::parallel::matmul_nt>)->Apply(shapes)->UseRealTime();
BENCHMARK(bm_matmul_tn<k::serial::matmul_tn>)->Apply(shapes);
BENCHMARK(bm_matmul_tn<k::parallel::matmul_tn>)->Apply(shapes)->UseRealTime();
BENCHMARK(bm_distances<k::serial::pairwise_distances>)->Arg(200)->Arg(1000);
BENCHMARK(bm_distances<k::parallel::pairwise_distances>)->Arg(200)->Arg(1000)->UseRealTime();

BENCHMARK_MAIN();
