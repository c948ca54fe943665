// Serial vs OpenMP kernel timings. The omp variants must be bit-identical to
// the serial reference (tests/test_numerics.cpp asserts that); this target
// measures what the parallel-for buys at various shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "lantern/kernels.hpp"
#include "lantern/rng.hpp"

namespace {

using lantern::Prng;
namespace kn = lantern::kernels;

std::vector<float> randn(std::size_t n, std::uint64_t seed) {
  Prng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.gauss());
  return v;
}

void bench_matmul_nt_serial(benchmark::State& state) {
  const int n = int(state.range(0));
  const auto a = randn(std::size_t(n) * n, 1);
  const auto b = randn(std::size_t(n) * n, 2);
  std::vector<float> c(std::size_t(n) * n);
  for (auto _ : state) {
    kn::serial::matmul_nt(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2 * int64_t(n) * n * n);
}

void bench_matmul_nt_omp(benchmark::State& state) {
  const int n = int(state.range(0));
  const auto a = randn(std::size_t(n) * n, 1);
  const auto b = randn(std::size_t(n) * n, 2);
  std::vector<float> c(std::size_t(n) * n);
  for (auto _ : state) {
    kn::omp::matmul_nt(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * 2 * int64_t(n) * n * n);
}

void bench_softmax_serial(benchmark::State& state) {
  const int rows = int(state.range(0)), cols = 256;
  const auto x = randn(std::size_t(rows) * cols, 3);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    kn::serial::softmax_rows(x.data(), y.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_softmax_omp(benchmark::State& state) {
  const int rows = int(state.range(0)), cols = 256;
  const auto x = randn(std::size_t(rows) * cols, 3);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    kn::omp::softmax_rows(x.data(), y.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_layernorm_serial(benchmark::State& state) {
  const int rows = int(state.range(0)), cols = 256;
  const auto x = randn(std::size_t(rows) * cols, 5);
  std::vector<float> g(cols, 1.0f), b(cols, 0.0f), y(x.size()), mu(std::size_t(rows), 0.0f),
      rs(std::size_t(rows), 0.0f);
  for (auto _ : state) {
    kn::serial::layernorm_rows(x.data(), g.data(), b.data(), y.data(), mu.data(),
                               rs.data(), rows, cols, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_layernorm_omp(benchmark::State& state) {
  const int rows = int(state.range(0)), cols = 256;
  const auto x = randn(std::size_t(rows) * cols, 5);
  std::vector<float> g(cols, 1.0f), b(cols, 0.0f), y(x.size()), mu(std::size_t(rows), 0.0f),
      rs(std::size_t(rows), 0.0f);
  for (auto _ : state) {
    kn::omp::layernorm_rows(x.data(), g.data(), b.data(), y.data(), mu.data(),
                            rs.data(), rows, cols, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}

void bench_adamw_serial(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  auto p = randn(n, 7);
  const auto g = randn(n, 8);
  std::vector<float> m(n, 0.0f), v(n, 0.0f);
  long step = 0;
  for (auto _ : state) {
    kn::serial::adamw_update(p.data(), g.data(), m.data(), v.data(), n, 1e-4f, 0.9f,
                             0.999f, 1e-8f, 0.0f, ++step);
    benchmark::DoNotOptimize(p.data());
  }
}

void bench_adamw_omp(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  auto p = randn(n, 7);
  const auto g = randn(n, 8);
  std::vector<float> m(n, 0.0f), v(n, 0.0f);
  long step = 0;
  for (auto _ : state) {
    kn::omp::adamw_update(p.data(), g.data(), m.data(), v.data(), n, 1e-4f, 0.9f,
                          0.999f, 1e-8f, 0.0f, ++step);
    benchmark::DoNotOptimize(p.data());
  }
}

}  // namespace

BENCHMARK(bench_matmul_nt_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_matmul_nt_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_softmax_serial)->Arg(256)->Arg(2048);
BENCHMARK(bench_softmax_omp)->Arg(256)->Arg(2048);
BENCHMARK(bench_layernorm_serial)->Arg(256)->Arg(2048);
BENCHMARK(bench_layernorm_omp)->Arg(256)->Arg(2048);
BENCHMARK(bench_adamw_serial)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(bench_adamw_omp)->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
