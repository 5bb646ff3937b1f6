#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "reform/common/rng.hpp"
#include "reform/nn/kernels.hpp"

namespace k = reform::nn::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  reform::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

struct Affine {
  std::size_t rows, in, out;
  std::vector<double> x, w, b, y, dy, dx, dw, db;

  explicit Affine(const benchmark::State& s)
      : rows(static_cast<std::size_t>(s.range(0))),
        in(static_cast<std::size_t>(s.range(1))),
        out(static_cast<std::size_t>(s.range(1))),
        x(noise(rows * in, 1)),
        w(noise(in * out, 2)),
        b(noise(out, 3)),
        y(rows * out),
        dy(noise(rows * out, 4)),
        dx(rows * in),
        dw(in * out),
        db(out) {}

  void count(benchmark::State& s) const {
    s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * rows * in * out));
  }
};

template <bool Parallel>
void BM_AffineForward(benchmark::State& s) {
  Affine a(s);
  for (auto _ : s) {
    if constexpr (Parallel) k::affine_forward(a.x, a.w, a.b, a.y, a.rows, a.in, a.out);
    else k::serial::affine_forward(a.x, a.w, a.b, a.y, a.rows, a.in, a.out);
    benchmark::DoNotOptimize(a.y.data());
  }
  a.count(s);
}

template <bool Parallel>
void BM_AffineBackwardInput(benchmark::State& s) {
  Affine a(s);
  for (auto _ : s) {
    if constexpr (Parallel) k::affine_backward_input(a.dy, a.w, a.dx, a.rows, a.in, a.out);
    else k::serial::affine_backward_input(a.dy, a.w, a.dx, a.rows, a.in, a.out);
    benchmark::DoNotOptimize(a.dx.data());
  }
  a.count(s);
}

template <bool Parallel>
void BM_AffineBackwardParams(benchmark::State& s) {
  Affine a(s);
  for (auto _ : s) {
    if constexpr (Parallel) k::affine_backward_params(a.x, a.dy, a.dw, a.db, a.rows, a.in, a.out);
    else k::serial::affine_backward_params(a.x, a.dy, a.dw, a.db, a.rows, a.in, a.out);
    benchmark::DoNotOptimize(a.dw.data());
  }
  a.count(s);
}

template <bool Parallel>
void BM_Gelu(benchmark::State& s) {
  const auto n = static_cast<std::size_t>(s.range(0) * s.range(1));
  const auto x = noise(n, 5);
  const auto dy = noise(n, 6);
  std::vector<double> y(n), dx(n);
  for (auto _ : s) {
    if constexpr (Parallel) {
      k::gelu_forward(x, y);
      k::gelu_backward(x, dy, dx);
    } else {
      k::serial::gelu_forward(x, y);
      k::serial::gelu_backward(x, dy, dx);
    }
    benchmark::DoNotOptimize(dx.data());
  }
  s.SetItemsProcessed(static_cast<std::int64_t>(s.iterations() * n));
}

// rows x width: a desk-scale minibatch and the full-scale network width.
void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 64})->Args({256, 64})->Args({256, 512});
}

}  // namespace

BENCHMARK(BM_AffineForward<false>)->Apply(shapes)->Name("affine_forward/serial");
BENCHMARK(BM_AffineForward<true>)->Apply(shapes)->Name("affine_forward/openmp");
BENCHMARK(BM_AffineBackwardInput<false>)->Apply(shapes)->Name("affine_backward_input/serial");
BENCHMARK(BM_AffineBackwardInput<true>)->Apply(shapes)->Name("affine_backward_input/openmp");
BENCHMARK(BM_AffineBackwardParams<false>)->Apply(shapes)->Name("affine_backward_params/serial");
BENCHMARK(BM_AffineBackwardParams<true>)->Apply(shapes)->Name("affine_backward_params/openmp");
BENCHMARK(BM_Gelu<false>)->Apply(shapes)->Name("gelu/serial");
BENCHMARK(BM_Gelu<true>)->Apply(shapes)->Name("gelu/openmp");

BENCHMARK_MAIN();
