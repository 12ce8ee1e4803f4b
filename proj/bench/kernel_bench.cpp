// Serial reference vs parallel kernels: raw GEMM at the shapes the denoiser
// uses, and a full default-size denoiser forward pass under each backend.

#include <vector>

#include <benchmark/benchmark.h>

#include "exface/denoiser.hpp"
#include "exface/kernels.hpp"
#include "exface/rng.hpp"

namespace {

using exface::kernels::Backend;
using exface::kernels::Op;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  exface::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// args: rows (frames), inner, cols
template <Backend B>
void BM_Gemm(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  const auto a = random_vec(static_cast<std::size_t>(m) * k, 1);
  const auto b = random_vec(static_cast<std::size_t>(k) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(m) * n);
  exface::kernels::ScopedBackend backend(B);
  for (auto _ : state) {
    exface::kernels::gemm<float>(Op::kNone, Op::kNone, 1.0f, exface::kernels::cmat(a.data(), m, k),
                                 exface::kernels::cmat(b.data(), k, n), 0.0f, exface::kernels::mat(c.data(), m, n));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * m * k * n);
}

template <Backend B>
void BM_DenoiserForward(benchmark::State& state) {
  exface::ModelConfig cfg;  // default size: d_model 128, 4 layers, window 120
  exface::Rng rng(7);
  const auto params = exface::init_params<float>(cfg, rng);
  const auto noisy = random_vec(static_cast<std::size_t>(cfg.window) * cfg.dof, 3);
  auto cond = random_vec(static_cast<std::size_t>(cfg.window) * cfg.blendshape_dim, 4);
  for (float& x : cond) x = 0.5f * (x + 1.0f);
  std::vector<float> out(static_cast<std::size_t>(cfg.window) * cfg.dof);
  exface::kernels::ScopedBackend backend(B);
  for (auto _ : state) {
    exface::forward<float>(cfg, params, noisy.data(), cond.data(), cfg.window, 16, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({120, 128, 128});   // attention projections
  b->Args({120, 128, 256});   // feed-forward up
  b->Args({120, 256, 128});   // feed-forward down
  b->Args({120, 128, 120});   // attention scores
  b->Args({512, 512, 512});   // large square
}

}  // namespace

BENCHMARK(BM_Gemm<Backend::kReference>)->Apply(gemm_shapes);
BENCHMARK(BM_Gemm<Backend::kParallel>)->Apply(gemm_shapes);
BENCHMARK(BM_DenoiserForward<Backend::kReference>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenoiserForward<Backend::kParallel>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
