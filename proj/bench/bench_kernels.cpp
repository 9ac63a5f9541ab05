// Serial reference vs OpenMP kernels on a range of batch sizes.
//   ./scm_bench --benchmark_filter=Logits

#include "scm/kernels.hpp"
#include "scm/miner.hpp"
#include "scm/model.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace scm;

namespace {

constexpr std::size_t kDim = 128;
constexpr std::size_t kOut = 40;

std::vector<LabeledInstance> make_rows(std::size_t n, std::size_t d, std::size_t classes) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g;
  std::vector<LabeledInstance> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].features.resize(d);
    for (auto &v : rows[i].features)
      v = g(rng);
    rows[i].class_id = static_cast<ClassId>(i % classes);
  }
  return rows;
}

LinearHead make_head(std::size_t n_out, std::size_t d) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.1);
  LinearHead h(n_out, d);
  for (auto &w : h.weights)
    w = g(rng);
  return h;
}

template <auto Kernel> void BM_Logits(benchmark::State &state) {
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), kDim, kOut);
  const auto x = kernels::pack(rows, kDim);
  const auto head = make_head(kOut, kDim);
  std::vector<double> out(x.rows * kOut);
  for (auto _ : state) {
    Kernel(head, x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel> void BM_Gradient(benchmark::State &state) {
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), kDim, kOut);
  const auto x = kernels::pack(rows, kDim);
  std::vector<double> dz(x.rows * kOut, 0.01);
  HeadGradient grad(LinearHead(kOut, kDim));
  for (auto _ : state) {
    Kernel(dz, x, grad, 1.0);
    benchmark::DoNotOptimize(grad.weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

SuperclassModel make_bench_model() {
  constexpr std::size_t n_base = 20, n_novel = 20, gamma = 3;
  std::vector<Superclass> sc(n_base);
  for (std::size_t i = 0; i < n_base; ++i)
    sc[i] = {static_cast<ClassId>(i), {static_cast<ClassId>(i)}};
  for (std::size_t n = 0; n < n_novel; ++n)
    for (std::size_t k = 0; k < gamma; ++k)
      sc[(n + 7 * k) % n_base].members.push_back(static_cast<ClassId>(n_base + n));
  ModelOptions o;
  return make_model(Hierarchy(gamma, sc), kDim, o, 3);
}

template <auto Predict> void BM_Predict(benchmark::State &state) {
  const auto model = make_bench_model();
  const auto rows = make_rows(static_cast<std::size_t>(state.range(0)), kDim, 40);
  for (auto _ : state) {
    auto p = Predict(model, rows);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_Logits<kernels::serial::batch_logits>)->Name("Logits/serial")->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_Logits<kernels::omp::batch_logits>)->Name("Logits/omp")->RangeMultiplier(8)->Range(64, 32768)->UseRealTime();
BENCHMARK(BM_Gradient<kernels::serial::accumulate_gradient>)->Name("Gradient/serial")->RangeMultiplier(8)->Range(64, 32768);
BENCHMARK(BM_Gradient<kernels::omp::accumulate_gradient>)->Name("Gradient/omp")->RangeMultiplier(8)->Range(64, 32768)->UseRealTime();
BENCHMARK(BM_Predict<serial::predict_all>)->Name("Predict/serial")->RangeMultiplier(8)->Range(64, 4096);
BENCHMARK(BM_Predict<omp::predict_all>)->Name("Predict/omp")->RangeMultiplier(8)->Range(64, 4096)->UseRealTime();

BENCHMARK_MAIN();
