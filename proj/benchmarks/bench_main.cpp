#include <benchmark/benchmark.h>
#include "gradguess/mlp.hpp"
#include "gradguess/guess.hpp"
#include "gradguess/linalg.hpp"

namespace {

gg::MlpConfig bench_model() {
  gg::MlpConfig m;
  m.input_dim = 128;
  m.output_dim = 10;
  m.depth = 3;
  m.width = 128;
  return m;
}

struct Fixture {
  gg::MlpParams<float> params;
  gg::Mat<float> batch;
  std::vector<int> labels;
  Fixture() {
    gg::RngStream rng(1);
    params = gg::init_params<float>(bench_model(), rng);
    batch = gg::randn_mat<float>(rng, 64, 128);
    for (int i = 0; i < 64; ++i) labels.push_back(i % 10);
  }
};

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  gg::RngStream rng(2);
  const auto a = gg::randn_mat<float>(rng, n, n);
  const auto b = gg::randn_mat<float>(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(gg::matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Forward(benchmark::State& state) {
  Fixture f;
  for (auto _ : state) benchmark::DoNotOptimize(gg::forward(f.params, f.batch, f.labels));
}
BENCHMARK(BM_Forward);

void BM_Backprop(benchmark::State& state) {
  Fixture f;
  const auto trace = gg::forward(f.params, f.batch, f.labels);
  for (auto _ : state) benchmark::DoNotOptimize(gg::backprop(f.params, trace));
}
BENCHMARK(BM_Backprop);

void BM_JvpWeight(benchmark::State& state) {
  Fixture f;
  const auto trace = gg::forward(f.params, f.batch, f.labels);
  gg::RngStream rng(3);
  const auto guess = gg::gen_directional(f.params, rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(gg::jvp_weight(f.params, trace, *guess.weight_dir));
}
BENCHMARK(BM_JvpWeight);

void BM_EstimateMixing(benchmark::State& state) {
  Fixture f;
  const auto trace = gg::forward(f.params, f.batch, f.labels);
  gg::RngStream rng(4);
  const gg::GuessMethod method(gg::GuessKind::ActivationMixing);
  for (auto _ : state)
    benchmark::DoNotOptimize(gg::estimate_gradient(method, f.params, trace, rng, 1));
}
BENCHMARK(BM_EstimateMixing);

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  gg::RngStream rng(5);
  const auto a = gg::randn_mat<float>(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(gg::svd(a));
}
BENCHMARK(BM_Svd)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
