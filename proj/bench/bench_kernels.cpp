#include "vbl/data.hpp"
#include "vbl/dist.hpp"
#include "vbl/dwp.hpp"
#include "vbl/parallel.hpp"

#include <benchmark/benchmark.h>

using namespace vbl;

namespace {

// Args: rows of x (= rows of y), feature dimension.
void BM_SqDistSerial(benchmark::State& state) {
  RngStream rng(1);
  const par::Mat x = rng.normal(state.range(0), state.range(1)), y = rng.normal(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(par::sq_dist_serial(x, y));
}

void BM_SqDistParallel(benchmark::State& state) {
  RngStream rng(1);
  const par::Mat x = rng.normal(state.range(0), state.range(1)), y = rng.normal(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(par::sq_dist_parallel(x, y));
}

void BM_SqDistGradSerial(benchmark::State& state) {
  RngStream rng(2);
  const Index n = state.range(0), d = state.range(1);
  const par::Mat x = rng.normal(n, d), y = rng.normal(n, d), g = rng.normal(n, n);
  par::Mat gx, gy;
  for (auto _ : state) {
    par::sq_dist_grad_serial(x, y, g, &gx, &gy);
    benchmark::DoNotOptimize(gx.data());
  }
}

void BM_SqDistGradParallel(benchmark::State& state) {
  RngStream rng(2);
  const Index n = state.range(0), d = state.range(1);
  const par::Mat x = rng.normal(n, d), y = rng.normal(n, d), g = rng.normal(n, n);
  par::Mat gx, gy;
  for (auto _ : state) {
    par::sq_dist_grad_parallel(x, y, g, &gx, &gy);
    benchmark::DoNotOptimize(gx.data());
  }
}

// Arg: number of 5 x 5 Wishart draws.
par::DrawFn wishart_draw() {
  RngStream rng(3);
  const Mat a = rng.normal(5, 5);
  const Mat l = Eigen::LLT<Mat>(a * a.transpose() / 5.0 + Mat::Identity(5, 5)).matrixL();
  return [l](RngStream& s) { return wishart_sample_bartlett(l, 7, s); };
}

void BM_WishartMomentsSerial(benchmark::State& state) {
  const par::DrawFn draw = wishart_draw();
  for (auto _ : state) benchmark::DoNotOptimize(par::mc_moments_serial(draw, RngStream(4), state.range(0)).mean);
}

void BM_WishartMomentsParallel(benchmark::State& state) {
  const par::DrawFn draw = wishart_draw();
  for (auto _ : state) benchmark::DoNotOptimize(par::mc_moments_parallel(draw, RngStream(4), state.range(0)).mean);
}

// One full-batch DWP ELBO evaluation and reverse pass on the synthetic set.
// Args: inducing points, Gram layers.
void BM_DwpElboStep(benchmark::State& state) {
  const Dataset d = gen_synthetic_regression(0);
  RngStream rng(5);
  DwpConfig cfg;
  cfg.input_dim = static_cast<int>(d.input_dim());
  cfg.inducing = static_cast<int>(state.range(0));
  cfg.gram_layers = static_cast<int>(state.range(1));
  DwpModel model(cfg, d.x_train, d.y_train, rng);
  for (auto _ : state) {
    Tape tape;
    ParamView p(model.params(), &tape);
    ElboEstimate e = model.elbo(p, d.x_train, d.y_train, static_cast<double>(d.n_train()), 10, rng);
    tape.backward(e.loglik + e.increment + e.surrogate);
    benchmark::DoNotOptimize(p.stored_grads());
  }
}

}  // namespace

BENCHMARK(BM_SqDistSerial)->Args({100, 3})->Args({500, 3})->Args({1000, 10});
BENCHMARK(BM_SqDistParallel)->Args({100, 3})->Args({500, 3})->Args({1000, 10});
BENCHMARK(BM_SqDistGradSerial)->Args({100, 3})->Args({500, 3})->Args({1000, 10});
BENCHMARK(BM_SqDistGradParallel)->Args({100, 3})->Args({500, 3})->Args({1000, 10});
BENCHMARK(BM_WishartMomentsSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WishartMomentsParallel)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DwpElboStep)->Args({25, 1})->Args({50, 2})->Args({100, 2})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
