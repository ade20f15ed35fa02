#include <benchmark/benchmark.h>

#include <vector>

#include "fedpoison/defense.hpp"
#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"

namespace {

using namespace fedpoison;

std::vector<Example> make_batch(const ModelShape& shape, std::size_t n, std::size_t len, Rng& rng) {
  std::vector<Example> batch(n);
  for (Example& e : batch) {
    for (std::size_t i = 0; i < len; ++i) {
      e.tokens.push_back(static_cast<TokenId>(uniform_index(rng, shape.vocab)));
    }
    e.label = static_cast<Label>(uniform_index(rng, shape.classes));
  }
  return batch;
}

std::vector<ParamVector> make_residuals(const ModelShape& shape, std::size_t n, Rng& rng) {
  std::vector<ParamVector> out(n, ParamVector(shape));
  for (ParamVector& r : out) {
    for (double& x : r.values()) x = 2.0 * uniform01(rng) - 1.0;
  }
  return out;
}

const ModelShape kShape{500, 16, 4};

void BM_LossAndGrad(benchmark::State& state) {
  Rng rng(1);
  const ModelParams params = ModelParams::random(kShape, Pooling::kMean, rng);
  const auto batch = make_batch(kShape, static_cast<std::size_t>(state.range(0)), 20, rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(params, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(16)->Arg(128);

void BM_MeanAggregate(benchmark::State& state) {
  Rng rng(2);
  const auto rs = make_residuals(kShape, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(mean_aggregate(rs));
}
BENCHMARK(BM_MeanAggregate)->Arg(10)->Arg(50);

void BM_CoordMedian(benchmark::State& state) {
  Rng rng(3);
  const auto rs = make_residuals(kShape, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(coord_median(rs));
}
BENCHMARK(BM_CoordMedian)->Arg(10)->Arg(50);

void BM_MultiKrum(benchmark::State& state) {
  Rng rng(4);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto rs = make_residuals(kShape, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(multi_krum(rs, 1, n - 3));
}
BENCHMARK(BM_MultiKrum)->Arg(10)->Arg(50);

}  // namespace
