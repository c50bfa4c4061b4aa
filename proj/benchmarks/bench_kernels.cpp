#include "iclab/gd_engine.hpp"
#include "iclab/linear_transformer.hpp"
#include "iclab/optimal_gd.hpp"
#include "iclab/robustness_eval.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace iclab;

data::PriorConfig prior(int d) { return data::PriorSpec{data::PriorSpec::Mean::e1, 0.1}.for_dim(d); }

std::vector<data::LabeledPrompt> prompts(int d, int n, int count) {
  Rng rng(7);
  std::vector<data::LabeledPrompt> out;
  for (int i = 0; i < count; ++i) out.push_back(data::sample_train_prompt(data::sample_task(prior(d), rng), n, rng));
  return out;
}

void BM_Forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), L = static_cast<int>(state.range(1));
  const auto params = tf::TransformerParams::random_init(20, L, 1);
  const auto p = prompts(20, n, 1).front();
  for (auto _ : state) benchmark::DoNotOptimize(tf::predict(params, p.prompt.matrix()));
}
BENCHMARK(BM_Forward)->Args({40, 2})->Args({40, 8})->Args({200, 2});

void BM_LossAndGrads(benchmark::State& state) {
  const auto params = tf::TransformerParams::random_init(20, static_cast<int>(state.range(1)), 1);
  const auto batch = prompts(20, 40, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tf::loss_and_grads(params, batch).loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrads)->Args({32, 2})->Args({256, 2});

void BM_GdRun(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const auto p = prompts(20, 40, 1).front();
  const auto ctx = gd::GdContext::from_prompt(p.prompt);
  const auto cfg = gd::GdConfig::constant(Vec::Zero(20), 0.004, L);
  for (auto _ : state) benchmark::DoNotOptimize(gd::gd_run(cfg, ctx, p.prompt.query()).margins.back());
}
BENCHMARK(BM_GdRun)->Arg(1)->Arg(8);

void BM_RiskEstimate(benchmark::State& state) {
  const auto pr = prior(20);
  for (auto _ : state) benchmark::DoNotOptimize(opt::estimate_risk(0.004, 0.7, 50, 4, pr, 1000, 3).mean);
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_RiskEstimate);

void BM_GridSearch(benchmark::State& state) {
  opt::GridSpec g;
  g.d = 20;
  g.n = 50;
  g.L = static_cast<int>(state.range(0));
  g.trials = 1000;
  g.prior = prior(20);
  for (auto _ : state) benchmark::DoNotOptimize(opt::grid_search_depths(g).back().alpha_opt);
}
BENCHMARK(BM_GridSearch)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_HijackCurve(benchmark::State& state) {
  const robust::CurveCell cell{20, 40, 2, 0.004, 0.7, prior(20), data::SigmaDist::fixed(0.1)};
  std::vector<int> Ns;
  for (int N = 0; N <= 200; N += 10) Ns.push_back(N);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        robust::robustness_curve(cell, Ns, 1000, 5, robust::CurveSource::gd_explicit).points.back().accuracy);
}
BENCHMARK(BM_HijackCurve)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
