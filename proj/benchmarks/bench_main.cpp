#include <benchmark/benchmark.h>

#include "ducat/attack.hpp"
#include "ducat/dataset.hpp"
#include "ducat/trainer.hpp"

namespace {

using namespace ducat;

Dataset bench_data(std::size_t per_class) {
  GaussianSpec g;
  g.per_class = per_class;
  return gen_gaussians(g, 1, Split::train);
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  auto model = double_last_layer(MlpModel::create({2, width, width, 4}, {1}), {2});
  const auto data = bench_data(32);
  const auto x = data.all_features();
  for (auto _ : state) {
    model.zero_grad();
    auto loss = ducat_loss(model, x, x, data.labels, {});
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_Pgd(benchmark::State& state) {
  auto model = MlpModel::create({2, 64, 64, 4}, {1});
  const auto data = bench_data(32);
  const auto x = data.all_features();
  const auto spec = make_pgd(8.0 / 255, 2.0 / 255, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pgd(model, x, data.labels, spec).x_adv);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_Pgd)->Arg(1)->Arg(10);

void BM_TrainingEpoch(benchmark::State& state) {
  const auto data = bench_data(100);
  TrainConfig c;
  c.method = state.range(0) ? Method::ducat : Method::pgd_at;
  c.epochs = 1;
  c.hyper.start_epoch = 0;
  c.batch_size = 32;
  for (auto _ : state) benchmark::DoNotOptimize(train(c, data).record.epochs.back().loss);
  state.SetLabel(to_string(c.method));
}
BENCHMARK(BM_TrainingEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
