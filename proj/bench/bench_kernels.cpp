// Serial reference vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "hqnn/trainer.hpp"

using namespace hqnn;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_GenerateDataset(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(bf::generate_dataset(2000, bf::SystemParams{}, 1, 0, exec_of(st)));
}
BENCHMARK(BM_GenerateDataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Wmmse(benchmark::State& st) {
  const auto d = bf::generate_dataset(200, bf::SystemParams{}, 1);
  const double P = bf::SystemParams{}.power_w();
  for (auto _ : st) benchmark::DoNotOptimize(bf::wmmse_rates(d, P, {}, exec_of(st)));
}
BENCHMARK(BM_Wmmse)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ModelStep(benchmark::State& st, models::ModelKind kind) {
  const auto batch = bf::generate_dataset(100, bf::SystemParams{}, 2);
  models::Model m(models::ModelConfig::defaults(kind, 4, 4), 3);
  const double P = bf::SystemParams{}.power_w();
  for (auto _ : st) {
    const auto f = m.forward(batch, nn::Mode::train, exec_of(st));
    std::vector<std::vector<double>> raw;
    for (std::size_t i = 0; i < batch.size(); ++i) raw.push_back(f.raw(i));
    m.zero_grad();
    m.backward(f, trainer::batch_loss(batch, raw, P, true).grad_raw, exec_of(st));
  }
}
BENCHMARK_CAPTURE(BM_ModelStep, classical, models::ModelKind::classical_cnn)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ModelStep, qnn, models::ModelKind::hybrid_qnn)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ModelStep, qcnn, models::ModelKind::hybrid_qcnn)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_NoisyEvaluation(benchmark::State& st) {
  const auto test = bf::generate_dataset(100, bf::SystemParams{}, 4);
  models::Model m(models::ModelConfig::defaults(models::ModelKind::hybrid_qnn, 4, 4), 5);
  for (auto _ : st)
    benchmark::DoNotOptimize(trainer::qnn_output_mse(m, test, {qsim::NoiseKind::depolarizing, 0.1}, 0, 0, exec_of(st)));
}
BENCHMARK(BM_NoisyEvaluation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
