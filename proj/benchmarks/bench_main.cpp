#include <benchmark/benchmark.h>

#include "hialign/encoder.hpp"
#include "hialign/kmeans.hpp"
#include "hialign/losses.hpp"
#include "hialign/protocols.hpp"

using namespace hialign;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.normal();
  return m;
}

HicaBatch random_batch(std::size_t b, std::size_t k, std::size_t d, Rng& rng) {
  HicaBatch batch{random_matrix(b, d, rng), random_matrix(b, d, rng), random_matrix(b * k, d, rng),
                  random_matrix(b * k, d, rng), {}, k};
  for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(i % 4);
  return batch;
}

void BM_GlobalLoss(benchmark::State& state) {
  Rng rng(1);
  const auto b = std::size_t(state.range(0));
  const Matrix img = random_matrix(b, 8, rng), text = random_matrix(b, 8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(global_loss(img, text, LossConfig{}));
}
BENCHMARK(BM_GlobalLoss)->Arg(4)->Arg(16)->Arg(64);

void BM_HicaLoss(benchmark::State& state) {
  Rng rng(2);
  const HicaBatch batch = random_batch(std::size_t(state.range(0)), 3, 8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(hica_loss(batch, LossConfig{}));
}
BENCHMARK(BM_HicaLoss)->Arg(4)->Arg(16)->Arg(64);

void BM_EncoderForward(benchmark::State& state) {
  Rng rng(3);
  const auto kind = state.range(0) == 0 ? EncoderKind::linear : EncoderKind::mlp1;
  const Encoder enc = init_encoder(kind, 16, 16, 8, rng);
  const Matrix x = random_matrix(64, 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(enc, x));
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(1);

void BM_KMeans(benchmark::State& state) {
  Rng rng(4);
  const Matrix pts = random_matrix(std::size_t(state.range(0)), 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, {.k = 4}, Rng(5)));
}
BENCHMARK(BM_KMeans)->Arg(80)->Arg(400);

void BM_DefaultExperiment(benchmark::State& state) {
  const ExperimentConfig cfg = default_config(7);
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(cfg));
}
BENCHMARK(BM_DefaultExperiment)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
