#include <random>

#include <benchmark/benchmark.h>

#include "euclidnet/kernels.hpp"
#include "euclidnet/quant.hpp"

using namespace euclidnet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

SimilarityKind kind_of(int64_t i) {
  switch (i) {
    case 0: return SimilarityKind::conv();
    case 1: return SimilarityKind::euclid();
    case 2: return SimilarityKind::adder();
    default: return SimilarityKind::homotopy(0.5f);
  }
}

// Second conv layer of the default model on a 64-image batch.
const Shape kInput{64, 8, 14, 14};
const Shape kWeight{16, 8, 3, 3};
const ConvParams kParams{1, 1};

template <bool Reference>
void BM_Forward(benchmark::State& state) {
  const auto x = random_tensor(kInput, 1), w = random_tensor(kWeight, 2);
  const auto kind = kind_of(state.range(0));
  for (auto _ : state) {
    auto y = Reference ? reference::sim_conv_forward(x, w, kParams, kind) : sim_conv_forward(x, w, kParams, kind);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetLabel(to_string(kind));
}

template <bool Reference>
void BM_Backward(benchmark::State& state) {
  const auto x = random_tensor(kInput, 1), w = random_tensor(kWeight, 2);
  const auto kind = kind_of(state.range(0));
  const auto g0 = conv_geometry(kInput, kWeight, kParams);
  const auto dy = random_tensor({g0.batch, g0.out_channels, g0.out_h, g0.out_w}, 3);
  for (auto _ : state) {
    auto g = Reference ? reference::sim_conv_backward(x, w, kParams, kind, dy)
                       : sim_conv_backward(x, w, kParams, kind, dy);
    benchmark::DoNotOptimize(g.dw.data().data());
  }
  state.SetLabel(to_string(kind));
}

void BM_QEuclid(benchmark::State& state) {
  const auto x = random_tensor(kInput, 1), w = random_tensor(kWeight, 2);
  const auto p = calibrate_max_abs(1.0f, 8);
  const auto qx = quantize(x, p), qw = quantize(w, p);
  const SquareLut lut(8);
  for (auto _ : state) {
    auto y = qeuclid_conv2d(qx, qw, lut, kParams);
    benchmark::DoNotOptimize(y.data().data());
  }
}

}  // namespace

BENCHMARK(BM_Forward<true>)->Name("forward/reference")->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Forward<false>)->Name("forward/omp")->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Backward<true>)->Name("backward/reference")->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Backward<false>)->Name("backward/omp")->DenseRange(0, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QEuclid)->Name("qeuclid/int8")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
