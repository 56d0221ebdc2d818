#include <benchmark/benchmark.h>

#include "lipcmp/lipcmp.hpp"

namespace {

using namespace lipcmp;

FeatureBatch input(std::size_t b, std::size_t c, std::size_t s) {
  return FeatureBatch({b, c, s, s}, Rng(1).normal_vector(b * c * s * s));
}

KernelTensor kernel(std::size_t c, std::size_t k) { return KernelTensor({c, c, k, k}, Rng(2).normal_vector(c * c * k * k)); }

// Args: channels, kernel size, spatial size.
void BM_DirectConv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const FeatureBatch x = input(4, c, s);
  const KernelTensor w = kernel(c, k);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w));
}
BENCHMARK(BM_DirectConv)->Args({4, 3, 16})->Args({16, 3, 16})->Args({16, 7, 16})->Args({32, 3, 32});

void BM_FftConv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             s = static_cast<std::size_t>(state.range(2));
  const FeatureBatch x = input(4, c, s);
  const KernelTensor w = kernel(c, k);
  for (auto _ : state) benchmark::DoNotOptimize(fft_conv2d(x, w));
}
BENCHMARK(BM_FftConv)->Args({4, 3, 16})->Args({16, 3, 16})->Args({16, 7, 16})->Args({32, 3, 32});

// Arg: LayerKind index; one training-phase materialization plus forward.
void BM_LayerTrainStep(benchmark::State& state) {
  const auto kind = static_cast<LayerKind>(state.range(0));
  const LayerSpec spec = LayerSpec::make(kind, 16, 16, 3);
  const std::vector<double> raw = init_params(spec, 3);
  BuildOptions o;
  o.height = o.width = 16;
  o.phase = Phase::Train;
  const FeatureBatch x = input(8, 16, 16);
  for (auto _ : state) benchmark::DoNotOptimize(build(spec, raw, o)->forward(x));
  state.SetLabel(to_string(kind));
}

// Forward only, with the weight transform cached.
void BM_LayerInference(benchmark::State& state) {
  const auto kind = static_cast<LayerKind>(state.range(0));
  const LayerSpec spec = LayerSpec::make(kind, 16, 16, 3);
  BuildOptions o;
  o.height = o.width = 16;
  o.phase = Phase::Train;
  const MaterializedLayer layer = build(spec, init_params(spec, 3), o);
  const FeatureBatch x = input(8, 16, 16);
  for (auto _ : state) benchmark::DoNotOptimize(layer->forward(x));
  state.SetLabel(to_string(kind));
}

void kind_args(benchmark::internal::Benchmark* b) {
  b->Arg(static_cast<int>(LayerKind::Standard));
  for (LayerKind k : lipschitz_kinds()) b->Arg(static_cast<int>(k));
}
BENCHMARK(BM_LayerTrainStep)->Apply(kind_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LayerInference)->Apply(kind_args)->Unit(benchmark::kMillisecond);

// Arg: iterations.
void BM_PowerMethodConv(benchmark::State& state) {
  const KernelTensor w = kernel(16, 3);
  const auto t = static_cast<std::size_t>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(power_method_conv(w, {16, 16, 16}, PaddingMode::Circular, PowerState::seeded(4), t));
}
BENCHMARK(BM_PowerMethodConv)->Arg(1)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_NetworkForward(benchmark::State& state) {
  NetworkSpec spec;
  spec.width = 8;
  spec.kind = static_cast<LayerKind>(state.range(0));
  const Network net = build_network(spec, 5, Phase::Train);
  const FeatureBatch x = input(4, 3, 32);
  for (auto _ : state) benchmark::DoNotOptimize(network_forward(net, x));
  state.SetLabel(to_string(spec.kind));
}
BENCHMARK(BM_NetworkForward)->Arg(static_cast<int>(LayerKind::AOL))->Arg(static_cast<int>(LayerKind::Cayley))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
