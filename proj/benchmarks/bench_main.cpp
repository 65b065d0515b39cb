#include <benchmark/benchmark.h>

#include <random>

#include "qkd/cascade.hpp"
#include "qkd/event_sim.hpp"
#include "qkd/privacy_amp.hpp"
#include "qkd/wire.hpp"

namespace {

qkd::Bits random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  qkd::Bits b(n);
  for (auto& x : b) x = rng() & 1U;
  return b;
}

void BM_ToeplitzHash(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t m = n / 2;
  const auto key = random_bits(n, 1);
  const auto seed = qkd::ToeplitzSeed::random(n, m, 2);
  for (auto _ : state) benchmark::DoNotOptimize(qkd::toeplitz_hash(key, seed, m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ToeplitzHash)->Arg(1 << 12)->Arg(1 << 15)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

void BM_Cascade(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const double e = static_cast<double>(state.range(1)) / 1000.0;
  const auto alice = random_bits(n, 3);
  std::mt19937_64 rng(4);
  std::bernoulli_distribution flip(e);
  auto bob = alice;
  for (auto& x : bob) x ^= static_cast<std::uint8_t>(flip(rng));
  for (auto _ : state) {
    qkd::LocalParityChannel channel(alice, 5);
    benchmark::DoNotOptimize(qkd::run_cascade(bob, e, {}, channel));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Cascade)->Args({10000, 33})->Args({10000, 89})->Args({100000, 33})->Unit(benchmark::kMillisecond);

void BM_DetectExact(benchmark::State& state) {
  qkd::LinkParams p;
  p.length_km = 25.0;
  const auto cycles = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qkd::detect(p, cycles, qkd::SimMode::exact, {}, {}, 7));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cycles));
}
BENCHMARK(BM_DetectExact)->Arg(1'000'000)->Unit(benchmark::kMillisecond);

void BM_DetectAggregate(benchmark::State& state) {
  qkd::LinkParams p;
  p.length_km = 25.0;
  const auto cycles = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(qkd::detect(p, cycles, qkd::SimMode::aggregate, {}, {}, 7));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cycles));
}
BENCHMARK(BM_DetectAggregate)->Arg(240'000'000)->Unit(benchmark::kMillisecond);

void BM_WireRoundTrip(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::uint64_t> cycles(n);
  for (std::size_t i = 0; i < n; ++i) cycles[i] = 3 * i + (i % 2);
  const qkd::wire::Message msg = qkd::wire::Detections{cycles, random_bits(n, 8)};
  for (auto _ : state) {
    const auto bytes = qkd::wire::encode_frame(msg);
    benchmark::DoNotOptimize(qkd::wire::decode_frame(bytes));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_WireRoundTrip)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
