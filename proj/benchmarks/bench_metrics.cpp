#include <benchmark/benchmark.h>

#include <string>

#include "docs2synth/evalharness.hpp"

using namespace docs2synth;

namespace {

void BM_Levenshtein(benchmark::State& state) {
  std::string a(static_cast<std::size_t>(state.range(0)), 'a');
  std::string b = a;
  for (std::size_t i = 0; i < b.size(); i += 3) b[i] = 'b';
  for (auto _ : state) benchmark::DoNotOptimize(eval::levenshtein(a, b));
}
BENCHMARK(BM_Levenshtein)->Arg(16)->Arg(256);

void BM_Anls(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(eval::anls_score("Ordinary Shares", "ordinary share"));
}
BENCHMARK(BM_Anls);

}  // namespace

BENCHMARK_MAIN();
