#include <benchmark/benchmark.h>

#include <random>

#include "docs2synth/ingest.hpp"

using namespace docs2synth;

namespace {

// A page of n text lines laid out in two columns.
std::vector<BoundingBox> two_column_page(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0, 4);
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < n; ++i) {
    double x = i % 2 == 0 ? 50 : 560;
    double y = 40 + (i / 2) * 22 + jitter(rng);
    boxes.push_back({x + jitter(rng), y, x + 400 + jitter(rng), y + 14});
  }
  std::shuffle(boxes.begin(), boxes.end(), rng);
  return boxes;
}

void BM_XyCut(benchmark::State& state) {
  auto boxes = two_column_page(static_cast<int>(state.range(0)), 11);
  for (auto _ : state) benchmark::DoNotOptimize(ingest::xy_cut_order(boxes));
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_XyCut)->RangeMultiplier(4)->Range(16, 4096)->Complexity();
