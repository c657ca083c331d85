#include <benchmark/benchmark.h>

#include <string>

#include "docs2synth/retriever.hpp"

using namespace docs2synth;

namespace {

ParsedDocument synthetic_doc(int n) {
  ParsedDocument doc;
  doc.doc_id = "bench";
  doc.width = 1000;
  doc.height = 1000;
  for (int i = 0; i < n; ++i) {
    Entity e;
    e.content = "field " + std::to_string(i) + " value " + std::to_string(i * 37 % 1000);
    e.bbox = {10, 10.0 + i * 5, 400, 14.0 + i * 5};
    doc.entities.push_back(e);
  }
  return doc;
}

void BM_EmbedText(benchmark::State& state) {
  std::string s = "Total amount due for the period ending 2024-03-31";
  for (auto _ : state) benchmark::DoNotOptimize(retriever::embed_text(s, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_EmbedText)->Arg(256)->Arg(1024);

void BM_Predict(benchmark::State& state) {
  auto doc = synthetic_doc(static_cast<int>(state.range(0)));
  auto model = retriever::ScoringModel::linear();
  for (auto _ : state) benchmark::DoNotOptimize(retriever::predict(model, "What is the total?", "1,500", doc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Predict)->Arg(16)->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
  DocumentCollection docs;
  std::vector<retriever::TrainingSample> samples;
  for (int d = 0; d < 20; ++d) {
    auto doc = synthetic_doc(20);
    doc.doc_id = "d" + std::to_string(d);
    for (int i = 0; i < 20; i += 4) {
      samples.push_back({doc.doc_id + std::to_string(i), "Which value is in field " + std::to_string(i) + "?",
                         doc.entities[static_cast<std::size_t>(i)].content, doc.doc_id, i});
    }
    docs.documents.push_back(std::move(doc));
  }
  retriever::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.workers = 1;
  for (auto _ : state) benchmark::DoNotOptimize(retriever::train(samples, docs, cfg));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
