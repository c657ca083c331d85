#include <gtest/gtest.h>

#include <filesystem>

#include "docs2synth/config.hpp"
#include "docs2synth/errors.hpp"
#include "docs2synth/pipeline.hpp"
#include "docs2synth/text.hpp"
#include "test_support.hpp"

using namespace docs2synth;
using namespace docs2synth::pipeline;
namespace fs = std::filesystem;

namespace {

config::PipelineConfig toy_config(const std::string& root) {
  auto c = config::load_config(testkit::toy_config_path());
  c.storage_root = root;
  return c;
}

int count_status(const RunManifest& m, StageStatus s) {
  int n = 0;
  for (const auto& r : m.stages) n += r.status == s;
  return n;
}

}  // namespace

TEST(Pipeline, ToyRunCompletesThenMemoizes) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  {
    Pipeline p(cfg);
    auto out = p.run_all();
    EXPECT_FALSE(out.awaiting_review);
    EXPECT_EQ(count_status(out.manifest, StageStatus::Done), 6);
    for (const auto& r : out.manifest.stages) EXPECT_FALSE(r.skipped) << to_string(r.stage);
  }
  for (const char* f : {"documents.jsonl", "qa.jsonl", "traces.jsonl", "traces_rag-baseline.jsonl", "eval.json",
                        "comparison.md", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(dir.path()) / f)) << f;
  }
  auto eval = nlohmann::json::parse(text::read_file(dir.file("eval.json")));
  EXPECT_TRUE(eval.contains("strategies"));

  Pipeline again(cfg);
  auto out = again.run_all();
  for (const auto& r : out.manifest.stages) EXPECT_TRUE(r.skipped) << to_string(r.stage);
  EXPECT_EQ(again.run_stage(Stage::Eval), StageResult::Skipped);
  EXPECT_EQ(again.run_stage(Stage::Eval, true), StageResult::Ran);
}

TEST(Pipeline, RunsAreByteIdenticalApartFromManifest) {
  testkit::TempDir a, b;
  Pipeline(toy_config(a.path())).run_all();
  Pipeline(toy_config(b.path())).run_all();
  auto sa = testkit::snapshot_tree(a.path(), {"manifest.json"});
  auto sb = testkit::snapshot_tree(b.path(), {"manifest.json"});
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].first, sb[i].first);
    EXPECT_TRUE(sa[i].second == sb[i].second) << sa[i].first;
  }
}

TEST(Pipeline, ConfigChangeInvalidatesDownstreamOnly) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  Pipeline(cfg).run_all();
  cfg.inference.loop.max_iterations = 1;
  auto out = Pipeline(cfg).run_all();
  EXPECT_TRUE(out.manifest.at(Stage::Train).skipped);
  EXPECT_FALSE(out.manifest.at(Stage::Infer).skipped);
  EXPECT_FALSE(out.manifest.at(Stage::Eval).skipped);
}

TEST(Pipeline, StopsAtReviewWhenPairsPending) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  cfg.review.auto_approve = false;
  auto out = Pipeline(cfg).run_all();
  EXPECT_TRUE(out.awaiting_review);
  EXPECT_EQ(out.manifest.at(Stage::Synth).status, StageStatus::Done);
  EXPECT_EQ(out.manifest.at(Stage::Review).status, StageStatus::Pending);
  EXPECT_EQ(out.manifest.at(Stage::Train).status, StageStatus::Pending);
  EXPECT_FALSE(fs::exists(dir.file("eval.json")));
}

TEST(Pipeline, UnreachableProviderFailsSynth) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  auto& gen = cfg.providers.at("generator");
  gen.kind = agents::ProviderKind::OpenAiCompatible;
  gen.base_url = "http://127.0.0.1:1/v1";
  gen.fixture_path.clear();
  gen.max_retries = 0;
  gen.timeout_s = 2;
  Pipeline p(cfg);
  EXPECT_THROW(p.run_all(), StageFailed);
  auto m = p.manifest();
  EXPECT_EQ(m.at(Stage::Ingest).status, StageStatus::Done);
  EXPECT_EQ(m.at(Stage::Synth).status, StageStatus::Failed);
  EXPECT_NE(m.at(Stage::Synth).detail.find("ProviderUnreachable"), std::string::npos) << m.at(Stage::Synth).detail;
}

TEST(Pipeline, RunLockExcludesSecondRun) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  Pipeline p(cfg);
  fs::create_directories(dir.path());
  store::FileLock held(p.layout().run_lock());
  EXPECT_THROW(p.run_all(), LockHeld);
}

TEST(Pipeline, AdHocQuestion) {
  testkit::TempDir dir;
  auto cfg = toy_config(dir.path());
  Pipeline p(cfg);
  p.run_all();
  auto t = p.infer_one("What is the total amount?", "receipt_01", cfg.inference.loop);
  EXPECT_EQ(t.doc_id, "receipt_01");
  EXPECT_FALSE(t.iterations.empty());
  EXPECT_THROW(p.infer_one("q", "no_such_doc", cfg.inference.loop), Error);
}

TEST(Pipeline, TrainingSamplesUseApprovedPairsOnly) {
  synthgen::QAPair a, b;
  a.qa_id = "a";
  a.review_status = synthgen::ReviewStatus::Approved;
  a.gold_entity_index = 2;
  b.qa_id = "b";
  b.review_status = synthgen::ReviewStatus::Rejected;
  auto s = training_samples({a, b}, {{"a", "init"}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].initial_answer, "init");
  EXPECT_EQ(s[0].gold_index, 2);
}

#ifdef DOCS2SYNTH_CLI
TEST(Cli, RunAndExitCodes) {
  testkit::TempDir dir;
  std::string cli = DOCS2SYNTH_CLI;
  auto quiet = " >/dev/null 2>&1";
  EXPECT_EQ(testkit::run_command(cli + " run --config " + testkit::toy_config_path() + " --storage-root " +
                                 dir.path() + quiet),
            0);
  EXPECT_TRUE(fs::exists(dir.file("eval.json")));
  testkit::write_file(dir.file("bad.yml"), "collection:\n  input_dir: p\n  bogus: 1\nproviders:\n  a: {kind: mock, fixture: f}\n");
  EXPECT_EQ(testkit::run_command(cli + " run --config " + dir.file("bad.yml") + quiet), 2);
  EXPECT_EQ(testkit::run_command(cli + " frobnicate" + quiet), 2);
  EXPECT_EQ(testkit::run_command(cli + " eval --config " + testkit::toy_config_path() + " --storage-root " +
                                 dir.path() + " --traces " + dir.file("missing.jsonl") + quiet),
            3);
}
#endif
