#include <gtest/gtest.h>

#include <filesystem>

#include "docs2synth/errors.hpp"
#include "docs2synth/inference.hpp"
#include "docs2synth/text.hpp"
#include "test_support.hpp"

using namespace docs2synth;
using namespace docs2synth::inference;
using agents::ChatMessage;

namespace {

int count_red(const image::RgbImage& img) {
  int n = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) n += img.at(x, y) == kRed;
  }
  return n;
}

// Logits favour whichever entity contains the current answer, else entity 0.
class ContainsRanker : public retriever::EntityRanker {
 public:
  std::vector<double> logits(const std::string&, const std::string& answer, const ParsedDocument& doc) override {
    ++calls;
    std::vector<double> z(doc.entities.size(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!answer.empty() && doc.entities[i].content.find(answer) != std::string::npos) z[i] = 1.0;
    }
    return z;
  }
  int calls = 0;
};

std::string evidence_of(const std::vector<ChatMessage>& m) {
  auto all = agents::concatenated_user_text(m);
  auto at = all.find("Retrieved evidence:");
  return all.substr(at, all.find("\nQuestion:") - at);
}

}  // namespace

TEST(DrawBoxes, ExactOutlinePixels) {
  image::RgbImage img(100, 100);
  std::vector<BoundingBox> boxes{{20, 30, 70, 80}};
  auto out = draw_boxes(img, boxes);
  EXPECT_EQ(stroke_width(100, 100), 2);
  // 50x50 box minus its 46x46 interior.
  EXPECT_EQ(count_red(out), 2500 - 46 * 46);
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) {
      bool inside = x >= 20 && x < 70 && y >= 30 && y < 80;
      bool stroke = inside && (x < 22 || x >= 68 || y < 32 || y >= 78);
      ASSERT_EQ(out.at(x, y) == kRed, stroke) << x << "," << y;
      if (!stroke) ASSERT_EQ(out.at(x, y), img.at(x, y));
    }
  }
}

TEST(DrawBoxes, NoBoxesLeavesImageUntouched) {
  image::RgbImage img(30, 20, {1, 2, 3});
  img.set(4, 5, {9, 9, 9});
  EXPECT_EQ(draw_boxes(img, {}), img);
}

TEST(DrawBoxes, ClampsToPageAndScalesStroke) {
  EXPECT_EQ(stroke_width(2000, 1000), 6);
  image::RgbImage img(10, 10);
  std::vector<BoundingBox> boxes{{-5, -5, 50, 50}};
  auto out = draw_boxes(img, boxes);
  EXPECT_EQ(count_red(out), 100 - 36);
}

TEST(Evidence, Formatting) {
  std::vector<std::string> none;
  EXPECT_EQ(evidence_block(none), "Retrieved evidence:\n(none)");
  std::vector<std::string> two{"Total", "1,500"};
  EXPECT_EQ(evidence_block(two), "Retrieved evidence:\nE1: Total\nE2: 1,500");
}

TEST(AnswerMessages, Order) {
  auto png = image::encode_png(image::RgbImage(4, 4));
  std::vector<std::string> ev{"x"};
  auto msgs = answer_messages("Q?", png, "full", ev);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].role, agents::Role::System);
  const auto& parts = msgs[1].parts;
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<agents::ImagePart>(parts[0]));
  EXPECT_EQ(std::get<agents::TextPart>(parts[1]).text, "Document text:\nfull");
  EXPECT_EQ(std::get<agents::TextPart>(parts[2]).text, "Retrieved evidence:\nE1: x");
  EXPECT_EQ(std::get<agents::TextPart>(parts[3]).text, "Question: Q?");
}

TEST(Loop, StopsWhenAnswerStable) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen Xiaoming", "Total", "1,500"});
  std::vector<std::string> evidence;
  testkit::ScriptedProvider answerer([&](const std::vector<ChatMessage>& m) {
    evidence.push_back(evidence_of(m));
    return evidence.size() == 1 ? std::string("Chen") : std::string("Chen Xiaoming\nextra line");
  });
  ContainsRanker ranker;
  LoopContext ctx{answerer, &ranker, "", {}};
  LoopConfig cfg;
  cfg.k = 1;
  cfg.max_iterations = 5;
  auto trace = run_loop("Who is the student?", doc, cfg, ctx);
  EXPECT_EQ(trace.initial_answer, "Chen");
  ASSERT_EQ(trace.iterations.size(), 2u);
  EXPECT_EQ(trace.iterations[0].topk_indices, (std::vector<int>{1}));
  EXPECT_EQ(trace.iterations[0].retrieved_contents, (std::vector<std::string>{"Chen Xiaoming"}));
  EXPECT_EQ(trace.final_answer, "Chen Xiaoming");
  EXPECT_EQ(trace.stop_reason, StopReason::StableAnswer);
  EXPECT_EQ(evidence[0], "Retrieved evidence:\n(none)");
  EXPECT_EQ(evidence[1], "Retrieved evidence:\nE1: Chen Xiaoming");
  EXPECT_EQ(ranker.calls, 2);
  EXPECT_TRUE(trace.iterations[0].annotated_image_ref.empty());
}

TEST(Loop, MaxIterationsWithoutEarlyStop) {
  auto doc = testkit::stacked_doc("d", {"a1", "b2"});
  testkit::ScriptedProvider answerer([](const auto&) { return "same"; });
  ContainsRanker ranker;
  LoopContext ctx{answerer, &ranker, "", {}};
  LoopConfig cfg;
  cfg.max_iterations = 3;
  cfg.stop_on_stable_answer = false;
  auto trace = run_loop("q", doc, cfg, ctx);
  EXPECT_EQ(trace.iterations.size(), 3u);
  EXPECT_EQ(trace.stop_reason, StopReason::MaxIterations);
  EXPECT_EQ(trace.iterations[2].t, 3);
}

TEST(Loop, PersistsAnnotatedPages) {
  testkit::TempDir dir;
  auto doc = testkit::stacked_doc("doc", {"a1", "b2"}, 200, 200);
  testkit::ScriptedProvider answerer([](const auto&) { return "b2"; });
  ContainsRanker ranker;
  LoopContext ctx{answerer, &ranker, dir.path(), {}};
  LoopConfig cfg;
  cfg.k = 1;
  auto trace = run_loop("q", doc, cfg, ctx);
  ASSERT_EQ(trace.iterations.size(), 1u);
  const auto& ref = trace.iterations[0].annotated_image_ref;
  EXPECT_EQ(ref, "artifacts/annotated/doc/" + question_hash("q", Strategy::Trained) + "/t1.png");
  auto img = image::load(dir.file(ref));
  EXPECT_EQ(img.at(static_cast<int>(doc.entities[1].bbox.x0), static_cast<int>(doc.entities[1].bbox.y0)), kRed);
}

TEST(Loop, ProviderErrorLeavesPartialTrace) {
  auto doc = testkit::stacked_doc("d", {"a1", "b2"});
  int n = 0;
  testkit::ScriptedProvider answerer([&](const auto&) -> std::string {
    if (++n == 3) throw ProviderUnreachable("down");
    return "answer " + std::to_string(n);
  });
  ContainsRanker ranker;
  LoopContext ctx{answerer, &ranker, "", {}};
  LoopConfig cfg;
  cfg.max_iterations = 4;
  InferenceTrace trace;
  EXPECT_THROW(run_loop("q", doc, cfg, ctx, trace), ProviderUnreachable);
  EXPECT_EQ(trace.iterations.size(), 1u);
  EXPECT_EQ(trace.initial_answer, "answer 1");
}

TEST(Loop, TrainedStrategyNeedsRanker) {
  auto doc = testkit::stacked_doc("d", {"a1"});
  testkit::ScriptedProvider answerer([](const auto&) { return "x"; });
  LoopContext ctx{answerer, nullptr, "", {}};
  EXPECT_THROW(run_loop("q", doc, LoopConfig{}, ctx), ModelError);
}

TEST(RagBaseline, RanksByQuestionSimilarity) {
  auto doc = testkit::stacked_doc("d", {"Date", "Total amount", "Name"});
  EXPECT_EQ(rag_rank("What is the total amount?", doc, 1), (std::vector<int>{1}));
  testkit::ScriptedProvider answerer([](const auto&) { return "42"; });
  LoopContext ctx{answerer, nullptr, "", {}};
  auto trace = rag_baseline("What is the total amount?", doc, 2, ctx);
  EXPECT_EQ(trace.strategy, "rag-baseline");
  ASSERT_EQ(trace.iterations.size(), 1u);
  EXPECT_EQ(trace.iterations[0].topk_indices.size(), 2u);
  EXPECT_EQ(trace.final_answer, "42");
  EXPECT_NE(question_hash("q", Strategy::RagBaseline), question_hash("q", Strategy::Trained));
}

TEST(TraceJson, RoundTrip) {
  InferenceTrace t;
  t.qa_id = "x";
  t.question = "q";
  t.doc_id = "d";
  t.strategy = "trained";
  t.initial_answer = "a";
  t.iterations.push_back({1, {2, 0}, {"c", "a"}, "artifacts/x.png", "c"});
  t.final_answer = "c";
  t.stop_reason = StopReason::Aborted;
  t.error = "boom";
  nlohmann::json j = t;
  EXPECT_EQ(j.get<InferenceTrace>(), t);
  EXPECT_EQ(parse_stop_reason(to_string(StopReason::StableAnswer)), StopReason::StableAnswer);
  EXPECT_EQ(parse_strategy("rag-baseline"), Strategy::RagBaseline);
}

TEST(LoopConfig, Validation) {
  LoopConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigValidationError);
  c = {};
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), ConfigValidationError);
}
