#include <gtest/gtest.h>

#include "docs2synth/errors.hpp"
#include "docs2synth/synthgen.hpp"
#include "test_support.hpp"

using namespace docs2synth;
using namespace docs2synth::synthgen;
using agents::ChatMessage;

namespace {

const std::string kPass = R"({"relevant_and_clear": true, "answer_valid": true, "rationale": "ok"})";

std::string answer_of(const std::string& prompt) {
  auto at = prompt.find("Target answer: ");
  auto end = prompt.find('\n', at);
  return prompt.substr(at + 15, end - at - 15);
}

QAPair pending_pair(const ParsedDocument& doc, int gold) {
  QAPair p;
  p.qa_id = make_qa_id(doc.doc_id, gold, "q?");
  p.doc_id = doc.doc_id;
  p.question = "q?";
  p.answer = doc.entities[static_cast<std::size_t>(gold)].content;
  p.gold_entity_index = gold;
  return p;
}

}  // namespace

TEST(Generation, ProducesVerifiedPairsWithGoldIndex) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen", "Total", "1,500"});
  testkit::ScriptedProvider gen([](const auto& m) { return "What is " + answer_of(testkit::last_user_text(m)) + "?"; });
  testkit::ScriptedProvider ver([](const auto&) { return kPass; });
  GenerationConfig cfg;
  auto r = generate_for_document(doc, cfg, gen, ver, std::nullopt);
  ASSERT_EQ(r.pairs.size(), 4u);
  for (const auto& p : r.pairs) {
    EXPECT_EQ(doc.entities[static_cast<std::size_t>(p.gold_entity_index)].content, p.answer);
    EXPECT_EQ(p.review_status, ReviewStatus::Pending);
    EXPECT_TRUE(p.verifier.passed);
    EXPECT_EQ(p.qa_id.size(), 16u);
  }
  EXPECT_EQ(r.pairs[3].question, "What is 1,500?");
}

TEST(Generation, StopsAtTarget) {
  auto doc = testkit::stacked_doc("d", {"aa", "bb", "cc", "dd"});
  testkit::ScriptedProvider gen([](const auto&) { return "q?"; });
  testkit::ScriptedProvider ver([](const auto&) { return kPass; });
  GenerationConfig cfg;
  cfg.qa_per_document = 2;
  EXPECT_EQ(generate_for_document(doc, cfg, gen, ver, std::nullopt).pairs.size(), 2u);
  EXPECT_EQ(gen.calls(), 2);
}

TEST(Generation, ShortEntitiesSkipped) {
  auto doc = testkit::stacked_doc("d", {"a", "bb", "\xE5\xAD\xA6", "\xE5\xAD\xA6\xE7\x94\x9F"});
  GenerationConfig cfg;
  EXPECT_EQ(select_candidates(doc, cfg), (std::vector<int>{1, 3}));
}

TEST(Generation, SamplingOrders) {
  auto doc = testkit::stacked_doc("d", {"aa", "bbbbb", "ccc", "dddd", "ee", "ff", "gg", "hh"});
  GenerationConfig cfg;
  cfg.entity_sampling = EntitySampling::LongestFirst;
  EXPECT_EQ(select_candidates(doc, cfg), (std::vector<int>{1, 3, 2, 0, 4, 5, 6, 7}));
  cfg.entity_sampling = EntitySampling::Random;
  cfg.seed = 3;
  auto a = select_candidates(doc, cfg);
  EXPECT_EQ(a, select_candidates(doc, cfg));
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

TEST(Generation, RejectedPairsDiscarded) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  testkit::ScriptedProvider gen([](const auto& m) { return answer_of(testkit::last_user_text(m)) + "?"; });
  testkit::ScriptedProvider ver([](const std::vector<ChatMessage>& m) {
    auto all = agents::concatenated_user_text(m);
    bool ok = all.find("Question: Chen?") != std::string::npos;
    return std::string(R"({"relevant_and_clear": true, "answer_valid": )") + (ok ? "true" : "false") + "}";
  });
  auto r = generate_for_document(doc, {}, gen, ver, std::nullopt);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].answer, "Chen");
}

TEST(Generation, EmptyQuestionWarnsAndContinues) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  testkit::ScriptedProvider gen([](const auto& m) {
    return answer_of(testkit::last_user_text(m)) == "Name" ? std::string("  \n ") : std::string("Who?");
  });
  testkit::ScriptedProvider ver([](const auto&) { return kPass; });
  auto r = generate_for_document(doc, {}, gen, ver, std::nullopt);
  EXPECT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Generation, NothingPassingWarns) {
  auto doc = testkit::stacked_doc("d", {"Name"});
  testkit::ScriptedProvider gen([](const auto&) { return "q?"; });
  testkit::ScriptedProvider ver([](const auto&) { return R"({"relevant_and_clear": false, "answer_valid": true})"; });
  auto r = generate_for_document(doc, {}, gen, ver, std::nullopt);
  EXPECT_TRUE(r.pairs.empty());
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Verifier, FailsClosedOnGarbage) {
  auto doc = testkit::stacked_doc("d", {"Name"});
  testkit::ScriptedProvider ver([](const auto&) { return "I think it is fine"; });
  auto v = verify_pair(ver, doc, "q", "Name", std::nullopt);
  EXPECT_FALSE(v.passed);
  EXPECT_EQ(v.rationale, kUnparseableRationale);
  EXPECT_EQ(ver.calls(), 2);
}

TEST(Verifier, MissingFieldFailsClosed) {
  auto doc = testkit::stacked_doc("d", {"Name"});
  testkit::ScriptedProvider ver([](const auto&) { return R"({"relevant_and_clear": true})"; });
  EXPECT_FALSE(verify_pair(ver, doc, "q", "Name", std::nullopt).passed);
}

TEST(Verifier, PassedIsConjunction) {
  auto doc = testkit::stacked_doc("d", {"Name"});
  testkit::ScriptedProvider ver([](const auto&) { return "```json\n" + kPass + "\n```"; });
  auto v = verify_pair(ver, doc, "q", "Name", std::nullopt);
  EXPECT_TRUE(v.passed);
  EXPECT_EQ(v.rationale, "ok");
}

TEST(QaId, StableAndSensitive) {
  EXPECT_EQ(make_qa_id("d", 1, "q"), make_qa_id("d", 1, "q"));
  EXPECT_NE(make_qa_id("d", 1, "q"), make_qa_id("d", 2, "q"));
  EXPECT_NE(make_qa_id("d", 1, "q"), make_qa_id("d", 1, "q2"));
}

TEST(Review, ApproveAndReject) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  auto p = pending_pair(doc, 1);
  EXPECT_EQ(apply_review(p, Approve{}, "r", doc, "t").review_status, ReviewStatus::Approved);
  auto rejected = apply_review(p, Reject{}, "r", doc, "t");
  EXPECT_EQ(rejected.review_status, ReviewStatus::Rejected);
  EXPECT_THROW(apply_review(rejected, Approve{}, "r", doc, "t"), IllegalTransition);
}

TEST(Review, ApprovedIsTerminal) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  auto approved = apply_review(pending_pair(doc, 1), Approve{}, "r", doc, "t");
  EXPECT_THROW(apply_review(approved, Approve{}, "r", doc, "t"), IllegalTransition);
  EXPECT_THROW(apply_review(approved, Edit{"question", "x"}, "r", doc, "t"), IllegalTransition);
}

TEST(Review, EditAnswerRepointsGold) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen", "Total", "Chen"});
  auto e = apply_review(pending_pair(doc, 0), Edit{"answer", "Chen"}, "alice", doc, "2026-01-01T00:00:00Z");
  EXPECT_EQ(e.review_status, ReviewStatus::Edited);
  EXPECT_EQ(e.gold_entity_index, 1);
  ASSERT_EQ(e.edit_history.size(), 2u);
  EXPECT_EQ(e.edit_history[0].field, "answer");
  EXPECT_EQ(e.edit_history[0].old_value, "Name");
  EXPECT_EQ(e.edit_history[1].field, "gold_entity_index");
  EXPECT_EQ(apply_review(e, Approve{}, "alice", doc, "t").review_status, ReviewStatus::Approved);
  EXPECT_THROW(apply_review(e, Edit{"question", "again?"}, "alice", doc, "t"), IllegalTransition);
}

TEST(Review, EditAnswerMustMatchEntity) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  auto p = pending_pair(doc, 0);
  EXPECT_THROW(apply_review(p, Edit{"answer", "Nobody"}, "r", doc, "t"), EditAnswerNotFound);
  EXPECT_THROW(apply_review(p, Edit{"question", "  "}, "r", doc, "t"), RequestRejected);
  EXPECT_THROW(apply_review(p, Edit{"gold_entity_index", "1"}, "r", doc, "t"), RequestRejected);
}

TEST(QaJson, RoundTrip) {
  auto doc = testkit::stacked_doc("d", {"Name", "Chen"});
  auto e = apply_review(pending_pair(doc, 0), Edit{"question", "Who?"}, "bob", doc, "ts");
  e.verifier = {true, true, "fine", true};
  nlohmann::json j = e;
  EXPECT_EQ(j["review_status"], "edited");
  EXPECT_EQ(j["edit_history"][0]["old"], "q?");
  EXPECT_EQ(j.get<QAPair>(), e);
}

TEST(Prompts, LoadOverridesOnlyPresentFiles) {
  testkit::TempDir dir;
  testkit::write_file(dir.file("generation.txt"), "custom {{answer}}");
  auto t = PromptTemplates::load(dir.path());
  EXPECT_EQ(t.generation_user, "custom {{answer}}");
  EXPECT_EQ(t.verification_user, PromptTemplates::defaults().verification_user);
}
