#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>

#include "docs2synth/errors.hpp"
#include "docs2synth/evalharness.hpp"
#include "docs2synth/text.hpp"

using namespace docs2synth;
using namespace docs2synth::eval;
using inference::InferenceTrace;
using synthgen::QAPair;

namespace {

// Edit distance straight from the recursive definition, memoized.
std::size_t reference_distance(const std::u32string& a, const std::u32string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
    memo[key] = best;
    return best;
  };
  return d(a.size(), b.size());
}

QAPair pair(std::string id, std::string answer, int gold, std::string doc = "d", std::string question = "") {
  QAPair p;
  p.qa_id = std::move(id);
  p.doc_id = std::move(doc);
  p.question = question.empty() ? "q-" + p.qa_id : std::move(question);
  p.answer = std::move(answer);
  p.gold_entity_index = gold;
  return p;
}

InferenceTrace trace(const QAPair& p, std::string final_answer, std::vector<int> topk) {
  InferenceTrace t;
  t.qa_id = p.qa_id;
  t.question = p.question;
  t.doc_id = p.doc_id;
  t.strategy = "trained";
  t.final_answer = final_answer;
  t.iterations.push_back({1, std::move(topk), {}, "", std::move(final_answer)});
  return t;
}

EvalResult result_with(std::vector<std::pair<std::string, double>> em) {
  EvalResult r;
  double sum = 0;
  for (auto& [id, v] : em) {
    r.per_question.push_back({id, v, v, v});
    sum += v;
  }
  r.exact_match = r.anls = r.retriever_hit_at_k = sum / static_cast<double>(em.size());
  return r;
}

}  // namespace

TEST(Anls, Golden) {
  EXPECT_NEAR(anls_score("ordinary share", "ordinary shares"), 1.0 - 1.0 / 15.0, 1e-12);
  EXPECT_NEAR(anls_score("ordinary share", "ordinary shares"), 0.9333, 1e-4);
  EXPECT_DOUBLE_EQ(anls_score("Total", "total."), 1.0);
  EXPECT_DOUBLE_EQ(anls_score("abcd", "wxyz"), 0.0);
  EXPECT_DOUBLE_EQ(anls_score("", ""), 1.0);
  EXPECT_DOUBLE_EQ(anls_score("", "abc"), 0.0);
}

TEST(Anls, ThresholdBoundary) {
  // Distance 2 over length 4: NLS is exactly 0.5, which passes.
  EXPECT_DOUBLE_EQ(anls_score("abcd", "abxy"), 0.5);
  EXPECT_DOUBLE_EQ(anls_score("abcd", "axyz"), 0.0);
  EXPECT_DOUBLE_EQ(anls_score("abcd", "axyz", 0.2), 0.25);
}

TEST(Anls, SymmetricOnRandomPairs) {
  std::mt19937_64 rng(8);
  const std::string alphabet = "ab c.,";
  for (int t = 0; t < 300; ++t) {
    std::string a, b;
    for (auto n = rng() % 10; n > 0; --n) a += alphabet[rng() % alphabet.size()];
    for (auto n = rng() % 10; n > 0; --n) b += alphabet[rng() % alphabet.size()];
    ASSERT_DOUBLE_EQ(anls_score(a, b), anls_score(b, a)) << a << "|" << b;
    if (normalize_answer(a) == normalize_answer(b)) ASSERT_DOUBLE_EQ(anls_score(a, b), 1.0);
  }
}

TEST(Levenshtein, MatchesRecursiveReference) {
  std::mt19937_64 rng(12);
  const std::vector<std::string> symbols{"a", "b", "c", "d", " ", "\xC3\xA9", "\xE5\xAD\xA6"};
  for (int t = 0; t < 500; ++t) {
    std::string a, b;
    for (auto n = rng() % 13; n > 0; --n) a += symbols[rng() % symbols.size()];
    for (auto n = rng() % 13; n > 0; --n) b += symbols[rng() % symbols.size()];
    auto ca = text::to_code_points(a);
    auto cb = text::to_code_points(b);
    ASSERT_EQ(levenshtein(a, b), reference_distance({ca.begin(), ca.end()}, {cb.begin(), cb.end()}))
        << a << "|" << b;
  }
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(levenshtein("\xE5\xAD\xA6", "a"), 1u);
}

TEST(Evaluate, AllExact) {
  std::vector<QAPair> pairs{pair("a", "Chen", 1), pair("b", "1,500", 3)};
  std::vector<InferenceTrace> traces{trace(pairs[0], "chen", {1, 0}), trace(pairs[1], "1500", {3})};
  auto r = evaluate(traces, pairs);
  EXPECT_DOUBLE_EQ(r.exact_match, 1.0);
  EXPECT_DOUBLE_EQ(r.anls, 1.0);
  EXPECT_DOUBLE_EQ(r.retriever_hit_at_k, 1.0);
}

TEST(Evaluate, MixedMeansAndHit) {
  std::vector<QAPair> pairs{pair("b", "Chen", 1), pair("a", "Harbor Street", 3)};
  std::vector<InferenceTrace> traces{trace(pairs[0], "Chen", {0}), trace(pairs[1], "zzz", {2})};
  auto r = evaluate(traces, pairs);
  EXPECT_DOUBLE_EQ(r.exact_match, 0.5);
  EXPECT_DOUBLE_EQ(r.anls, 0.5);
  EXPECT_DOUBLE_EQ(r.retriever_hit_at_k, 0.0);
  ASSERT_EQ(r.per_question.size(), 2u);
  EXPECT_EQ(r.per_question[0].qa_id, "a");
}

TEST(Evaluate, FallsBackToDocAndQuestion) {
  auto p = pair("id1", "x", 0, "doc", "Which?");
  auto t = trace(p, "x", {0});
  t.qa_id.clear();
  auto r = evaluate({t}, {p});
  EXPECT_DOUBLE_EQ(r.exact_match, 1.0);
  EXPECT_EQ(r.per_question[0].qa_id, "id1");
}

TEST(Evaluate, UnmatchedTraceThrows) {
  auto p = pair("a", "x", 0);
  auto stray = trace(pair("zz", "x", 0, "other"), "x", {0});
  EXPECT_THROW(evaluate({stray}, {p}), UnmatchedTrace);
}

TEST(Evaluate, AccuracyAtIteration) {
  auto p = pair("a", "right", 0);
  auto t = trace(p, "right", {0});
  t.iterations.insert(t.iterations.begin(), {1, {1}, {}, "", "wrong"});
  t.iterations[1].t = 2;
  EXPECT_DOUBLE_EQ(accuracy_at_iteration({t}, {p}, 1), 0.0);
  EXPECT_DOUBLE_EQ(accuracy_at_iteration({t}, {p}, 2), 1.0);
  EXPECT_DOUBLE_EQ(accuracy_at_iteration({t}, {p}, 5), 1.0);
}

TEST(Compare, DeltasAgainstLastStrategy) {
  auto a = result_with({{"q1", 1.0}, {"q2", 1.0}});
  auto b = result_with({{"q1", 1.0}, {"q2", 0.0}});
  auto c = compare_strategies({{"A", a}, {"B", b}});
  EXPECT_EQ(c.names, (std::vector<std::string>{"A", "B"}));
  const auto& em = c.metrics[0];
  EXPECT_EQ(em.metric, "exact_match");
  EXPECT_DOUBLE_EQ(em.deltas[0], 0.5);
  EXPECT_DOUBLE_EQ(em.deltas[1], 0.0);
  ASSERT_EQ(c.questions.size(), 2u);
  EXPECT_TRUE(c.questions[0].winners.empty());
  EXPECT_EQ(c.questions[1].winners, (std::vector<std::string>{"A"}));
  EXPECT_NE(c.markdown().find("exact_match"), std::string::npos);
  EXPECT_EQ(c.to_json()["strategies"].size(), 2u);
}

TEST(Compare, IdenticalResultsHaveZeroDeltas) {
  auto a = result_with({{"q1", 1.0}, {"q2", 0.0}});
  auto c = compare_strategies({{"A", a}, {"B", a}});
  for (const auto& row : c.metrics) {
    for (double d : row.deltas) EXPECT_DOUBLE_EQ(d, 0.0);
  }
  EXPECT_EQ(c.markdown(), compare_strategies({{"A", a}, {"B", a}}).markdown());
}

TEST(Compare, Errors) {
  auto a = result_with({{"q1", 1.0}});
  auto b = result_with({{"q2", 1.0}});
  EXPECT_THROW(compare_strategies({{"A", a}, {"B", b}}), QuestionSetMismatch);
  EXPECT_ANY_THROW(compare_strategies({{"A", a}}));
}

TEST(EvalJson, RoundTrip) {
  auto a = result_with({{"q1", 1.0}, {"q2", 0.0}});
  nlohmann::json j = a;
  auto back = j.get<EvalResult>();
  EXPECT_EQ(back.per_question, a.per_question);
  EXPECT_DOUBLE_EQ(back.anls, a.anls);
}
