#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

#include "docs2synth/inference.hpp"
#include "docs2synth/synthgen.hpp"

namespace docs2synth::eval {

inline constexpr double kAnlsThreshold = 0.5;

std::string normalize_answer(std::string_view s);

// Edit distance over code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

// Normalized Levenshtein similarity of the normalized strings, zeroed below
// threshold. Two empty strings score 1.
double anls_score(std::string_view pred, std::string_view gold, double threshold = kAnlsThreshold);

struct QuestionScore {
  std::string qa_id;
  double em = 0;
  double nls = 0;
  double hit = 0;

  friend bool operator==(const QuestionScore&, const QuestionScore&) = default;
};

struct EvalResult {
  double exact_match = 0;
  double anls = 0;
  double retriever_hit_at_k = 0;
  std::vector<QuestionScore> per_question;  // sorted by qa_id
};

void to_json(nlohmann::json& j, const QuestionScore& q);
void from_json(const nlohmann::json& j, QuestionScore& q);
void to_json(nlohmann::json& j, const EvalResult& r);
void from_json(const nlohmann::json& j, EvalResult& r);

// Traces are matched to pairs by qa_id, falling back to (doc_id, question).
// Throws UnmatchedTrace.
EvalResult evaluate(const std::vector<inference::InferenceTrace>& traces,
                    const std::vector<synthgen::QAPair>& qa_pairs);

// Exact-match accuracy using the answer after iteration t; traces that
// stopped earlier contribute their final answer.
double accuracy_at_iteration(const std::vector<inference::InferenceTrace>& traces,
                             const std::vector<synthgen::QAPair>& qa_pairs, int t);

struct NamedResult {
  std::string name;
  EvalResult result;
};

struct MetricRow {
  std::string metric;
  std::vector<double> values;  // one per strategy, input order
  std::vector<double> deltas;  // value minus the last strategy's value
};

struct QuestionOutcome {
  std::string qa_id;
  std::vector<double> nls;
  // Names of the strategies with the highest nls; empty when all tie.
  std::vector<std::string> winners;
};

struct Comparison {
  std::vector<std::string> names;
  std::vector<MetricRow> metrics;
  std::vector<QuestionOutcome> questions;

  std::string markdown() const;
  nlohmann::json to_json() const;
};

// Throws QuestionSetMismatch; needs at least two results.
Comparison compare_strategies(const std::vector<NamedResult>& results);

}  // namespace docs2synth::eval
