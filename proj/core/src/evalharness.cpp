#include "docs2synth/evalharness.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::eval {

using nlohmann::json;

std::string normalize_answer(std::string_view s) { return text::normalize_answer(s); }

std::size_t levenshtein(std::string_view a, std::string_view b) {
  auto x = text::to_code_points(a);
  auto y = text::to_code_points(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

double anls_score(std::string_view pred, std::string_view gold, double threshold) {
  auto p = normalize_answer(pred);
  auto g = normalize_answer(gold);
  auto longest = std::max(text::code_point_length(p), text::code_point_length(g));
  if (longest == 0) return 1.0;
  double nls = 1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(longest);
  return nls >= threshold ? nls : 0.0;
}

void to_json(json& j, const QuestionScore& q) {
  j = json{{"qa_id", q.qa_id}, {"em", q.em}, {"nls", q.nls}, {"hit", q.hit}};
}

void from_json(const json& j, QuestionScore& q) {
  q.qa_id = j.at("qa_id").get<std::string>();
  q.em = j.at("em").get<double>();
  q.nls = j.at("nls").get<double>();
  q.hit = j.at("hit").get<double>();
}

void to_json(json& j, const EvalResult& r) {
  j = json{{"exact_match", r.exact_match},
           {"anls", r.anls},
           {"retriever_hit_at_k", r.retriever_hit_at_k},
           {"per_question", r.per_question}};
}

void from_json(const json& j, EvalResult& r) {
  r.exact_match = j.at("exact_match").get<double>();
  r.anls = j.at("anls").get<double>();
  r.retriever_hit_at_k = j.at("retriever_hit_at_k").get<double>();
  r.per_question = j.at("per_question").get<std::vector<QuestionScore>>();
}

namespace {

class PairIndex {
 public:
  explicit PairIndex(const std::vector<synthgen::QAPair>& pairs) {
    for (const auto& p : pairs) {
      by_id_.emplace(p.qa_id, &p);
      by_question_.emplace(std::make_pair(p.doc_id, p.question), &p);
    }
  }

  const synthgen::QAPair& match(const inference::InferenceTrace& t) const {
    if (!t.qa_id.empty()) {
      if (auto it = by_id_.find(t.qa_id); it != by_id_.end()) return *it->second;
    }
    if (auto it = by_question_.find({t.doc_id, t.question}); it != by_question_.end()) return *it->second;
    throw UnmatchedTrace("no QA pair for trace " + (t.qa_id.empty() ? "" : t.qa_id + " ") + "(doc " + t.doc_id +
                         ", question \"" + t.question + "\")");
  }

 private:
  std::map<std::string, const synthgen::QAPair*> by_id_;
  std::map<std::pair<std::string, std::string>, const synthgen::QAPair*> by_question_;
};

}  // namespace

EvalResult evaluate(const std::vector<inference::InferenceTrace>& traces,
                    const std::vector<synthgen::QAPair>& qa_pairs) {
  PairIndex index(qa_pairs);
  EvalResult r;
  for (const auto& t : traces) {
    const auto& pair = index.match(t);
    QuestionScore q;
    q.qa_id = pair.qa_id;
    q.em = normalize_answer(t.final_answer) == normalize_answer(pair.answer) ? 1.0 : 0.0;
    q.nls = anls_score(t.final_answer, pair.answer);
    if (!t.iterations.empty()) {
      const auto& top = t.iterations.back().topk_indices;
      q.hit = std::find(top.begin(), top.end(), pair.gold_entity_index) != top.end() ? 1.0 : 0.0;
    }
    r.per_question.push_back(std::move(q));
  }
  std::stable_sort(r.per_question.begin(), r.per_question.end(),
                   [](const QuestionScore& a, const QuestionScore& b) { return a.qa_id < b.qa_id; });
  if (!r.per_question.empty()) {
    for (const auto& q : r.per_question) {
      r.exact_match += q.em;
      r.anls += q.nls;
      r.retriever_hit_at_k += q.hit;
    }
    auto n = static_cast<double>(r.per_question.size());
    r.exact_match /= n;
    r.anls /= n;
    r.retriever_hit_at_k /= n;
  }
  return r;
}

double accuracy_at_iteration(const std::vector<inference::InferenceTrace>& traces,
                             const std::vector<synthgen::QAPair>& qa_pairs, int t) {
  if (traces.empty()) return 0;
  PairIndex index(qa_pairs);
  double correct = 0;
  for (const auto& trace : traces) {
    const auto& pair = index.match(trace);
    std::string answer = trace.initial_answer;
    for (const auto& it : trace.iterations) {
      if (it.t > t) break;
      answer = it.answer;
    }
    if (normalize_answer(answer) == normalize_answer(pair.answer)) correct += 1;
  }
  return correct / static_cast<double>(traces.size());
}

Comparison compare_strategies(const std::vector<NamedResult>& results) {
  if (results.size() < 2) throw QuestionSetMismatch("comparison needs at least two results");
  auto ids = [](const EvalResult& r) {
    std::vector<std::string> out;
    for (const auto& q : r.per_question) out.push_back(q.qa_id);
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto reference = ids(results.front().result);
  for (const auto& r : results) {
    if (ids(r.result) != reference) {
      throw QuestionSetMismatch("'" + r.name + "' covers a different question set than '" + results.front().name +
                                "'");
    }
  }

  Comparison c;
  for (const auto& r : results) c.names.push_back(r.name);
  auto row = [&](std::string name, auto get) {
    MetricRow m{std::move(name), {}, {}};
    for (const auto& r : results) m.values.push_back(get(r.result));
    for (double v : m.values) m.deltas.push_back(v - m.values.back());
    c.metrics.push_back(std::move(m));
  };
  row("exact_match", [](const EvalResult& r) { return r.exact_match; });
  row("anls", [](const EvalResult& r) { return r.anls; });
  row("retriever_hit_at_k", [](const EvalResult& r) { return r.retriever_hit_at_k; });

  std::vector<std::map<std::string, double>> nls(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const auto& q : results[i].result.per_question) nls[i][q.qa_id] = q.nls;
  }
  for (const auto& id : reference) {
    QuestionOutcome o;
    o.qa_id = id;
    for (const auto& m : nls) o.nls.push_back(m.at(id));
    double best = *std::max_element(o.nls.begin(), o.nls.end());
    double worst = *std::min_element(o.nls.begin(), o.nls.end());
    if (best != worst) {
      for (std::size_t i = 0; i < o.nls.size(); ++i) {
        if (o.nls[i] == best) o.winners.push_back(c.names[i]);
      }
    }
    c.questions.push_back(std::move(o));
  }
  return c;
}

std::string Comparison::markdown() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "| metric |";
  for (const auto& n : names) out << ' ' << n << " |";
  for (std::size_t i = 0; i + 1 < names.size(); ++i) out << " delta " << names[i] << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < names.size() * 2 - 1; ++i) out << "---|";
  out << '\n';
  for (const auto& m : metrics) {
    out << "| " << m.metric << " |";
    for (double v : m.values) out << ' ' << v << " |";
    for (std::size_t i = 0; i + 1 < m.deltas.size(); ++i) out << ' ' << std::showpos << m.deltas[i] << std::noshowpos << " |";
    out << '\n';
  }
  out << "\n| qa_id |";
  for (const auto& n : names) out << ' ' << n << " nls |";
  out << " winner |\n|---|";
  for (std::size_t i = 0; i < names.size(); ++i) out << "---|";
  out << "---|\n";
  for (const auto& q : questions) {
    out << "| " << q.qa_id << " |";
    for (double v : q.nls) out << ' ' << v << " |";
    std::string w;
    for (const auto& name : q.winners) w += (w.empty() ? "" : ", ") + name;
    out << ' ' << (w.empty() ? "tie" : w) << " |\n";
  }
  return out.str();
}

json Comparison::to_json() const {
  json metrics_j = json::array();
  for (const auto& m : metrics) {
    metrics_j.push_back({{"metric", m.metric}, {"values", m.values}, {"deltas", m.deltas}});
  }
  json questions_j = json::array();
  for (const auto& q : questions) {
    questions_j.push_back({{"qa_id", q.qa_id}, {"nls", q.nls}, {"winners", q.winners}});
  }
  return json{{"strategies", names}, {"metrics", metrics_j}, {"questions", questions_j}};
}

}  // namespace docs2synth::eval
