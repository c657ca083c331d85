#include "docs2synth/synthgen.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>

#include "docs2synth/errors.hpp"
#include "docs2synth/hash.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::synthgen {

using agents::ChatMessage;
using agents::Role;
using nlohmann::json;

std::string_view to_string(ReviewStatus s) noexcept {
  switch (s) {
    case ReviewStatus::Pending: return "pending";
    case ReviewStatus::Approved: return "approved";
    case ReviewStatus::Rejected: return "rejected";
    case ReviewStatus::Edited: return "edited";
  }
  return "pending";
}

ReviewStatus parse_review_status(std::string_view name) {
  if (name == "pending") return ReviewStatus::Pending;
  if (name == "approved") return ReviewStatus::Approved;
  if (name == "rejected") return ReviewStatus::Rejected;
  if (name == "edited") return ReviewStatus::Edited;
  throw std::invalid_argument("unknown review status '" + std::string(name) + "'");
}

std::string_view to_string(EntitySampling s) noexcept {
  switch (s) {
    case EntitySampling::All: return "all";
    case EntitySampling::Random: return "random";
    case EntitySampling::LongestFirst: return "longest-first";
  }
  return "all";
}

EntitySampling parse_entity_sampling(std::string_view name) {
  if (name == "all") return EntitySampling::All;
  if (name == "random") return EntitySampling::Random;
  if (name == "longest-first") return EntitySampling::LongestFirst;
  throw std::invalid_argument("unknown entity sampling '" + std::string(name) + "'");
}

void to_json(json& j, const VerifierVerdict& v) {
  j = json{{"relevant_and_clear", v.relevant_and_clear},
           {"answer_valid", v.answer_valid},
           {"rationale", v.rationale},
           {"passed", v.passed}};
}

void from_json(const json& j, VerifierVerdict& v) {
  v.relevant_and_clear = j.at("relevant_and_clear").get<bool>();
  v.answer_valid = j.at("answer_valid").get<bool>();
  v.rationale = j.value("rationale", "");
  v.passed = j.at("passed").get<bool>();
}

void to_json(json& j, const EditRecord& e) {
  j = json{{"timestamp", e.timestamp},
           {"field", e.field},
           {"old", e.old_value},
           {"new", e.new_value},
           {"reviewer", e.reviewer}};
}

void from_json(const json& j, EditRecord& e) {
  e.timestamp = j.at("timestamp").get<std::string>();
  e.field = j.at("field").get<std::string>();
  e.old_value = j.at("old").get<std::string>();
  e.new_value = j.at("new").get<std::string>();
  e.reviewer = j.value("reviewer", "");
}

void to_json(json& j, const QAPair& p) {
  j = json{{"qa_id", p.qa_id},
           {"doc_id", p.doc_id},
           {"question", p.question},
           {"answer", p.answer},
           {"gold_entity_index", p.gold_entity_index},
           {"verifier", p.verifier},
           {"review_status", to_string(p.review_status)},
           {"edit_history", p.edit_history}};
}

void from_json(const json& j, QAPair& p) {
  p.qa_id = j.at("qa_id").get<std::string>();
  p.doc_id = j.at("doc_id").get<std::string>();
  p.question = j.at("question").get<std::string>();
  p.answer = j.at("answer").get<std::string>();
  p.gold_entity_index = j.at("gold_entity_index").get<int>();
  p.verifier = j.at("verifier").get<VerifierVerdict>();
  p.review_status = parse_review_status(j.at("review_status").get<std::string>());
  p.edit_history = j.value("edit_history", std::vector<EditRecord>{});
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.generation_system =
      "You write questions for document question answering. Every question must be answerable from the "
      "document image and its text alone.";
  t.generation_user =
      "Document text (reading order):\n{{full_text}}\n\n"
      "Target answer: {{answer}}\n"
      "Target box: {{bbox}}\n\n"
      "Write one clear question about this document whose answer is exactly the target answer. "
      "Reply with the question only.";
  t.verification_system =
      "You check synthetic question-answer pairs for document question answering.";
  t.verification_user =
      "Document text (reading order):\n{{full_text}}\n\n"
      "Question: {{question}}\n"
      "Proposed answer: {{answer}}\n\n"
      "Check (1) whether the question is relevant to this document and clearly worded, and (2) whether the "
      "proposed answer is a valid answer to the question.";
  return t;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  namespace fs = std::filesystem;
  auto t = defaults();
  auto maybe = [&](const char* name, std::string& slot) {
    auto p = fs::path(dir) / name;
    if (fs::exists(p)) slot = text::read_file(p.string());
  };
  maybe("generation_system.txt", t.generation_system);
  maybe("generation.txt", t.generation_user);
  maybe("verification_system.txt", t.verification_system);
  maybe("verification.txt", t.verification_user);
  return t;
}

std::string make_qa_id(const std::string& doc_id, int gold_entity_index, const std::string& question) {
  std::string key = doc_id;
  key.push_back('\x1f');
  key += std::to_string(gold_entity_index);
  key.push_back('\x1f');
  key += question;
  return hash::sha256_hex(key).substr(0, 16);
}

namespace {

std::string format_bbox(const BoundingBox& b) {
  std::ostringstream ss;
  ss << '[' << b.x0 << ", " << b.y0 << ", " << b.x1 << ", " << b.y1 << ']';
  return ss.str();
}

std::vector<ChatMessage> build_messages(const std::string& system, const std::string& user,
                                        const std::optional<agents::ImagePart>& page_image) {
  std::vector<ChatMessage> msgs;
  msgs.push_back(ChatMessage::text(Role::System, system));
  ChatMessage u{Role::User, {}};
  if (page_image) u.parts.emplace_back(*page_image);
  u.parts.emplace_back(agents::TextPart{user});
  msgs.push_back(std::move(u));
  return msgs;
}

std::optional<VerifierVerdict> parse_verdict(const json& v) {
  if (!v.contains("relevant_and_clear") || !v["relevant_and_clear"].is_boolean()) return std::nullopt;
  if (!v.contains("answer_valid") || !v["answer_valid"].is_boolean()) return std::nullopt;
  VerifierVerdict verdict;
  verdict.relevant_and_clear = v["relevant_and_clear"].get<bool>();
  verdict.answer_valid = v["answer_valid"].get<bool>();
  if (v.contains("rationale") && v["rationale"].is_string()) verdict.rationale = v["rationale"].get<std::string>();
  verdict.passed = verdict.relevant_and_clear && verdict.answer_valid;
  return verdict;
}

VerifierVerdict fail_closed() {
  VerifierVerdict v;
  v.rationale = std::string(kUnparseableRationale);
  return v;
}

}  // namespace

std::string generate_question(agents::Provider& provider, const ParsedDocument& doc, const Entity& entity,
                              const std::optional<agents::ImagePart>& page_image, const PromptTemplates& prompts) {
  auto user = text::render_template(prompts.generation_user, {{"full_text", doc.full_text},
                                                              {"answer", entity.content},
                                                              {"bbox", format_bbox(entity.bbox)}});
  auto reply = provider.complete(build_messages(prompts.generation_system, user, page_image),
                                 agents::CallOptions{agents::kGenerationTemperature});
  auto question = text::first_nonempty_line(reply.text);
  if (question.empty()) {
    throw GenerationFailed("empty question for entity " + std::to_string(entity.index) + " of " + doc.doc_id);
  }
  return question;
}

VerifierVerdict verify_pair(agents::Provider& provider, const ParsedDocument& doc, const std::string& question,
                            const std::string& answer, const std::optional<agents::ImagePart>& page_image,
                            const PromptTemplates& prompts) {
  auto user = text::render_template(prompts.verification_user,
                                    {{"full_text", doc.full_text}, {"question", question}, {"answer", answer}});
  try {
    auto reply = agents::complete_json(provider, build_messages(prompts.verification_system, user, page_image),
                                       kVerdictSchema, agents::CallOptions{agents::kVerifierTemperature});
    if (auto verdict = parse_verdict(reply.value)) return *verdict;
  } catch (const MalformedResponse&) {
  }
  return fail_closed();
}

std::vector<int> select_candidates(const ParsedDocument& doc, const GenerationConfig& config) {
  std::vector<int> candidates;
  for (const auto& e : doc.entities) {
    if (static_cast<int>(text::code_point_length(e.content)) >= config.min_answer_chars) {
      candidates.push_back(e.index);
    }
  }
  switch (config.entity_sampling) {
    case EntitySampling::All: break;
    case EntitySampling::LongestFirst:
      std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return text::code_point_length(doc.entities[static_cast<std::size_t>(a)].content) >
               text::code_point_length(doc.entities[static_cast<std::size_t>(b)].content);
      });
      break;
    case EntitySampling::Random: {
      // Fisher-Yates with a raw 64-bit engine so the order is identical across
      // standard library implementations.
      std::mt19937_64 rng(static_cast<std::uint64_t>(config.seed) ^ hash::fnv1a64(doc.doc_id));
      for (std::size_t i = candidates.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng() % i);
        std::swap(candidates[i - 1], candidates[j]);
      }
      break;
    }
  }
  return candidates;
}

GenerationResult generate_for_document(const ParsedDocument& doc, const GenerationConfig& config,
                                       agents::Provider& generator, agents::Provider& verifier,
                                       const std::optional<agents::ImagePart>& page_image,
                                       const PromptTemplates& prompts) {
  if (config.qa_per_document < 1) throw ConfigValidationError("generation.qa_per_document", "must be >= 1");
  GenerationResult result;
  auto target = static_cast<std::size_t>(config.qa_per_document);
  for (int idx : select_candidates(doc, config)) {
    if (result.pairs.size() >= target) break;
    const auto& entity = doc.entities[static_cast<std::size_t>(idx)];
    std::string question;
    try {
      question = generate_question(generator, doc, entity, page_image, prompts);
    } catch (const GenerationFailed& e) {
      result.warnings.push_back(e.what());
      continue;
    }
    auto verdict = verify_pair(verifier, doc, question, entity.content, page_image, prompts);
    if (!verdict.passed) continue;
    QAPair pair;
    pair.qa_id = make_qa_id(doc.doc_id, entity.index, question);
    pair.doc_id = doc.doc_id;
    pair.question = std::move(question);
    pair.answer = entity.content;
    pair.gold_entity_index = entity.index;
    pair.verifier = std::move(verdict);
    result.pairs.push_back(std::move(pair));
  }
  if (result.pairs.empty()) {
    result.warnings.push_back("document " + doc.doc_id + ": no QA pair passed verification");
  }
  return result;
}

QAPair apply_review(const QAPair& pair, const ReviewAction& action, const std::string& reviewer,
                    const ParsedDocument& doc, const std::string& timestamp) {
  auto status = pair.review_status;
  bool open = status == ReviewStatus::Pending || status == ReviewStatus::Edited;
  if (!open) {
    throw IllegalTransition("pair " + pair.qa_id + " is " + std::string(to_string(status)) + " (terminal)");
  }

  QAPair out = pair;
  if (std::holds_alternative<Approve>(action)) {
    out.review_status = ReviewStatus::Approved;
    return out;
  }
  if (std::holds_alternative<Reject>(action)) {
    out.review_status = ReviewStatus::Rejected;
    return out;
  }

  const auto& edit = std::get<Edit>(action);
  if (status != ReviewStatus::Pending) {
    throw IllegalTransition("pair " + pair.qa_id + " was already edited; approve or reject it");
  }
  if (edit.field == "question") {
    auto q = text::trim(edit.new_value);
    if (q.empty()) throw RequestRejected("edited question must not be empty");
    out.edit_history.push_back({timestamp, "question", pair.question, q, reviewer});
    out.question = std::move(q);
  } else if (edit.field == "answer") {
    auto it = std::find_if(doc.entities.begin(), doc.entities.end(),
                           [&](const Entity& e) { return e.content == edit.new_value; });
    if (it == doc.entities.end()) {
      throw EditAnswerNotFound("no entity in " + doc.doc_id + " has content '" + edit.new_value + "'");
    }
    out.edit_history.push_back({timestamp, "answer", pair.answer, edit.new_value, reviewer});
    if (it->index != pair.gold_entity_index) {
      out.edit_history.push_back({timestamp, "gold_entity_index", std::to_string(pair.gold_entity_index),
                                  std::to_string(it->index), reviewer});
    }
    out.answer = edit.new_value;
    out.gold_entity_index = it->index;
  } else {
    throw RequestRejected("field '" + edit.field + "' is not editable (use question or answer)");
  }
  out.review_status = ReviewStatus::Edited;
  return out;
}

}  // namespace docs2synth::synthgen
