#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "docs2synth/agents.hpp"
#include "docs2synth/docmodel.hpp"

namespace docs2synth::synthgen {

enum class ReviewStatus { Pending, Approved, Rejected, Edited };
std::string_view to_string(ReviewStatus s) noexcept;
// Throws std::invalid_argument on unknown names.
ReviewStatus parse_review_status(std::string_view name);

struct VerifierVerdict {
  bool relevant_and_clear = false;
  bool answer_valid = false;
  std::string rationale;
  bool passed = false;

  friend bool operator==(const VerifierVerdict&, const VerifierVerdict&) = default;
};

struct EditRecord {
  std::string timestamp;
  std::string field;
  std::string old_value;
  std::string new_value;
  std::string reviewer;

  friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

struct QAPair {
  std::string qa_id;
  std::string doc_id;
  std::string question;
  std::string answer;
  int gold_entity_index = 0;
  VerifierVerdict verifier;
  ReviewStatus review_status = ReviewStatus::Pending;
  std::vector<EditRecord> edit_history;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

void to_json(nlohmann::json& j, const VerifierVerdict& v);
void from_json(const nlohmann::json& j, VerifierVerdict& v);
void to_json(nlohmann::json& j, const EditRecord& e);
void from_json(const nlohmann::json& j, EditRecord& e);
void to_json(nlohmann::json& j, const QAPair& p);
void from_json(const nlohmann::json& j, QAPair& p);

enum class EntitySampling { All, Random, LongestFirst };
std::string_view to_string(EntitySampling s) noexcept;
EntitySampling parse_entity_sampling(std::string_view name);

struct GenerationConfig {
  int qa_per_document = 10;
  EntitySampling entity_sampling = EntitySampling::All;
  int min_answer_chars = 2;
  std::string generator_provider;
  std::string verifier_provider;
  std::int64_t seed = 0;

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

// Prompt bodies with {{full_text}}, {{answer}}, {{bbox}} and {{question}}
// placeholders.
struct PromptTemplates {
  std::string generation_system;
  std::string generation_user;
  std::string verification_system;
  std::string verification_user;

  static PromptTemplates defaults();
  // Reads generation_system.txt, generation.txt, verification_system.txt and
  // verification.txt from dir; missing files keep the default.
  static PromptTemplates load(const std::string& dir);
};

inline constexpr std::string_view kVerdictSchema =
    R"({"relevant_and_clear": boolean, "answer_valid": boolean, "rationale": string})";
inline constexpr std::string_view kUnparseableRationale = "verifier output unparseable";

// Stable identifier: hash of doc_id, gold index and question.
std::string make_qa_id(const std::string& doc_id, int gold_entity_index, const std::string& question);

// Asks the generator for one question whose answer is entity.content.
// Throws GenerationFailed on an empty reply.
std::string generate_question(agents::Provider& provider, const ParsedDocument& doc, const Entity& entity,
                              const std::optional<agents::ImagePart>& page_image,
                              const PromptTemplates& prompts = PromptTemplates::defaults());

// Fails closed: an unparseable verifier reply yields passed=false.
VerifierVerdict verify_pair(agents::Provider& provider, const ParsedDocument& doc, const std::string& question,
                            const std::string& answer, const std::optional<agents::ImagePart>& page_image,
                            const PromptTemplates& prompts = PromptTemplates::defaults());

// Entity indices in the order they will be tried.
std::vector<int> select_candidates(const ParsedDocument& doc, const GenerationConfig& config);

struct GenerationResult {
  std::vector<QAPair> pairs;
  std::vector<std::string> warnings;
};

GenerationResult generate_for_document(const ParsedDocument& doc, const GenerationConfig& config,
                                       agents::Provider& generator, agents::Provider& verifier,
                                       const std::optional<agents::ImagePart>& page_image,
                                       const PromptTemplates& prompts = PromptTemplates::defaults());

struct Approve {};
struct Reject {};
struct Edit {
  std::string field;  // "question" or "answer"
  std::string new_value;
};
using ReviewAction = std::variant<Approve, Reject, Edit>;

// Legal moves: pending -> approved | rejected | edited, edited -> approved |
// rejected. Editing the answer re-points gold_entity_index at the first
// entity (reading order) whose content equals the new answer.
// Throws IllegalTransition, EditAnswerNotFound, RequestRejected (bad edit).
QAPair apply_review(const QAPair& pair, const ReviewAction& action, const std::string& reviewer,
                    const ParsedDocument& doc, const std::string& timestamp);

}  // namespace docs2synth::synthgen
