#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docs2synth/agents.hpp"
#include "docs2synth/docmodel.hpp"
#include "docs2synth/image.hpp"
#include "docs2synth/retriever.hpp"

namespace docs2synth::inference {

enum class Strategy { Trained, Served, RagBaseline };
std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct LoopConfig {
  int k = 3;
  int max_iterations = 2;
  bool stop_on_stable_answer = true;
  std::string answerer_provider;
  Strategy retriever = Strategy::Trained;
  std::string served_url;

  void validate() const;
  friend bool operator==(const LoopConfig&, const LoopConfig&) = default;
};

struct IterationRecord {
  int t = 0;
  std::vector<int> topk_indices;
  std::vector<std::string> retrieved_contents;
  std::string annotated_image_ref;
  std::string answer;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

// Aborted marks a trace cut short by a provider or model error; the
// iterations that did finish are kept.
enum class StopReason { MaxIterations, StableAnswer, Aborted };
std::string_view to_string(StopReason r) noexcept;
StopReason parse_stop_reason(std::string_view name);

struct InferenceTrace {
  std::string qa_id;
  std::string question;
  std::string doc_id;
  std::string strategy;
  std::string initial_answer;
  std::vector<IterationRecord> iterations;
  std::string final_answer;
  StopReason stop_reason = StopReason::MaxIterations;
  std::string error;

  friend bool operator==(const InferenceTrace&, const InferenceTrace&) = default;
};

void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);
void to_json(nlohmann::json& j, const InferenceTrace& t);
void from_json(const nlohmann::json& j, InferenceTrace& t);

inline constexpr std::array<std::uint8_t, 3> kRed{255, 0, 0};

int stroke_width(int width, int height) noexcept;

// Outlines each box (rounded, clamped to the page) in pure red; the stroke
// lies inside the box edges.
image::RgbImage draw_boxes(image::RgbImage img, std::span<const BoundingBox> boxes);

// PNG bytes of image_ref with the boxes drawn. Throws UndecodableImage.
std::string annotate_image(const std::string& image_ref, std::span<const BoundingBox> boxes);

// The document's page raster; a blank white page of the document size when
// image_ref is empty. Throws UndecodableImage.
image::RgbImage load_page(const ParsedDocument& doc);

std::string evidence_block(std::span<const std::string> contents);

struct AnswerPrompt {
  std::string system =
      "You answer questions about a scanned document. Retrieved entities are outlined in red on the image. "
      "Reply with the answer text only, on one line.";

  // Reads answer_system.txt from dir when present.
  static AnswerPrompt load(const std::string& dir);
};

// Message order: system, page image, full text, evidence block, question.
std::vector<agents::ChatMessage> answer_messages(const std::string& question, const std::string& page_png,
                                                 const std::string& full_text,
                                                 std::span<const std::string> contents,
                                                 const AnswerPrompt& prompt = {});

// First non-empty line of the reply; "" when the reply is blank.
std::string generate_answer(agents::Provider& provider, const std::string& question, const std::string& page_png,
                            const std::string& full_text, std::span<const std::string> contents,
                            const AnswerPrompt& prompt = {});

// Directory key for annotated images of one question.
std::string question_hash(const std::string& question, Strategy strategy);

struct LoopContext {
  agents::Provider& answerer;
  retriever::EntityRanker* ranker = nullptr;  // unused by the RAG baseline
  // Annotated pages go to {storage_root}/artifacts/annotated/...; nothing is
  // written when empty.
  std::string storage_root;
  AnswerPrompt prompt;
};

// Runs the loop, filling trace as it goes so a caller that catches an error
// still sees the finished iterations.
void run_loop(const std::string& question, const ParsedDocument& doc, const LoopConfig& config, LoopContext& ctx,
              InferenceTrace& trace);
InferenceTrace run_loop(const std::string& question, const ParsedDocument& doc, const LoopConfig& config,
                        LoopContext& ctx);

// Ranks entities by cos(embed(question), text_vec).
std::vector<int> rag_rank(const std::string& question, const ParsedDocument& doc, int k,
                          const retriever::FeatureConfig& features = {});

void rag_baseline(const std::string& question, const ParsedDocument& doc, int k, LoopContext& ctx,
                  InferenceTrace& trace);
InferenceTrace rag_baseline(const std::string& question, const ParsedDocument& doc, int k, LoopContext& ctx);

}  // namespace docs2synth::inference
