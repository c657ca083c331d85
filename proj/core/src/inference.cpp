#include "docs2synth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "docs2synth/errors.hpp"
#include "docs2synth/hash.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::inference {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::Trained: return "trained";
    case Strategy::Served: return "served";
    case Strategy::RagBaseline: return "rag-baseline";
  }
  return "trained";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "trained") return Strategy::Trained;
  if (name == "served") return Strategy::Served;
  if (name == "rag-baseline") return Strategy::RagBaseline;
  throw std::invalid_argument("unknown retrieval strategy '" + std::string(name) + "'");
}

std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::StableAnswer: return "stable_answer";
    case StopReason::Aborted: return "aborted";
  }
  return "max_iterations";
}

StopReason parse_stop_reason(std::string_view name) {
  if (name == "max_iterations") return StopReason::MaxIterations;
  if (name == "stable_answer") return StopReason::StableAnswer;
  if (name == "aborted") return StopReason::Aborted;
  throw std::invalid_argument("unknown stop reason '" + std::string(name) + "'");
}

void LoopConfig::validate() const {
  if (k < 1) throw ConfigValidationError("inference.k", "must be >= 1");
  if (max_iterations < 1) throw ConfigValidationError("inference.max_iterations", "must be >= 1");
  if (retriever == Strategy::Served && served_url.empty()) {
    throw ConfigValidationError("inference.served_url", "required when retriever is served");
  }
}

void to_json(json& j, const IterationRecord& r) {
  j = json{{"t", r.t},
           {"topk_indices", r.topk_indices},
           {"retrieved_contents", r.retrieved_contents},
           {"annotated_image_ref", r.annotated_image_ref},
           {"answer", r.answer}};
}

void from_json(const json& j, IterationRecord& r) {
  r.t = j.at("t").get<int>();
  r.topk_indices = j.at("topk_indices").get<std::vector<int>>();
  r.retrieved_contents = j.at("retrieved_contents").get<std::vector<std::string>>();
  r.annotated_image_ref = j.value("annotated_image_ref", "");
  r.answer = j.at("answer").get<std::string>();
}

void to_json(json& j, const InferenceTrace& t) {
  j = json{{"qa_id", t.qa_id},
           {"question", t.question},
           {"doc_id", t.doc_id},
           {"strategy", t.strategy},
           {"initial_answer", t.initial_answer},
           {"iterations", t.iterations},
           {"final_answer", t.final_answer},
           {"stop_reason", to_string(t.stop_reason)}};
  if (!t.error.empty()) j["error"] = t.error;
}

void from_json(const json& j, InferenceTrace& t) {
  t.qa_id = j.value("qa_id", "");
  t.question = j.at("question").get<std::string>();
  t.doc_id = j.at("doc_id").get<std::string>();
  t.strategy = j.value("strategy", "");
  t.initial_answer = j.value("initial_answer", "");
  t.iterations = j.at("iterations").get<std::vector<IterationRecord>>();
  t.final_answer = j.at("final_answer").get<std::string>();
  t.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
  t.error = j.value("error", "");
}

int stroke_width(int width, int height) noexcept {
  return std::max(2, static_cast<int>(std::lround(0.003 * std::max(width, height))));
}

image::RgbImage draw_boxes(image::RgbImage img, std::span<const BoundingBox> boxes) {
  const int s = stroke_width(img.width, img.height);
  auto px = [](double v, int hi) { return std::clamp(static_cast<int>(std::lround(v)), 0, hi); };
  for (const auto& b : boxes) {
    int x0 = px(b.x0, img.width), x1 = px(b.x1, img.width);
    int y0 = px(b.y0, img.height), y1 = px(b.y1, img.height);
    if (x1 <= x0 || y1 <= y0) continue;
    for (int y = y0; y < y1; ++y) {
      bool edge_row = y < y0 + s || y >= y1 - s;
      for (int x = x0; x < x1; ++x) {
        if (edge_row || x < x0 + s || x >= x1 - s) img.set(x, y, kRed);
      }
    }
  }
  return img;
}

std::string annotate_image(const std::string& image_ref, std::span<const BoundingBox> boxes) {
  image::RgbImage src;
  try {
    src = image::load(image_ref);
  } catch (const IoError& e) {
    throw UndecodableImage(e.what());
  }
  return image::encode_png(draw_boxes(std::move(src), boxes));
}

image::RgbImage load_page(const ParsedDocument& doc) {
  if (doc.image_ref.empty()) {
    int w = std::max(1, static_cast<int>(std::lround(doc.width)));
    int h = std::max(1, static_cast<int>(std::lround(doc.height)));
    return image::RgbImage(w, h);
  }
  try {
    return image::load(doc.image_ref);
  } catch (const IoError& e) {
    throw UndecodableImage(e.what());
  }
}

std::string evidence_block(std::span<const std::string> contents) {
  std::string out = "Retrieved evidence:\n";
  if (contents.empty()) return out + "(none)";
  for (std::size_t i = 0; i < contents.size(); ++i) {
    if (i) out.push_back('\n');
    out += "E" + std::to_string(i + 1) + ": " + contents[i];
  }
  return out;
}

AnswerPrompt AnswerPrompt::load(const std::string& dir) {
  AnswerPrompt p;
  auto path = fs::path(dir) / "answer_system.txt";
  if (!dir.empty() && fs::exists(path)) p.system = text::trim(text::read_file(path.string()));
  return p;
}

std::vector<agents::ChatMessage> answer_messages(const std::string& question, const std::string& page_png,
                                                 const std::string& full_text,
                                                 std::span<const std::string> contents, const AnswerPrompt& prompt) {
  std::vector<agents::ChatMessage> msgs;
  msgs.push_back(agents::ChatMessage::text(agents::Role::System, prompt.system));
  agents::ChatMessage user{agents::Role::User, {}};
  user.parts.emplace_back(agents::image_part_from_bytes(page_png));
  user.parts.emplace_back(agents::TextPart{"Document text:\n" + full_text});
  user.parts.emplace_back(agents::TextPart{evidence_block(contents)});
  user.parts.emplace_back(agents::TextPart{"Question: " + question});
  msgs.push_back(std::move(user));
  return msgs;
}

std::string generate_answer(agents::Provider& provider, const std::string& question, const std::string& page_png,
                            const std::string& full_text, std::span<const std::string> contents,
                            const AnswerPrompt& prompt) {
  auto reply = provider.complete(answer_messages(question, page_png, full_text, contents, prompt),
                                 agents::CallOptions{agents::kAnswerTemperature});
  return text::first_nonempty_line(reply.text);
}

std::string question_hash(const std::string& question, Strategy strategy) {
  auto key = strategy == Strategy::RagBaseline ? "rag-baseline:" + question : question;
  return hash::sha256_hex(key).substr(0, 16);
}

namespace {

std::string persist_annotated(const LoopContext& ctx, const ParsedDocument& doc, const std::string& qhash, int t,
                              const std::string& png) {
  if (ctx.storage_root.empty()) return {};
  auto rel = fs::path("artifacts") / "annotated" / doc.doc_id / qhash / ("t" + std::to_string(t) + ".png");
  auto abs = fs::path(ctx.storage_root) / rel;
  fs::create_directories(abs.parent_path());
  text::write_file_atomic(abs.string(), png);
  return rel.generic_string();
}

IterationRecord retrieve_and_answer(const std::string& question, const ParsedDocument& doc,
                                    const image::RgbImage& page, std::vector<int> top, int t,
                                    const std::string& qhash, LoopContext& ctx) {
  IterationRecord rec;
  rec.t = t;
  std::vector<BoundingBox> boxes;
  for (int i : top) {
    const auto& e = doc.entities.at(static_cast<std::size_t>(i));
    rec.retrieved_contents.push_back(e.content);
    boxes.push_back(e.bbox);
  }
  rec.topk_indices = std::move(top);
  auto png = image::encode_png(draw_boxes(page, boxes));
  rec.annotated_image_ref = persist_annotated(ctx, doc, qhash, t, png);
  rec.answer = generate_answer(ctx.answerer, question, png, doc.full_text, rec.retrieved_contents, ctx.prompt);
  return rec;
}

void begin_trace(InferenceTrace& trace, const std::string& question, const ParsedDocument& doc, Strategy s) {
  trace.question = question;
  trace.doc_id = doc.doc_id;
  trace.strategy = std::string(to_string(s));
  trace.iterations.clear();
  trace.final_answer.clear();
  trace.error.clear();
  trace.stop_reason = StopReason::Aborted;
  if (doc.entities.empty()) throw EmptyDocument("document " + doc.doc_id + " has no entities");
}

}  // namespace

void run_loop(const std::string& question, const ParsedDocument& doc, const LoopConfig& config, LoopContext& ctx,
              InferenceTrace& trace) {
  config.validate();
  begin_trace(trace, question, doc, config.retriever);
  if (config.retriever == Strategy::RagBaseline) {
    rag_baseline(question, doc, config.k, ctx, trace);
    return;
  }
  if (!ctx.ranker) throw ModelError("no retriever available for strategy " + trace.strategy);

  auto page = load_page(doc);
  auto qhash = question_hash(question, config.retriever);
  trace.initial_answer =
      generate_answer(ctx.answerer, question, image::encode_png(page), doc.full_text, {}, ctx.prompt);

  std::string previous = trace.initial_answer;
  for (int t = 1; t <= config.max_iterations; ++t) {
    auto logits = ctx.ranker->logits(question, previous, doc);
    if (logits.size() != doc.entities.size()) {
      throw ModelError("retriever returned " + std::to_string(logits.size()) + " logits for " +
                       std::to_string(doc.entities.size()) + " entities");
    }
    auto rec = retrieve_and_answer(question, doc, page, retriever::top_k(logits, config.k), t, qhash, ctx);
    trace.final_answer = rec.answer;
    trace.iterations.push_back(std::move(rec));
    const auto& answer = trace.final_answer;
    if (config.stop_on_stable_answer && text::normalize_answer(answer) == text::normalize_answer(previous)) {
      trace.stop_reason = StopReason::StableAnswer;
      return;
    }
    if (t == config.max_iterations) {
      trace.stop_reason = StopReason::MaxIterations;
      return;
    }
    previous = answer;
  }
}

InferenceTrace run_loop(const std::string& question, const ParsedDocument& doc, const LoopConfig& config,
                        LoopContext& ctx) {
  InferenceTrace trace;
  run_loop(question, doc, config, ctx, trace);
  return trace;
}

std::vector<int> rag_rank(const std::string& question, const ParsedDocument& doc, int k,
                          const retriever::FeatureConfig& features) {
  auto q = retriever::embed_text(question, features.text_dim, features.hash_seed);
  std::vector<double> sims;
  sims.reserve(doc.entities.size());
  for (const auto& e : doc.entities) {
    sims.push_back(retriever::cosine(q, retriever::embed_text(e.content, features.text_dim, features.hash_seed)));
  }
  return retriever::top_k(sims, k);
}

void rag_baseline(const std::string& question, const ParsedDocument& doc, int k, LoopContext& ctx,
                  InferenceTrace& trace) {
  if (k < 1) throw ConfigValidationError("inference.k", "must be >= 1");
  begin_trace(trace, question, doc, Strategy::RagBaseline);
  auto page = load_page(doc);
  auto rec = retrieve_and_answer(question, doc, page, rag_rank(question, doc, k), 1,
                                 question_hash(question, Strategy::RagBaseline), ctx);
  trace.final_answer = rec.answer;
  trace.iterations.push_back(std::move(rec));
  trace.stop_reason = StopReason::MaxIterations;
}

InferenceTrace rag_baseline(const std::string& question, const ParsedDocument& doc, int k, LoopContext& ctx) {
  InferenceTrace trace;
  rag_baseline(question, doc, k, ctx, trace);
  return trace;
}

}  // namespace docs2synth::inference
