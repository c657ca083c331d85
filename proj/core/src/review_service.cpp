#include "docs2synth/review_service.hpp"

#include <charconv>
#include <filesystem>

#include "docs2synth/errors.hpp"
#include "docs2synth/store.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int parse_int(const std::string& name, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw BadRequest(name + " must be an integer, got '" + value + "'");
  }
  return out;
}

}  // namespace

ListQuery parse_list_query(const std::map<std::string, std::string>& params) {
  ListQuery q;
  for (const auto& [key, value] : params) {
    if (key == "status") {
      if (value.empty()) continue;
      try {
        q.status = synthgen::parse_review_status(value);
      } catch (const std::invalid_argument&) {
        throw BadRequest("unknown status '" + value + "'");
      }
    } else if (key == "doc_id") {
      if (!value.empty()) q.doc_id = value;
    } else if (key == "page") {
      q.page = parse_int("page", value);
      if (q.page < 1) throw BadRequest("page must be >= 1");
    } else if (key == "page_size") {
      q.page_size = parse_int("page_size", value);
      if (q.page_size < 1 || q.page_size > kMaxPageSize) {
        throw BadRequest("page_size must be in [1, " + std::to_string(kMaxPageSize) + "]");
      }
    } else {
      throw BadRequest("unknown query parameter '" + key + "'");
    }
  }
  return q;
}

std::vector<int> parse_box_list(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    auto item = text::trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    int v = parse_int("boxes", item);
    if (v < 0) throw BadRequest("boxes must be non-negative");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

ReviewService::ReviewService(pipeline::Pipeline& pipeline) : pipeline_(pipeline) {}

DocumentCollection ReviewService::documents() const { return store::load_documents(layout().documents()); }

QaPage ReviewService::list(const ListQuery& query) const {
  auto pairs = store::load_qa(layout().qa());
  std::erase_if(pairs, [&](const synthgen::QAPair& p) {
    if (query.status && p.review_status != *query.status) return true;
    if (query.doc_id && p.doc_id != *query.doc_id) return true;
    return false;
  });
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.qa_id < b.qa_id; });
  QaPage page;
  page.total = pairs.size();
  auto begin = static_cast<std::size_t>(query.page - 1) * static_cast<std::size_t>(query.page_size);
  for (auto i = begin; i < pairs.size() && i < begin + static_cast<std::size_t>(query.page_size); ++i) {
    page.items.push_back(std::move(pairs[i]));
  }
  return page;
}

synthgen::QAPair ReviewService::mutate(const std::string& qa_id, const synthgen::ReviewAction& action,
                                       const std::string& reviewer) {
  std::lock_guard lock(write_mu_);
  auto pairs = store::load_qa(layout().qa());
  auto it = std::find_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.qa_id == qa_id; });
  if (it == pairs.end()) throw NotFound("no QA pair " + qa_id);
  auto docs = documents();
  const auto* doc = docs.find(it->doc_id);
  if (!doc) throw NotFound("document " + it->doc_id + " of QA pair " + qa_id + " is missing");
  auto updated = synthgen::apply_review(*it, action, reviewer, *doc, text::utc_timestamp());
  store::JsonlWriter writer(layout().qa());
  writer.append(json(updated));
  return updated;
}

synthgen::QAPair ReviewService::approve(const std::string& qa_id, const std::string& reviewer) {
  return mutate(qa_id, synthgen::Approve{}, reviewer);
}

synthgen::QAPair ReviewService::reject(const std::string& qa_id, const std::string& reviewer) {
  return mutate(qa_id, synthgen::Reject{}, reviewer);
}

synthgen::QAPair ReviewService::edit(const std::string& qa_id, const std::string& field,
                                     const std::string& new_value, const std::string& reviewer) {
  if (field != "question" && field != "answer") {
    throw BadRequest("field must be question or answer, got '" + field + "'");
  }
  if (field == "question" && text::trim(new_value).empty()) throw BadRequest("question must not be empty");
  return mutate(qa_id, synthgen::Edit{field, new_value}, reviewer);
}

std::string ReviewService::document_image(const std::string& doc_id,
                                           const std::optional<std::vector<int>>& boxes) const {
  auto docs = documents();
  const auto* doc = docs.find(doc_id);
  if (!doc) throw NotFound("no document " + doc_id);
  std::vector<BoundingBox> rects;
  if (boxes) {
    for (int i : *boxes) {
      if (i < 0 || static_cast<std::size_t>(i) >= doc->entities.size()) {
        throw BadRequest("entity index " + std::to_string(i) + " out of range for " + doc_id + " (" +
                         std::to_string(doc->entities.size()) + " entities)");
      }
      rects.push_back(doc->entities[static_cast<std::size_t>(i)].bbox);
    }
  }
  return image::encode_png(inference::draw_boxes(inference::load_page(*doc), rects));
}

json ReviewService::compare(const json& request) {
  if (!request.is_object()) throw BadRequest("request body must be a JSON object");
  auto str = [&](const char* key) {
    if (!request.contains(key) || !request[key].is_string() || request[key].get<std::string>().empty()) {
      throw BadRequest(std::string(key) + " must be a non-empty string");
    }
    return request[key].get<std::string>();
  };
  auto question = str("question");
  auto doc_id = str("doc_id");
  const auto& defaults = pipeline_.config().inference.loop;
  auto loop = defaults;
  if (request.contains("k")) {
    if (!request["k"].is_number_integer() || request["k"].get<int>() < 1) throw BadRequest("k must be an integer >= 1");
    loop.k = request["k"].get<int>();
  }
  if (request.contains("iterations")) {
    if (!request["iterations"].is_number_integer() || request["iterations"].get<int>() < 1) {
      throw BadRequest("iterations must be an integer >= 1");
    }
    loop.max_iterations = request["iterations"].get<int>();
  }
  std::vector<inference::Strategy> strategies;
  if (!request.contains("strategies") || !request["strategies"].is_array() || request["strategies"].empty()) {
    throw BadRequest("strategies must be a non-empty array");
  }
  for (const auto& s : request["strategies"]) {
    if (!s.is_string()) throw BadRequest("strategies must be strings");
    try {
      auto parsed = inference::parse_strategy(s.get<std::string>());
      if (std::find(strategies.begin(), strategies.end(), parsed) != strategies.end()) {
        throw BadRequest("duplicate strategy " + s.get<std::string>());
      }
      strategies.push_back(parsed);
    } catch (const std::invalid_argument& e) {
      throw BadRequest(e.what());
    }
  }

  auto docs = documents();
  const auto* doc = docs.find(doc_id);
  if (!doc) throw NotFound("no document " + doc_id);

  std::unique_ptr<retriever::EntityRanker> trained;
  if (std::find(strategies.begin(), strategies.end(), inference::Strategy::Trained) != strategies.end()) {
    if (!fs::exists(layout().checkpoint())) {
      throw MissingCheckpoint("no trained checkpoint; run `docs2synth train` first");
    }
    trained = std::make_unique<retriever::TrainedRanker>(retriever::load_checkpoint(layout().checkpoint()).model);
  }
  std::unique_ptr<retriever::EntityRanker> served;
  if (std::find(strategies.begin(), strategies.end(), inference::Strategy::Served) != strategies.end()) {
    if (loop.served_url.empty()) throw BadRequest("served strategy needs inference.served_url in the config");
    served = std::make_unique<retriever::ServedRanker>(loop.served_url);
  }

  auto answerer = pipeline_.provider(loop.answerer_provider);
  auto prompt = inference::AnswerPrompt::load(pipeline_.config().generation.prompts_dir);
  json traces = json::object();
  std::vector<json> records;
  for (auto s : strategies) {
    auto cfg = loop;
    cfg.retriever = s;
    auto* ranker = s == inference::Strategy::Trained ? trained.get() : served.get();
    inference::LoopContext ctx{*answerer, ranker, layout().root, prompt};
    auto trace = inference::run_loop(question, *doc, cfg, ctx);
    json tj = trace;
    for (auto& it : tj["iterations"]) {
      auto ref = it.value("annotated_image_ref", "");
      std::string prefix = "artifacts/";
      it["annotated_image_url"] = ref.rfind(prefix, 0) == 0 ? "/" + ref : "";
    }
    traces[std::string(inference::to_string(s))] = tj;
    records.emplace_back(trace);
  }
  {
    std::lock_guard lock(write_mu_);
    fs::create_directories(fs::path(layout().compare_traces()).parent_path());
    store::JsonlWriter writer(layout().compare_traces());
    writer.append_all(records);
  }
  return json{{"traces", traces}};
}

json ReviewService::stats() const {
  auto pairs = store::load_qa(layout().qa());
  std::map<std::string, std::size_t> counts{{"pending", 0}, {"approved", 0}, {"rejected", 0}, {"edited", 0}};
  for (const auto& p : pairs) ++counts[std::string(synthgen::to_string(p.review_status))];
  auto docs = documents();
  return json{{"total", pairs.size()},
              {"counts", counts},
              {"documents", docs.documents.size()},
              {"checkpoint", fs::exists(layout().checkpoint())}};
}

}  // namespace docs2synth::review
