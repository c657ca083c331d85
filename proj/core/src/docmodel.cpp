#include "docs2synth/docmodel.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth {

bool BoundingBox::valid() const noexcept {
  for (double v : {x0, y0, x1, y1}) {
    if (!std::isfinite(v) || v < 0) return false;
  }
  return x0 < x1 && y0 < y1;
}

const ParsedDocument* DocumentCollection::find(const std::string& doc_id) const {
  for (const auto& d : documents) {
    if (d.doc_id == doc_id) return &d;
  }
  return nullptr;
}

TextAggregate aggregate_text(std::span<const Entity> entities) {
  if (entities.empty()) throw EmptyDocument("cannot aggregate an empty entity list");
  TextAggregate out;
  out.bbox_list.reserve(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (i > 0) out.full_text.push_back('\n');
    out.full_text += entities[i].content;
    out.bbox_list.push_back(entities[i].bbox);
  }
  return out;
}

std::vector<std::string> validate_document(const ParsedDocument& doc) {
  std::vector<std::string> violations;
  auto entity_prefix = [](std::size_t i) { return "entity " + std::to_string(i) + ": "; };

  if (doc.entities.empty()) violations.push_back("entities: document has no entities");
  if (doc.entities.size() != doc.bbox_list.size()) {
    violations.push_back("bbox_list: length " + std::to_string(doc.bbox_list.size()) +
                         " does not match entities length " + std::to_string(doc.entities.size()));
  }
  if (!(doc.width > 0) || !(doc.height > 0)) {
    violations.push_back("width/height: page dimensions must be positive");
  }

  std::set<int> seen;
  for (std::size_t i = 0; i < doc.entities.size(); ++i) {
    const auto& e = doc.entities[i];
    const auto& b = e.bbox;
    auto p = entity_prefix(i);
    if (text::trim(e.content).empty()) violations.push_back(p + "content is empty after trimming");
    if (!seen.insert(e.index).second) violations.push_back(p + "duplicate index " + std::to_string(e.index));
    bool finite = std::isfinite(b.x0) && std::isfinite(b.y0) && std::isfinite(b.x1) && std::isfinite(b.y1);
    if (!finite) {
      violations.push_back(p + "bbox has non-finite coordinates");
      continue;
    }
    if (b.x0 < 0 || b.y0 < 0 || b.x1 < 0 || b.y1 < 0) violations.push_back(p + "bbox has negative coordinates");
    if (b.x0 >= b.x1) violations.push_back(p + "bbox x0 ≥ x1");
    if (b.y0 >= b.y1) violations.push_back(p + "bbox y0 ≥ y1");
    if (b.x1 > doc.width || b.y1 > doc.height) violations.push_back(p + "bbox exceeds page bounds");
    if (i < doc.bbox_list.size() && !(doc.bbox_list[i] == b)) {
      violations.push_back("bbox_list[" + std::to_string(i) + "]: differs from entity bbox");
    }
  }

  if (!doc.entities.empty()) {
    auto agg = aggregate_text(doc.entities);
    if (agg.full_text != doc.full_text) {
      violations.push_back("full_text: does not equal newline-joined entity contents");
    }
  }
  return violations;
}

void to_json(nlohmann::json& j, const BoundingBox& b) { j = nlohmann::json::array({b.x0, b.y0, b.x1, b.y1}); }

void from_json(const nlohmann::json& j, BoundingBox& b) {
  if (!j.is_array() || j.size() != 4) throw FormatError("bbox must be a 4-element array");
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(nlohmann::json& j, const Entity& e) {
  j = nlohmann::json{{"index", e.index}, {"content", e.content}, {"bbox", e.bbox}};
}

void from_json(const nlohmann::json& j, Entity& e) {
  e.index = j.at("index").get<int>();
  e.content = j.at("content").get<std::string>();
  e.bbox = j.at("bbox").get<BoundingBox>();
}

void to_json(nlohmann::json& j, const ParsedDocument& d) {
  j = nlohmann::json{{"doc_id", d.doc_id},       {"image_ref", d.image_ref}, {"width", d.width},
                     {"height", d.height},       {"entities", d.entities},   {"full_text", d.full_text},
                     {"bbox_list", d.bbox_list}};
}

void from_json(const nlohmann::json& j, ParsedDocument& d) {
  d.doc_id = j.at("doc_id").get<std::string>();
  d.image_ref = j.at("image_ref").get<std::string>();
  d.width = j.at("width").get<double>();
  d.height = j.at("height").get<double>();
  d.entities = j.at("entities").get<std::vector<Entity>>();
  d.full_text = j.at("full_text").get<std::string>();
  d.bbox_list = j.at("bbox_list").get<std::vector<BoundingBox>>();
}

}  // namespace docs2synth
