#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace docs2synth {

// Axis-aligned box in source-image pixels, origin top-left, y downward.
struct BoundingBox {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;

  double width() const noexcept { return x1 - x0; }
  double height() const noexcept { return y1 - y0; }
  bool valid() const noexcept;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// One OCR unit: text content plus its box. `index` is the reading-order
// position inside the owning document.
struct Entity {
  int index = 0;
  std::string content;
  BoundingBox bbox;

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct ParsedDocument {
  std::string doc_id;
  std::string image_ref;
  double width = 0;
  double height = 0;
  std::vector<Entity> entities;
  std::string full_text;
  std::vector<BoundingBox> bbox_list;

  std::size_t size() const noexcept { return entities.size(); }

  friend bool operator==(const ParsedDocument&, const ParsedDocument&) = default;
};

struct DocumentCollection {
  std::string collection_id;
  std::vector<ParsedDocument> documents;

  const ParsedDocument* find(const std::string& doc_id) const;
};

struct TextAggregate {
  std::string full_text;
  std::vector<BoundingBox> bbox_list;
};

// Joins entity contents with "\n" in the given order. Throws EmptyDocument.
TextAggregate aggregate_text(std::span<const Entity> entities);

// Returns one human-readable line per broken invariant; empty when valid.
std::vector<std::string> validate_document(const ParsedDocument& doc);

// Serialization used by documents.jsonl. Boxes are [x0,y0,x1,y1].
void to_json(nlohmann::json& j, const BoundingBox& b);
void from_json(const nlohmann::json& j, BoundingBox& b);
void to_json(nlohmann::json& j, const Entity& e);
void from_json(const nlohmann::json& j, Entity& e);
void to_json(nlohmann::json& j, const ParsedDocument& d);
void from_json(const nlohmann::json& j, ParsedDocument& d);

}  // namespace docs2synth
