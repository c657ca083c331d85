#include "docs2synth/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "docs2synth/errors.hpp"
#include "docs2synth/image.hpp"
#include "docs2synth/parallel.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

OcrFormat parse_format(std::string_view name) {
  if (name == "paddleocr") return OcrFormat::PaddleOcr;
  if (name == "docling") return OcrFormat::Docling;
  if (name == "generic-jsonl") return OcrFormat::GenericJsonl;
  throw UnsupportedFormat("unknown OCR format '" + std::string(name) + "'");
}

std::string_view format_name(OcrFormat format) noexcept {
  switch (format) {
    case OcrFormat::PaddleOcr: return "paddleocr";
    case OcrFormat::Docling: return "docling";
    case OcrFormat::GenericJsonl: return "generic-jsonl";
  }
  return "generic-jsonl";
}

std::string_view ocr_extension(OcrFormat format) noexcept {
  return format == OcrFormat::GenericJsonl ? ".jsonl" : ".json";
}

void XYCutParams::validate() const {
  if (!(min_gap_ratio > 0 && min_gap_ratio <= 5)) {
    throw ConfigValidationError("xy_cut.min_gap_ratio", "must be in (0, 5]");
  }
  if (max_depth < 1) throw ConfigValidationError("xy_cut.max_depth", "must be >= 1");
}

namespace {

std::string record_ref(std::size_t record, std::size_t offset) {
  return "record " + std::to_string(record) + " (byte offset " + std::to_string(offset) + ")";
}

bool is_point(const json& p) {
  return p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number();
}

bool is_polygon(const json& poly) {
  return poly.is_array() && poly.size() >= 2 && std::all_of(poly.begin(), poly.end(), is_point);
}

BoundingBox polygon_bounds(const json& poly) {
  BoundingBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    double x = p[0].get<double>();
    double y = p[1].get<double>();
    b.x0 = std::min(b.x0, x);
    b.y0 = std::min(b.y0, y);
    b.x1 = std::max(b.x1, x);
    b.y1 = std::max(b.y1, y);
  }
  return b;
}

BoundingBox box_from_array(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 4 || !std::all_of(arr.begin(), arr.end(), [](const json& v) { return v.is_number(); })) {
    throw FormatError(where + ": box must be [x0, y0, x1, y1]");
  }
  BoundingBox b{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(), arr[3].get<double>()};
  if (b.x0 > b.x1) std::swap(b.x0, b.x1);
  if (b.y0 > b.y1) std::swap(b.y0, b.y1);
  return b;
}

void push_item(std::vector<RawOcrItem>& out, std::string text, BoundingBox box, std::optional<double> conf,
               const std::string& where) {
  if (text::trim(text).empty()) return;
  for (double v : {box.x0, box.y0, box.x1, box.y1}) {
    if (!std::isfinite(v)) throw FormatError(where + ": non-finite coordinate");
  }
  if (!(box.x1 > box.x0) || !(box.y1 > box.y0)) throw FormatError(where + ": box has zero area");
  if (conf && (*conf < 0 || *conf > 1)) throw FormatError(where + ": confidence outside [0, 1]");
  out.push_back({std::move(text), box, conf});
}

json parse_json_document(std::string_view payload) {
  try {
    return json::parse(payload);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON at byte offset " + std::to_string(e.byte) + ": " + e.what());
  }
}

OcrPage parse_generic_jsonl(std::string_view payload) {
  OcrPage page;
  std::size_t offset = 0;
  std::size_t record = 0;
  while (offset < payload.size()) {
    auto end = payload.find('\n', offset);
    if (end == std::string_view::npos) end = payload.size();
    auto line = payload.substr(offset, end - offset);
    auto line_offset = offset;
    offset = end + 1;
    if (text::trim(line).empty()) continue;
    ++record;
    auto where = record_ref(record, line_offset);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw FormatError(where + ": expected object with string field \"text\"");
    }
    BoundingBox box;
    if (j.contains("box")) {
      box = box_from_array(j["box"], where);
    } else if (j.contains("polygon") && is_polygon(j["polygon"])) {
      box = polygon_bounds(j["polygon"]);
    } else {
      throw FormatError(where + ": missing \"box\" or \"polygon\"");
    }
    std::optional<double> conf;
    if (j.contains("confidence") && !j["confidence"].is_null()) {
      if (!j["confidence"].is_number()) throw FormatError(where + ": confidence must be a number");
      conf = j["confidence"].get<double>();
    }
    push_item(page.items, j["text"].get<std::string>(), box, conf, where);
  }
  return page;
}

// Classic PaddleOCR line: [[[x,y] x4], ["text", score]].
bool is_paddle_line(const json& line) {
  if (!line.is_array() || line.size() != 2 || !is_polygon(line[0])) return false;
  const auto& rec = line[1];
  return rec.is_string() || (rec.is_array() && !rec.empty() && rec[0].is_string());
}

void parse_paddle_lines(const json& lines, OcrPage& page) {
  std::size_t record = 0;
  for (const auto& line : lines) {
    ++record;
    auto where = "record " + std::to_string(record);
    if (!is_paddle_line(line)) throw FormatError(where + ": expected [polygon, [text, score]]");
    const auto& rec = line[1];
    std::string txt = rec.is_string() ? rec.get<std::string>() : rec[0].get<std::string>();
    std::optional<double> conf;
    if (rec.is_array() && rec.size() > 1 && rec[1].is_number()) conf = rec[1].get<double>();
    push_item(page.items, std::move(txt), polygon_bounds(line[0]), conf, where);
  }
}

OcrPage parse_paddle(std::string_view payload) {
  auto root = parse_json_document(payload);
  OcrPage page;

  // PaddleOCR 3.x result object, optionally wrapped in {"res": ...}.
  const json* res = &root;
  if (root.is_object() && root.contains("res") && root["res"].is_object()) res = &root["res"];
  if (res->is_object() && res->contains("rec_texts")) {
    const auto& texts = (*res)["rec_texts"];
    const json* polys = res->contains("rec_polys") ? &(*res)["rec_polys"] : nullptr;
    const json* boxes = res->contains("rec_boxes") ? &(*res)["rec_boxes"] : nullptr;
    const json* scores = res->contains("rec_scores") ? &(*res)["rec_scores"] : nullptr;
    if (!texts.is_array()) throw FormatError("rec_texts must be an array");
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto where = "record " + std::to_string(i + 1);
      if (!texts[i].is_string()) throw FormatError(where + ": rec_texts entry is not a string");
      BoundingBox box;
      if (polys && i < polys->size() && is_polygon((*polys)[i])) {
        box = polygon_bounds((*polys)[i]);
      } else if (boxes && i < boxes->size()) {
        box = box_from_array((*boxes)[i], where);
      } else {
        throw FormatError(where + ": no polygon or box for text");
      }
      std::optional<double> conf;
      if (scores && i < scores->size() && (*scores)[i].is_number()) conf = (*scores)[i].get<double>();
      push_item(page.items, texts[i].get<std::string>(), box, conf, where);
    }
    return page;
  }

  if (!root.is_array()) throw FormatError("expected a PaddleOCR result array or object");
  if (root.empty()) return page;

  // PPOCRLabel annotation list: [{"transcription": ..., "points": [...]}].
  if (root[0].is_object()) {
    std::size_t record = 0;
    for (const auto& obj : root) {
      ++record;
      auto where = "record " + std::to_string(record);
      if (!obj.is_object() || !obj.contains("transcription") || !obj.contains("points") ||
          !obj["transcription"].is_string() || !is_polygon(obj["points"])) {
        throw FormatError(where + ": expected {transcription, points}");
      }
      push_item(page.items, obj["transcription"].get<std::string>(), polygon_bounds(obj["points"]), std::nullopt,
                where);
    }
    return page;
  }

  // ocr.ocr() output is either a flat list of lines or one list per page.
  if (is_paddle_line(root[0])) {
    parse_paddle_lines(root, page);
  } else if (root[0].is_array() || root[0].is_null()) {
    if (!root[0].is_null()) parse_paddle_lines(root[0], page);
  } else {
    throw FormatError("record 1: unrecognized PaddleOCR structure");
  }
  return page;
}

OcrPage parse_docling(std::string_view payload) {
  auto root = parse_json_document(payload);
  if (!root.is_object() || !root.contains("texts") || !root["texts"].is_array()) {
    throw FormatError("docling export must be an object with a \"texts\" array");
  }
  constexpr int kPage = 1;
  std::optional<std::pair<double, double>> page_size;
  if (root.contains("pages") && root["pages"].is_object()) {
    auto key = std::to_string(kPage);
    if (root["pages"].contains(key)) {
      const auto& size = root["pages"][key].value("size", json::object());
      if (size.contains("width") && size.contains("height")) {
        page_size = std::make_pair(size["width"].get<double>(), size["height"].get<double>());
      }
    }
  }

  OcrPage page;
  page.page_size = page_size;
  std::size_t record = 0;
  for (const auto& item : root["texts"]) {
    ++record;
    auto where = "record " + std::to_string(record);
    if (!item.is_object() || !item.contains("text") || !item["text"].is_string()) {
      throw FormatError(where + ": text item without string \"text\"");
    }
    if (!item.contains("prov") || !item["prov"].is_array()) continue;
    for (const auto& prov : item["prov"]) {
      if (prov.value("page_no", kPage) != kPage) continue;
      if (!prov.contains("bbox") || !prov["bbox"].is_object()) throw FormatError(where + ": prov without bbox");
      const auto& b = prov["bbox"];
      for (const char* k : {"l", "t", "r", "b"}) {
        if (!b.contains(k) || !b[k].is_number()) throw FormatError(where + ": bbox missing '" + k + "'");
      }
      double l = b["l"].get<double>();
      double t = b["t"].get<double>();
      double r = b["r"].get<double>();
      double bottom = b["b"].get<double>();
      auto origin = b.value("coord_origin", std::string("TOPLEFT"));
      BoundingBox box;
      if (origin == "BOTTOMLEFT") {
        if (!page_size) throw FormatError(where + ": BOTTOMLEFT coordinates need pages.1.size.height");
        double h = page_size->second;
        box = {l, h - t, r, h - bottom};
      } else if (origin == "TOPLEFT") {
        box = {l, t, r, bottom};
      } else {
        throw FormatError(where + ": unknown coord_origin '" + origin + "'");
      }
      if (box.x0 > box.x1) std::swap(box.x0, box.x1);
      if (box.y0 > box.y1) std::swap(box.y0, box.y1);
      push_item(page.items, item["text"].get<std::string>(), box, std::nullopt, where);
    }
  }
  return page;
}

enum class Axis { Y, X };

Axis other(Axis a) { return a == Axis::Y ? Axis::X : Axis::Y; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Split {
  double gap_start = 0;
  double width = 0;
};

// Widest empty interval on the projection axis that exceeds threshold; the
// lowest-coordinate gap wins ties.
std::optional<Split> widest_gap(const std::vector<BoundingBox>& boxes, const std::vector<std::size_t>& group, Axis axis,
                                double threshold) {
  std::vector<std::pair<double, double>> spans;
  spans.reserve(group.size());
  for (auto i : group) {
    const auto& b = boxes[i];
    spans.emplace_back(axis == Axis::Y ? std::make_pair(b.y0, b.y1) : std::make_pair(b.x0, b.x1));
  }
  std::sort(spans.begin(), spans.end());
  std::optional<Split> best;
  double reach = spans.front().second;
  for (std::size_t k = 1; k < spans.size(); ++k) {
    double gap = spans[k].first - reach;
    if (gap > threshold && (!best || gap > best->width)) best = Split{reach, gap};
    reach = std::max(reach, spans[k].second);
  }
  return best;
}

void sort_leaf(const std::vector<BoundingBox>& boxes, std::vector<std::size_t>& group) {
  std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = boxes[a];
    const auto& q = boxes[b];
    return std::tie(p.y0, p.x0, p.y1, p.x1, a) < std::tie(q.y0, q.x0, q.y1, q.x1, b);
  });
}

void cut(const std::vector<BoundingBox>& boxes, std::vector<std::size_t> group, Axis axis, int depth,
         const XYCutParams& params, std::vector<std::size_t>& out) {
  if (group.size() > 1 && depth < params.max_depth) {
    std::vector<double> heights;
    heights.reserve(group.size());
    for (auto i : group) heights.push_back(boxes[i].height());
    double threshold = params.min_gap_ratio * median(std::move(heights));

    for (Axis a : {axis, other(axis)}) {
      auto split = widest_gap(boxes, group, a, threshold);
      if (!split) continue;
      std::vector<std::size_t> before;
      std::vector<std::size_t> after;
      for (auto i : group) {
        double hi = a == Axis::Y ? boxes[i].y1 : boxes[i].x1;
        (hi <= split->gap_start ? before : after).push_back(i);
      }
      cut(boxes, std::move(before), other(a), depth + 1, params, out);
      cut(boxes, std::move(after), other(a), depth + 1, params, out);
      return;
    }
  }
  sort_leaf(boxes, group);
  out.insert(out.end(), group.begin(), group.end());
}

}  // namespace

OcrPage parse_ocr_page(std::string_view payload, OcrFormat format) {
  switch (format) {
    case OcrFormat::GenericJsonl: return parse_generic_jsonl(payload);
    case OcrFormat::PaddleOcr: return parse_paddle(payload);
    case OcrFormat::Docling: return parse_docling(payload);
  }
  throw UnsupportedFormat("unknown OCR format");
}

std::vector<RawOcrItem> parse_ocr_output(std::string_view payload, OcrFormat format) {
  return parse_ocr_page(payload, format).items;
}

std::vector<std::size_t> xy_cut_order(const std::vector<BoundingBox>& boxes, const XYCutParams& params) {
  if (boxes.empty()) throw EmptyDocument("xy_cut_order needs at least one box");
  params.validate();
  std::vector<std::size_t> all(boxes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<std::size_t> order;
  order.reserve(boxes.size());
  Axis first = params.axis_order == AxisOrder::YFirst ? Axis::Y : Axis::X;
  cut(boxes, std::move(all), first, 0, params, order);
  return order;
}

std::vector<std::size_t> xy_cut_order(const std::vector<RawOcrItem>& items, const XYCutParams& params) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(items.size());
  for (const auto& it : items) boxes.push_back(it.box);
  return xy_cut_order(boxes, params);
}

BuildResult build_document(std::string doc_id, std::string image_ref, double width, double height,
                           std::vector<RawOcrItem> items, const XYCutParams& params) {
  if (items.empty()) throw EmptyDocument("document " + doc_id + " has no OCR items");
  if (!(width > 0) || !(height > 0)) throw FormatError("document " + doc_id + ": page size must be positive");

  BuildResult result;
  std::vector<RawOcrItem> kept;
  kept.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& it = items[i];
    it.text = text::trim(it.text);
    if (it.text.empty()) continue;
    BoundingBox clamped{std::clamp(it.box.x0, 0.0, width), std::clamp(it.box.y0, 0.0, height),
                        std::clamp(it.box.x1, 0.0, width), std::clamp(it.box.y1, 0.0, height)};
    if (!(clamped == it.box)) {
      result.warnings.push_back("document " + doc_id + ": item " + std::to_string(i) + " box clamped to page");
    }
    if (!clamped.valid()) {
      result.warnings.push_back("document " + doc_id + ": item " + std::to_string(i) +
                                " dropped (no area inside page)");
      continue;
    }
    it.box = clamped;
    kept.push_back(std::move(it));
  }
  if (kept.empty()) throw EmptyDocument("document " + doc_id + " has no usable OCR items");

  auto order = xy_cut_order(kept, params);
  auto& doc = result.document;
  doc.doc_id = std::move(doc_id);
  doc.image_ref = std::move(image_ref);
  doc.width = width;
  doc.height = height;
  doc.entities.reserve(kept.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    auto& it = kept[order[rank]];
    doc.entities.push_back(Entity{static_cast<int>(rank), std::move(it.text), it.box});
  }
  auto agg = aggregate_text(doc.entities);
  doc.full_text = std::move(agg.full_text);
  doc.bbox_list = std::move(agg.bbox_list);
  return result;
}

namespace {

bool is_page_image(const fs::path& p) {
  auto ext = text::ascii_lower(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

IngestResult ingest_collection(const std::string& input_dir, const IngestConfig& config) {
  config.xy_cut.validate();
  fs::path dir(input_dir);
  if (!fs::is_directory(dir)) throw EmptyCollection("input directory does not exist: " + input_dir);

  std::map<std::string, fs::path> images;  // sorted by doc_id
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_page_image(entry.path())) {
      images.emplace(entry.path().stem().string(), entry.path());
    }
  }

  std::vector<std::pair<std::string, fs::path>> pages(images.begin(), images.end());
  std::vector<std::optional<ParsedDocument>> docs(pages.size());
  std::vector<std::vector<std::string>> warnings(pages.size());
  auto ext = std::string(ocr_extension(config.format));

  parallel_for(pages.size(), config.workers, [&](std::size_t i) {
    const auto& [doc_id, image_path] = pages[i];
    auto ocr_path = dir / (doc_id + ext);
    if (!fs::exists(ocr_path)) {
      warnings[i].push_back("document " + doc_id + ": no OCR file " + ocr_path.filename().string() + ", skipped");
      return;
    }
    try {
      auto size = image::probe_size(text::read_file(image_path.string()));
      auto page = parse_ocr_page(text::read_file(ocr_path.string()), config.format);
      if (page.page_size && page.page_size->first > 0 && page.page_size->second > 0) {
        double sx = size.width / page.page_size->first;
        double sy = size.height / page.page_size->second;
        if (sx != 1.0 || sy != 1.0) {
          for (auto& it : page.items) it.box = {it.box.x0 * sx, it.box.y0 * sy, it.box.x1 * sx, it.box.y1 * sy};
        }
      }
      auto built = build_document(doc_id, image_path.string(), size.width, size.height, std::move(page.items),
                                  config.xy_cut);
      warnings[i] = std::move(built.warnings);
      docs[i] = std::move(built.document);
    } catch (const Error& e) {
      warnings[i].push_back("document " + doc_id + ": skipped: " + e.what());
    }
  });

  IngestResult result;
  result.collection.collection_id = fs::absolute(dir).lexically_normal().filename().string();
  if (result.collection.collection_id.empty()) {
    result.collection.collection_id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  }
  for (std::size_t i = 0; i < pages.size(); ++i) {
    for (auto& w : warnings[i]) result.warnings.push_back(std::move(w));
    if (docs[i]) result.collection.documents.push_back(std::move(*docs[i]));
  }
  if (result.collection.documents.empty()) {
    throw EmptyCollection("no image/OCR pairs could be ingested from " + input_dir);
  }
  return result;
}

}  // namespace docs2synth::ingest
