#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docs2synth/docmodel.hpp"

namespace docs2synth::ingest {

struct RawOcrItem {
  std::string text;
  BoundingBox box;
  std::optional<double> confidence;
};

enum class OcrFormat { PaddleOcr, Docling, GenericJsonl };

// "paddleocr", "docling", "generic-jsonl". Throws UnsupportedFormat.
OcrFormat parse_format(std::string_view name);
std::string_view format_name(OcrFormat format) noexcept;
// File extension paired with a page image of the same basename.
std::string_view ocr_extension(OcrFormat format) noexcept;

enum class AxisOrder { YFirst, XFirst };

struct XYCutParams {
  double min_gap_ratio = 0.5;
  int max_depth = 64;
  AxisOrder axis_order = AxisOrder::YFirst;

  // Throws ConfigValidationError on out-of-range values.
  void validate() const;
  friend bool operator==(const XYCutParams&, const XYCutParams&) = default;
};

struct OcrPage {
  std::vector<RawOcrItem> items;
  // Page size in the coordinate space of the items, when the format states it.
  std::optional<std::pair<double, double>> page_size;
};

// Parses one OCR output file. Empty-text records are dropped and polygons
// reduced to their vertex min/max rectangle. Throws FormatError naming the
// record (1-based) or byte offset on malformed input.
std::vector<RawOcrItem> parse_ocr_output(std::string_view payload, OcrFormat format);
OcrPage parse_ocr_page(std::string_view payload, OcrFormat format);

// Reading order by recursive XY-cut. Returns a permutation of item indices.
// Throws EmptyDocument on empty input.
std::vector<std::size_t> xy_cut_order(const std::vector<RawOcrItem>& items, const XYCutParams& params = {});
std::vector<std::size_t> xy_cut_order(const std::vector<BoundingBox>& boxes, const XYCutParams& params = {});

struct BuildResult {
  ParsedDocument document;
  std::vector<std::string> warnings;
};

BuildResult build_document(std::string doc_id, std::string image_ref, double width, double height,
                           std::vector<RawOcrItem> items, const XYCutParams& params = {});

struct IngestConfig {
  OcrFormat format = OcrFormat::GenericJsonl;
  XYCutParams xy_cut;
  int workers = 4;
};

struct IngestResult {
  DocumentCollection collection;
  std::vector<std::string> warnings;
};

// Pairs every page image (png/jpg/jpeg) in input_dir with the OCR file of the
// same basename. Unpaired or unusable pages are skipped with a warning.
// Throws EmptyCollection when nothing could be ingested.
IngestResult ingest_collection(const std::string& input_dir, const IngestConfig& config);

}  // namespace docs2synth::ingest
