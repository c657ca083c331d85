#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "docs2synth/errors.hpp"
#include "docs2synth/image.hpp"
#include "docs2synth/ingest.hpp"
#include "test_support.hpp"

using namespace docs2synth;
using namespace docs2synth::ingest;

namespace {

RawOcrItem item(std::string text, BoundingBox box) { return RawOcrItem{std::move(text), box, std::nullopt}; }

const BoundingBox kTL{0, 0, 100, 40}, kTR{200, 0, 300, 40}, kBL{0, 100, 100, 140}, kBR{200, 100, 300, 140};

}  // namespace

TEST(ParseOcr, GenericJsonlLine) {
  auto items = parse_ocr_output(R"({"text":"Score","box":[10,10,60,30]})", OcrFormat::GenericJsonl);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].text, "Score");
  EXPECT_EQ(items[0].box, (BoundingBox{10, 10, 60, 30}));
}

TEST(ParseOcr, PaddlePolygonReducedToBounds) {
  auto payload = R"([[[[10,10],[60,12],[60,30],[10,28]], ["Total", 0.98]]])";
  auto items = parse_ocr_output(payload, OcrFormat::PaddleOcr);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].box, (BoundingBox{10, 10, 60, 30}));
  ASSERT_TRUE(items[0].confidence);
  EXPECT_DOUBLE_EQ(*items[0].confidence, 0.98);
}

TEST(ParseOcr, PaddleResultObject) {
  auto payload = R"({"res": {"rec_texts": ["A", "", "B"],
                             "rec_polys": [[[0,0],[5,0],[5,5],[0,5]], [[1,1],[2,1],[2,2],[1,2]], [[0,10],[5,10],[5,15],[0,15]]],
                             "rec_scores": [0.9, 0.1, 0.8]}})";
  auto items = parse_ocr_output(payload, OcrFormat::PaddleOcr);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[1].text, "B");
  EXPECT_EQ(items[1].box, (BoundingBox{0, 10, 5, 15}));
}

TEST(ParseOcr, EmptyTextDropped) {
  auto payload = "{\"text\":\"  \",\"box\":[0,0,5,5]}\n{\"text\":\"keep\",\"box\":[0,0,5,5]}\n";
  auto items = parse_ocr_output(payload, OcrFormat::GenericJsonl);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].text, "keep");
}

TEST(ParseOcr, MalformedNamesRecord) {
  auto payload = "{\"text\":\"a\",\"box\":[0,0,5,5]}\n{\"text\":\"b\"\n";
  try {
    parse_ocr_output(payload, OcrFormat::GenericJsonl);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(ParseOcr, MalformedJsonNamesByteOffset) {
  try {
    parse_ocr_output("{\"texts\": [", OcrFormat::Docling);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(ParseOcr, UnknownFormatName) { EXPECT_THROW(parse_format("tesseract-hocr"), UnsupportedFormat); }

TEST(ParseOcr, DoclingBottomLeftFlipped) {
  auto payload = R"({"pages": {"1": {"size": {"width": 200, "height": 100}}},
                     "texts": [{"text": "Hi", "prov": [{"page_no": 1,
                       "bbox": {"l": 10, "t": 90, "r": 50, "b": 70, "coord_origin": "BOTTOMLEFT"}}]},
                               {"text": "other page", "prov": [{"page_no": 2,
                       "bbox": {"l": 1, "t": 1, "r": 2, "b": 2}}]}]})";
  auto page = parse_ocr_page(payload, OcrFormat::Docling);
  ASSERT_EQ(page.items.size(), 1u);
  EXPECT_EQ(page.items[0].box, (BoundingBox{10, 10, 50, 30}));
  ASSERT_TRUE(page.page_size);
  EXPECT_EQ(page.page_size->first, 200);
}

TEST(XYCut, SingleBox) {
  std::vector<BoundingBox> b{{1, 1, 5, 5}};
  EXPECT_EQ(xy_cut_order(b), (std::vector<std::size_t>{0}));
}

TEST(XYCut, EmptyThrows) {
  std::vector<BoundingBox> none;
  EXPECT_THROW(xy_cut_order(none), EmptyDocument);
}

TEST(XYCut, FourBoxGrid) {
  std::vector<BoundingBox> b{kBR, kTL, kBL, kTR};
  EXPECT_EQ(xy_cut_order(b), (std::vector<std::size_t>{1, 3, 2, 0}));
}

TEST(XYCut, TwoColumnPage) {
  // Left and right rows are staggered so no horizontal cut spans the page.
  BoundingBox L1{0, 0, 100, 50}, L2{0, 60, 100, 110}, R1{200, 30, 300, 80}, R2{200, 90, 300, 140};
  std::vector<BoundingBox> b{R2, L2, R1, L1};
  EXPECT_EQ(xy_cut_order(b), (std::vector<std::size_t>{3, 1, 2, 0}));
}

TEST(XYCut, XFirstAxisOrder) {
  std::vector<BoundingBox> b{kTL, kTR, kBL, kBR};
  XYCutParams p;
  p.axis_order = AxisOrder::XFirst;
  EXPECT_EQ(xy_cut_order(b, p), (std::vector<std::size_t>{0, 2, 1, 3}));
}

TEST(XYCut, MaxDepthOneFallsBackToLeafOrder) {
  // One y-cut only; each half is then a leaf sorted by (y0, x0).
  std::vector<BoundingBox> b{{200, 5, 300, 40}, {0, 0, 100, 40}, {0, 100, 100, 140}};
  XYCutParams p;
  p.max_depth = 1;
  EXPECT_EQ(xy_cut_order(b, p), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(XYCut, InvalidParamsRejected) {
  XYCutParams p;
  p.min_gap_ratio = 0;
  EXPECT_THROW(p.validate(), ConfigValidationError);
  p.min_gap_ratio = 6;
  EXPECT_THROW(p.validate(), ConfigValidationError);
  p = {};
  p.max_depth = 0;
  EXPECT_THROW(p.validate(), ConfigValidationError);
}

TEST(XYCut, RandomVerticalStacksMatchSortByY0) {
  std::mt19937_64 rng(20240305);
  std::uniform_real_distribution<double> gap(0.5, 80), height(5, 60), left(0, 200), right(300, 600);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng() % 25);
    std::vector<BoundingBox> boxes;
    double y = 0;
    for (int i = 0; i < n; ++i) {
      double h = height(rng);
      boxes.push_back({left(rng), y, right(rng), y + h});
      y += h + gap(rng);
    }
    std::shuffle(boxes.begin(), boxes.end(), rng);
    std::vector<std::size_t> want(boxes.size());
    std::iota(want.begin(), want.end(), 0);
    std::sort(want.begin(), want.end(), [&](auto a, auto b) { return boxes[a].y0 < boxes[b].y0; });
    ASSERT_EQ(xy_cut_order(boxes), want) << "trial " << trial;
  }
}

TEST(XYCut, PermutationAndShuffleInvariance) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(0, 900), size(5, 100);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng() % 30);
    std::vector<BoundingBox> boxes;
    for (int i = 0; i < n; ++i) {
      double x = pos(rng), y = pos(rng);
      boxes.push_back({x, y, x + size(rng), y + size(rng)});
    }
    auto order = xy_cut_order(boxes);
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> ids(boxes.size());
    std::iota(ids.begin(), ids.end(), 0);
    ASSERT_EQ(sorted, ids);

    std::vector<BoundingBox> seq;
    for (auto i : order) seq.push_back(boxes[i]);
    auto shuffled = boxes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<BoundingBox> seq2;
    for (auto i : xy_cut_order(shuffled)) seq2.push_back(shuffled[i]);
    ASSERT_EQ(seq, seq2) << "trial " << trial;
  }
}

TEST(XYCut, WideningGapsKeepsOrder) {
  std::vector<BoundingBox> b{kBR, kTL, kBL, kTR};
  auto base = xy_cut_order(b);
  for (double f : {1.5, 2.0, 4.0}) {
    // Scale positions about the origin while keeping box sizes: every gap grows.
    std::vector<BoundingBox> wide;
    for (const auto& x : b) wide.push_back({x.x0 * f, x.y0 * f, x.x0 * f + x.width(), x.y0 * f + x.height()});
    EXPECT_EQ(xy_cut_order(wide), base);
  }
}

TEST(XYCut, TwoHundredStacksUnderOneSecond) {
  std::mt19937_64 rng(5);
  auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BoundingBox> boxes;
    double y = 0;
    for (int i = 0; i < 50; ++i) {
      boxes.push_back({10, y, 500, y + 12});
      y += 12 + static_cast<double>(rng() % 30);
    }
    xy_cut_order(boxes);
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
}

TEST(BuildDocument, TopBottom) {
  std::vector<RawOcrItem> items{item("bottom", {0, 100, 50, 120}), item("top", {0, 0, 50, 20})};
  auto r = build_document("d", "", 200, 200, items);
  EXPECT_EQ(r.document.full_text, "top\nbottom");
  EXPECT_EQ(r.document.entities[0].index, 0);
  EXPECT_EQ(r.document.entities[1].index, 1);
  EXPECT_TRUE(validate_document(r.document).empty());
}

TEST(BuildDocument, GridReadingOrder) {
  std::vector<RawOcrItem> items{item("BR", kBR), item("TL", kTL), item("BL", kBL), item("TR", kTR)};
  auto r = build_document("d", "", 400, 200, items);
  EXPECT_EQ(r.document.full_text, "TL\nTR\nBL\nBR");
}

TEST(BuildDocument, ClampsOversizedBox) {
  std::vector<RawOcrItem> items{item("wide", {10, 10, 205, 30}), item("ok", {10, 50, 100, 70})};
  auto r = build_document("d", "", 200, 100, items);
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.document.entities[0].bbox.x1, 200);
  EXPECT_TRUE(validate_document(r.document).empty());
}

class IngestCollection : public ::testing::Test {
 protected:
  void add_page(const std::string& id, bool with_ocr) {
    testkit::write_file(dir.file(id + ".png"), image::encode_png(image::RgbImage(120, 80)));
    if (with_ocr) {
      testkit::write_file(dir.file(id + ".jsonl"),
                          "{\"text\":\"Name\",\"box\":[5,5,40,15]}\n{\"text\":\"" + id + "\",\"box\":[50,5,110,15]}\n");
    }
  }
  testkit::TempDir dir;
};

TEST_F(IngestCollection, FivePairedFiles) {
  for (auto id : {"e", "b", "a", "d", "c"}) add_page(id, true);
  auto r = ingest_collection(dir.path(), {});
  ASSERT_EQ(r.collection.documents.size(), 5u);
  EXPECT_EQ(r.collection.documents.front().doc_id, "a");
  EXPECT_EQ(r.collection.documents.back().doc_id, "e");
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.collection.documents[0].width, 120);
}

TEST_F(IngestCollection, MissingOcrSkippedWithWarning) {
  for (auto id : {"a", "b", "c", "d"}) add_page(id, true);
  add_page("z", false);
  auto r = ingest_collection(dir.path(), {});
  EXPECT_EQ(r.collection.documents.size(), 4u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("z"), std::string::npos);
}

TEST_F(IngestCollection, EmptyDirectory) { EXPECT_THROW(ingest_collection(dir.path(), {}), EmptyCollection); }

TEST_F(IngestCollection, DoclingScaledToImagePixels) {
  testkit::write_file(dir.file("p.png"), image::encode_png(image::RgbImage(200, 100)));
  testkit::write_file(dir.file("p.json"), R"({"pages": {"1": {"size": {"width": 100, "height": 50}}},
      "texts": [{"text": "Hi", "prov": [{"page_no": 1, "bbox": {"l": 10, "t": 5, "r": 20, "b": 10}}]}]})");
  IngestConfig c;
  c.format = OcrFormat::Docling;
  auto r = ingest_collection(dir.path(), c);
  ASSERT_EQ(r.collection.documents.size(), 1u);
  EXPECT_EQ(r.collection.documents[0].entities[0].bbox, (BoundingBox{20, 10, 40, 20}));
}
