#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "docs2synth/pipeline.hpp"
#include "docs2synth/synthgen.hpp"

namespace docs2synth::review {

// Client mistakes the HTTP layer maps to 400, 404 and 409.
class BadRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxPageSize = 200;
inline constexpr int kDefaultPageSize = 50;

struct ListQuery {
  std::optional<synthgen::ReviewStatus> status;
  std::optional<std::string> doc_id;
  int page = 1;  // 1-based
  int page_size = kDefaultPageSize;
};

// Throws BadRequest on unknown status, non-numeric or out-of-range paging.
ListQuery parse_list_query(const std::map<std::string, std::string>& params);

struct QaPage {
  std::vector<synthgen::QAPair> items;
  std::size_t total = 0;
};

// Parses "i,j,k". Throws BadRequest on anything that is not a list of
// non-negative integers.
std::vector<int> parse_box_list(const std::string& s);

class ReviewService {
 public:
  explicit ReviewService(pipeline::Pipeline& pipeline);

  QaPage list(const ListQuery& query) const;
  synthgen::QAPair approve(const std::string& qa_id, const std::string& reviewer);
  synthgen::QAPair reject(const std::string& qa_id, const std::string& reviewer);
  synthgen::QAPair edit(const std::string& qa_id, const std::string& field, const std::string& new_value,
                        const std::string& reviewer);

  // PNG of the page with the given entity boxes outlined; no boxes means the
  // plain page re-encoded.
  std::string document_image(const std::string& doc_id, const std::optional<std::vector<int>>& boxes) const;

  // {question, doc_id, strategies, k, iterations} -> {"traces": {name: trace}}.
  // Each iteration carries annotated_image_url under /artifacts. Traces are
  // appended to compare/traces.jsonl.
  nlohmann::json compare(const nlohmann::json& request);

  nlohmann::json stats() const;

  const store::Layout& layout() const noexcept { return pipeline_.layout(); }

 private:
  synthgen::QAPair mutate(const std::string& qa_id, const synthgen::ReviewAction& action,
                          const std::string& reviewer);
  DocumentCollection documents() const;

  pipeline::Pipeline& pipeline_;
  std::mutex write_mu_;
};

}  // namespace docs2synth::review
