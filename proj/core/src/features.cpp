#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "docs2synth/errors.hpp"
#include "docs2synth/hash.hpp"
#include "docs2synth/retriever.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::retriever {

namespace {

std::string normalize(std::string_view s) { return text::collapse_whitespace(text::ascii_lower(s)); }

// UTF-8 encoded trigrams of the padded, normalized string.
std::vector<std::string> padded_trigrams(std::string_view s) {
  auto norm = normalize(s);
  std::vector<std::string> out;
  if (norm.empty()) return out;
  std::u32string cps = U"\u0002";
  cps += text::to_code_points(norm);
  cps += U'\u0003';
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    out.push_back(text::to_utf8(std::u32string_view(cps).substr(i, 3)));
  }
  return out;
}

void l2_normalize(std::vector<double>& v) {
  double sq = 0;
  for (double x : v) sq += x * x;
  if (sq == 0) return;
  double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

}  // namespace

const std::array<std::string_view, kPairDim>& pair_feature_names() {
  static const std::array<std::string_view, kPairDim> names{
      "cos_question", "cos_answer", "jaccard_question", "jaccard_answer", "trigram_overlap_answer",
      "geom_x0",      "geom_y0",    "geom_x1",          "geom_y1",        "geom_width",
      "geom_height",  "geom_area",  "geom_log_aspect",  "position",       "length",
      "bias"};
  return names;
}

void to_json(nlohmann::json& j, const FeatureConfig& c) {
  std::vector<std::string> names(pair_feature_names().begin(), pair_feature_names().end());
  j = nlohmann::json{{"text_dim", c.text_dim},
                     {"hash_seed", c.hash_seed},
                     {"hidden_units", c.hidden_units},
                     {"features", names}};
}

void from_json(const nlohmann::json& j, FeatureConfig& c) {
  c.text_dim = j.at("text_dim").get<int>();
  c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
  c.hidden_units = j.value("hidden_units", 0);
  if (j.contains("features")) {
    auto names = j["features"].get<std::vector<std::string>>();
    if (!std::equal(names.begin(), names.end(), pair_feature_names().begin(), pair_feature_names().end())) {
      throw ModelError("checkpoint feature list does not match this build");
    }
  }
}

std::vector<double> embed_text(std::string_view s, int text_dim, std::uint64_t seed) {
  if (text_dim < 1) throw ModelError("text_dim must be positive");
  std::vector<double> v(static_cast<std::size_t>(text_dim), 0.0);
  const auto basis = hash::kFnvOffsetBasis ^ seed;
  for (const auto& tri : padded_trigrams(s)) {
    auto h = hash::fnv1a64(tri, basis);
    v[h % static_cast<std::uint64_t>(text_dim)] += (h >> 63) ? -1.0 : 1.0;
  }
  l2_normalize(v);
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ModelError("vector length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double token_jaccard(std::string_view a, std::string_view b) {
  auto ta = text::tokenize(a);
  auto tb = text::tokenize(b);
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

double trigram_overlap(std::string_view a, std::string_view b) {
  auto ta = padded_trigrams(a);
  auto tb = padded_trigrams(b);
  std::unordered_set<std::string> sa(ta.begin(), ta.end());
  std::unordered_set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() || sb.empty()) return 0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(std::min(sa.size(), sb.size()));
}

std::array<double, kGeomDim> geometry(const BoundingBox& box, double page_width, double page_height) {
  if (!(page_width > 0) || !(page_height > 0)) throw ModelError("page size must be positive");
  double w = box.width();
  double h = box.height();
  double aspect = (w > 0 && h > 0) ? std::log(w / h) : 0.0;
  return {box.x0 / page_width,          box.y0 / page_height, box.x1 / page_width, box.y1 / page_height,
          w / page_width,               h / page_height,      (w * h) / (page_width * page_height),
          aspect};
}

std::vector<FeatureBundle> extract_features(const ParsedDocument& doc, const FeatureConfig& config) {
  std::vector<FeatureBundle> out;
  out.reserve(doc.entities.size());
  const double n = static_cast<double>(doc.entities.size());
  for (const auto& e : doc.entities) {
    FeatureBundle b;
    b.text_vec = embed_text(e.content, config.text_dim, config.hash_seed);
    b.geom_vec = geometry(e.bbox, doc.width, doc.height);
    b.position = static_cast<double>(e.index) / n;
    b.length = std::min(static_cast<double>(text::code_point_length(e.content)), kLengthCap) / kLengthCap;
    out.push_back(std::move(b));
  }
  return out;
}

Query Query::make(std::string question, std::string answer, const FeatureConfig& config) {
  Query q;
  q.q_vec = embed_text(question, config.text_dim, config.hash_seed);
  q.a_vec = embed_text(answer, config.text_dim, config.hash_seed);
  q.question = std::move(question);
  q.answer = std::move(answer);
  return q;
}

PairFeatures pair_features(const Query& query, const FeatureBundle& bundle, std::string_view content) {
  PairFeatures phi{};
  phi[0] = cosine(query.q_vec, bundle.text_vec);
  phi[1] = cosine(query.a_vec, bundle.text_vec);
  phi[2] = token_jaccard(query.question, content);
  phi[3] = token_jaccard(query.answer, content);
  phi[4] = trigram_overlap(query.answer, content);
  std::copy(bundle.geom_vec.begin(), bundle.geom_vec.end(), phi.begin() + 5);
  phi[13] = bundle.position;
  phi[14] = bundle.length;
  phi[15] = 1.0;
  return phi;
}

std::vector<PairFeatures> document_features(const Query& query, const ParsedDocument& doc,
                                            const std::vector<FeatureBundle>& bundles) {
  if (bundles.size() != doc.entities.size()) throw ModelError("feature bundle count does not match entities");
  std::vector<PairFeatures> out;
  out.reserve(bundles.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    out.push_back(pair_features(query, bundles[i], doc.entities[i].content));
  }
  return out;
}

}  // namespace docs2synth::retriever
