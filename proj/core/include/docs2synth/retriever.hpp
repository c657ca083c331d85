#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docs2synth/agents.hpp"
#include "docs2synth/docmodel.hpp"

namespace docs2synth::retriever {

inline constexpr int kDefaultTextDim = 1024;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5EED;
inline constexpr std::size_t kGeomDim = 8;
inline constexpr std::size_t kPairDim = 16;
inline constexpr std::string_view kModelVersion = "1.0";
// Content length saturates here before normalization.
inline constexpr double kLengthCap = 64.0;

using PairFeatures = std::array<double, kPairDim>;

struct FeatureConfig {
  int text_dim = kDefaultTextDim;
  std::uint64_t hash_seed = kDefaultHashSeed;
  int hidden_units = 0;  // 0 = linear scorer

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Names of the pairwise features, in weight order.
const std::array<std::string_view, kPairDim>& pair_feature_names();

void to_json(nlohmann::json& j, const FeatureConfig& c);
void from_json(const nlohmann::json& j, FeatureConfig& c);

// Signed-hash character-trigram embedding. The normalized string is padded
// with U+0002 / U+0003 so one- and two-character strings still produce a
// trigram. L2-normalized; all-zero for empty input.
std::vector<double> embed_text(std::string_view s, int text_dim = kDefaultTextDim,
                               std::uint64_t seed = kDefaultHashSeed);

// 0 when either vector has zero norm. Throws ModelError on length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

// |A ∩ B| / |A ∪ B| over tokenize() sets; 0 when both are empty.
double token_jaccard(std::string_view a, std::string_view b);

// |A ∩ B| / min(|A|, |B|) over padded character-trigram sets.
double trigram_overlap(std::string_view a, std::string_view b);

struct FeatureBundle {
  std::vector<double> text_vec;
  std::array<double, kGeomDim> geom_vec{};
  double position = 0;
  double length = 0;  // min(code points, kLengthCap) / kLengthCap
};

std::array<double, kGeomDim> geometry(const BoundingBox& box, double page_width, double page_height);

std::vector<FeatureBundle> extract_features(const ParsedDocument& doc, const FeatureConfig& config = {});

// The question/answer side of φ, embedded once per query.
struct Query {
  std::string question;
  std::string answer;
  std::vector<double> q_vec;
  std::vector<double> a_vec;

  static Query make(std::string question, std::string answer, const FeatureConfig& config);
};

PairFeatures pair_features(const Query& query, const FeatureBundle& bundle, std::string_view content);

// φ for every entity of doc.
std::vector<PairFeatures> document_features(const Query& query, const ParsedDocument& doc,
                                            const std::vector<FeatureBundle>& bundles);

struct ScoringModel {
  FeatureConfig feature_config;
  // Linear: kPairDim weights. MLP: hidden×kPairDim row-major W1, then hidden w2.
  std::vector<double> weights;
  std::string version{kModelVersion};
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t expected_weight_count() const noexcept;
  // Throws ModelError if weights do not fit feature_config or are not finite.
  void check() const;

  static ScoringModel linear(FeatureConfig config = {});
  // Xavier-uniform initialization from seed.
  static ScoringModel mlp(FeatureConfig config, std::uint64_t seed);
};

double score(const ScoringModel& model, const PairFeatures& phi);
double score_entity(const ScoringModel& model, const Query& query, const FeatureBundle& bundle,
                    std::string_view content);

std::vector<double> predict(const ScoringModel& model, const Query& query, const ParsedDocument& doc,
                            const std::vector<FeatureBundle>& bundles);
// Throws EmptyDocument for a document without entities.
std::vector<double> predict(const ScoringModel& model, const std::string& question, const std::string& answer,
                            const ParsedDocument& doc);

std::vector<double> softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> logits, std::size_t gold);

// Loss of one sample and its gradient w.r.t. model.weights (accumulated into
// grad, which must have the weight count).
double loss_and_gradient(const ScoringModel& model, std::span<const PairFeatures> phis, std::size_t gold,
                         std::span<double> grad);

// Indices of the k largest logits, descending, ties to the lower index.
std::vector<int> top_k(std::span<const double> logits, int k);

struct AdamWParams {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWParams&, const AdamWParams&) = default;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

// Decoupled weight decay: θ -= lr·λ·θ, then the bias-corrected Adam step.
void adamw_step(std::span<double> weights, std::span<const double> grad, AdamWState& state,
                const AdamWParams& params);

struct TrainingSample {
  std::string qa_id;
  std::string question;
  std::string initial_answer;
  std::string doc_id;
  int gold_index = 0;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

void to_json(nlohmann::json& j, const TrainingSample& s);
void from_json(const nlohmann::json& j, TrainingSample& s);

struct TrainConfig {
  int batch_size = 16;
  AdamWParams optimizer;
  int epochs = 10;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  int top_k = 3;
  FeatureConfig features;
  int workers = 4;  // feature precomputation only

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_top1 = 0;
  double val_topk = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::vector<std::string> val_doc_ids;
  double seconds = 0;
};

void to_json(nlohmann::json& j, const EpochStats& e);
void to_json(nlohmann::json& j, const TrainReport& r);

struct TrainResult {
  ScoringModel model;
  AdamWState optimizer;
  TrainReport report;
};

// Documents with fewer than two ids go entirely to training; otherwise at
// least one document is held out.
std::vector<std::string> split_validation_docs(std::vector<std::string> doc_ids, double val_fraction,
                                               std::uint64_t seed);

// Throws InsufficientData, NonFiniteLoss, ModelError (unknown doc / gold out
// of range).
TrainResult train(const std::vector<TrainingSample>& samples, const DocumentCollection& docs,
                  const TrainConfig& config);

struct RetrieverCheckpoint {
  ScoringModel model;
  AdamWState optimizer;
};

// Layout: "D2SCKPT\0", u32 LE header length, JSON header, then weights, m
// and v as little-endian float64.
std::string serialize_checkpoint(const RetrieverCheckpoint& ckpt);
RetrieverCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const RetrieverCheckpoint& ckpt, const std::string& path);
void save_checkpoint(const ScoringModel& model, const std::string& path);
// Throws VersionMismatch, CorruptCheckpoint.
RetrieverCheckpoint load_checkpoint(const std::string& path);

// Anything that can rank a document's entities for a (question, answer).
class EntityRanker {
 public:
  virtual ~EntityRanker() = default;
  virtual std::vector<double> logits(const std::string& question, const std::string& answer,
                                     const ParsedDocument& doc) = 0;
};

class TrainedRanker : public EntityRanker {
 public:
  explicit TrainedRanker(ScoringModel model);
  std::vector<double> logits(const std::string& question, const std::string& answer,
                             const ParsedDocument& doc) override;
  const ScoringModel& model() const noexcept { return model_; }

 private:
  ScoringModel model_;
};

// POST {url}/score {question, answer, doc} -> {"logits": [...]}.
class ServedRanker : public EntityRanker {
 public:
  ServedRanker(std::string url, std::shared_ptr<agents::HttpTransport> transport = nullptr,
               std::chrono::seconds timeout = std::chrono::seconds(60));
  std::vector<double> logits(const std::string& question, const std::string& answer,
                             const ParsedDocument& doc) override;

 private:
  std::string url_;
  std::shared_ptr<agents::HttpTransport> transport_;
  std::chrono::seconds timeout_;
};

}  // namespace docs2synth::retriever
