#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "docs2synth/agents.hpp"
#include "docs2synth/config.hpp"
#include "docs2synth/evalharness.hpp"
#include "docs2synth/inference.hpp"
#include "docs2synth/store.hpp"

namespace docs2synth::pipeline {

enum class Stage { Ingest, Synth, Review, Train, Infer, Eval };
inline constexpr std::array<Stage, 6> kStages{Stage::Ingest, Stage::Synth, Stage::Review,
                                              Stage::Train,  Stage::Infer, Stage::Eval};
std::string_view to_string(Stage s) noexcept;
Stage parse_stage(std::string_view name);

enum class StageStatus { Pending, Running, Done, Failed };
std::string_view to_string(StageStatus s) noexcept;
StageStatus parse_stage_status(std::string_view name);

struct StageRecord {
  Stage stage = Stage::Ingest;
  StageStatus status = StageStatus::Pending;
  std::string input_hash;
  std::vector<std::string> artifacts;  // relative to the storage root
  std::string started_at;
  std::string finished_at;
  bool skipped = false;
  std::string detail;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::string created_at;
  std::string updated_at;
  std::vector<StageRecord> stages;  // always one per stage, in order

  StageRecord& at(Stage s);
  const StageRecord& at(Stage s) const;
  static RunManifest fresh();
};

void to_json(nlohmann::json& j, const StageRecord& r);
void from_json(const nlohmann::json& j, StageRecord& r);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

// Missing file yields a fresh manifest.
RunManifest load_manifest(const std::string& path);
void save_manifest(const RunManifest& m, const std::string& path);

using ProviderFactory = std::function<std::shared_ptr<agents::Provider>(const agents::ProviderConfig&)>;

enum class StageResult { Ran, Skipped, AwaitingReview };
std::string_view to_string(StageResult r) noexcept;

struct RunOutcome {
  RunManifest manifest;
  // Set when the run stopped at the review stage with pairs still pending.
  bool awaiting_review = false;
};

class Pipeline {
 public:
  explicit Pipeline(config::PipelineConfig config, ProviderFactory factory = agents::make_provider);

  // All stages in order under the storage-root run lock. A failing stage is
  // marked failed in the manifest and rethrown as StageFailed.
  RunOutcome run_all();

  // One stage under the run lock, memoized like run_all. force re-runs it.
  StageResult run_stage(Stage stage, bool force = false);

  // Single ad-hoc question against the stored collection and checkpoint.
  inference::InferenceTrace infer_one(const std::string& question, const std::string& doc_id,
                                      const inference::LoopConfig& loop);

  const config::PipelineConfig& config() const noexcept { return config_; }
  const store::Layout& layout() const noexcept { return layout_; }
  RunManifest manifest() const;

  std::shared_ptr<agents::Provider> provider(const std::string& name);

 private:
  StageResult execute(Stage stage, RunManifest& manifest, bool force);
  std::string input_hash(Stage stage);
  std::vector<std::string> run_ingest();
  std::vector<std::string> run_synth();
  std::optional<std::string> run_review();  // detail when awaiting review
  std::vector<std::string> run_train();
  std::vector<std::string> run_infer();
  std::vector<std::string> run_eval();

  config::PipelineConfig config_;
  ProviderFactory factory_;
  store::Layout layout_;
  std::mutex providers_mu_;
  std::map<std::string, std::shared_ptr<agents::Provider>> providers_;
};

// Hash of a file's bytes; "absent" when it does not exist.
std::string file_hash(const std::string& path);

// Page image for a prompt: the source file when present, otherwise a blank
// page of the document's size.
agents::ImagePart page_image(const ParsedDocument& doc);

// Approved pairs as training samples, initial answers looked up by qa_id.
std::vector<retriever::TrainingSample> training_samples(const std::vector<synthgen::QAPair>& pairs,
                                                        const std::map<std::string, std::string>& initial_answers);

}  // namespace docs2synth::pipeline
