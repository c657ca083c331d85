#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>

#include "docs2synth/agents.hpp"
#include "docs2synth/inference.hpp"
#include "docs2synth/ingest.hpp"
#include "docs2synth/retriever.hpp"
#include "docs2synth/synthgen.hpp"

namespace docs2synth::config {

struct CollectionConfig {
  std::string id;
  std::string input_dir;
  ingest::OcrFormat ocr_format = ingest::OcrFormat::GenericJsonl;
  ingest::XYCutParams xy_cut;
  int workers = 4;

  friend bool operator==(const CollectionConfig&, const CollectionConfig&) = default;
};

struct GenerationSection {
  synthgen::GenerationConfig params;
  std::string prompts_dir;
  int workers = 4;

  friend bool operator==(const GenerationSection&, const GenerationSection&) = default;
};

struct TrainingSection {
  retriever::TrainConfig params;
  // Ask the answer provider for a no-evidence answer per training question
  // and use it as the initial answer; otherwise initial answers are empty.
  bool bootstrap_initial_answers = true;
  std::string answer_provider;

  friend bool operator==(const TrainingSection&, const TrainingSection&) = default;
};

struct InferenceSection {
  inference::LoopConfig loop;
  bool compare_rag_baseline = true;
  int workers = 4;

  friend bool operator==(const InferenceSection&, const InferenceSection&) = default;
};

struct ReviewServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  // Name of the env var holding the bearer token; empty disables auth.
  std::string token_env;
  std::string static_dir;

  friend bool operator==(const ReviewServerConfig&, const ReviewServerConfig&) = default;
};

struct ReviewConfig {
  bool auto_approve = false;
  std::string reviewer = "auto";
  ReviewServerConfig server;

  friend bool operator==(const ReviewConfig&, const ReviewConfig&) = default;
};

struct PipelineConfig {
  CollectionConfig collection;
  std::map<std::string, agents::ProviderConfig> providers;
  GenerationSection generation;
  TrainingSection training;
  InferenceSection inference;
  ReviewConfig review;
  std::string storage_root;
  std::int64_t seed = 0;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

// Relative paths resolve against base_dir (the config file's directory).
// Throws ConfigParseError (line/column) and ConfigValidationError (key path).
PipelineConfig parse_config(const std::string& yaml_text, const std::string& base_dir);
PipelineConfig load_config(const std::string& path);

// Full YAML with every default written out; paths are absolute.
std::string to_yaml(const PipelineConfig& config);

// Canonical JSON form; its subsections feed stage memoization hashes.
nlohmann::json to_json(const PipelineConfig& config);

// Checks cross-field rules (provider references, ranges).
void validate(const PipelineConfig& config);

}  // namespace docs2synth::config
