#include "docs2synth/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <initializer_list>
#include <stdexcept>

#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

template <typename T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) {
    return "a boolean";
  } else if constexpr (std::is_integral_v<T>) {
    return "an integer";
  } else if constexpr (std::is_floating_point_v<T>) {
    return "a number";
  } else {
    return "a string";
  }
}

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!node || node.IsNull()) return;
  if (!node.IsMap()) throw ConfigValidationError(path.empty() ? "<root>" : path, "expected a mapping");
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigValidationError(join(path, key), "unknown key");
    }
  }
}

YAML::Node child(const YAML::Node& node, const char* key) {
  if (!node || !node.IsMap()) return YAML::Node();
  return node[key];
}

template <typename T>
void read(const YAML::Node& node, const char* key, const std::string& path, T& out) {
  auto v = child(node, key);
  if (!v || v.IsNull()) return;
  if (!v.IsScalar()) throw ConfigValidationError(join(path, key), std::string("expected ") + type_name<T>());
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigValidationError(join(path, key), std::string("expected ") + type_name<T>());
  }
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

template <typename E, typename Parse>
void read_enum(const YAML::Node& node, const char* key, const std::string& path, E& out, Parse parse) {
  std::string name;
  read(node, key, path, name);
  if (name.empty()) return;
  try {
    out = parse(name);
  } catch (const std::exception& e) {
    throw ConfigValidationError(join(path, key), "unsupported value '" + name + "'");
  }
}

void parse_collection(const YAML::Node& n, const std::string& base, CollectionConfig& c) {
  const std::string path = "collection";
  if (!n || n.IsNull()) throw ConfigValidationError(path, "required");
  check_keys(n, path, {"id", "input_dir", "ocr_format", "xy_cut", "workers"});
  read(n, "id", path, c.id);
  read(n, "input_dir", path, c.input_dir);
  c.input_dir = resolve(base, c.input_dir);
  read_enum(n, "ocr_format", path, c.ocr_format, ingest::parse_format);
  read(n, "workers", path, c.workers);
  auto xy = child(n, "xy_cut");
  const std::string xpath = "collection.xy_cut";
  check_keys(xy, xpath, {"min_gap_ratio", "max_depth", "first_axis"});
  read(xy, "min_gap_ratio", xpath, c.xy_cut.min_gap_ratio);
  read(xy, "max_depth", xpath, c.xy_cut.max_depth);
  std::string axis;
  read(xy, "first_axis", xpath, axis);
  if (axis == "x") {
    c.xy_cut.axis_order = ingest::AxisOrder::XFirst;
  } else if (axis == "y" || axis.empty()) {
    c.xy_cut.axis_order = ingest::AxisOrder::YFirst;
  } else {
    throw ConfigValidationError("collection.xy_cut.first_axis", "must be x or y");
  }
  if (c.id.empty() && !c.input_dir.empty()) c.id = fs::path(c.input_dir).filename().string();
}

void parse_providers(const YAML::Node& n, const std::string& base,
                     std::map<std::string, agents::ProviderConfig>& out) {
  if (!n || n.IsNull()) throw ConfigValidationError("providers", "at least one provider is required");
  if (!n.IsMap()) throw ConfigValidationError("providers", "expected a mapping of provider names");
  for (const auto& kv : n) {
    agents::ProviderConfig p;
    p.name = kv.first.as<std::string>();
    const std::string path = "providers." + p.name;
    const auto& node = kv.second;
    check_keys(node, path,
               {"kind", "base_url", "api_key_env", "model", "temperature", "max_tokens", "timeout_s", "max_retries",
                "fixture", "requests_per_minute", "max_in_flight"});
    std::string kind;
    read(node, "kind", path, kind);
    if (kind.empty()) throw ConfigValidationError(path + ".kind", "required");
    try {
      p.kind = agents::parse_provider_kind(kind);
    } catch (const ConfigValidationError&) {
      throw ConfigValidationError(path + ".kind", "unsupported value '" + kind + "'");
    }
    read(node, "base_url", path, p.base_url);
    read(node, "api_key_env", path, p.api_key_env);
    read(node, "model", path, p.model);
    auto t = child(node, "temperature");
    if (t && !t.IsNull()) {
      double temperature = 0;
      read(node, "temperature", path, temperature);
      p.temperature = temperature;
    }
    read(node, "max_tokens", path, p.max_tokens);
    read(node, "timeout_s", path, p.timeout_s);
    read(node, "max_retries", path, p.max_retries);
    read(node, "fixture", path, p.fixture_path);
    p.fixture_path = resolve(base, p.fixture_path);
    read(node, "requests_per_minute", path, p.requests_per_minute);
    read(node, "max_in_flight", path, p.max_in_flight);
    out.emplace(p.name, std::move(p));
  }
}

void parse_generation(const YAML::Node& n, const std::string& base, GenerationSection& g) {
  const std::string path = "generation";
  check_keys(n, path,
             {"generator_provider", "verifier_provider", "qa_per_document", "entity_sampling", "min_answer_chars",
              "prompts_dir", "workers"});
  read(n, "generator_provider", path, g.params.generator_provider);
  read(n, "verifier_provider", path, g.params.verifier_provider);
  read(n, "qa_per_document", path, g.params.qa_per_document);
  read_enum(n, "entity_sampling", path, g.params.entity_sampling, synthgen::parse_entity_sampling);
  read(n, "min_answer_chars", path, g.params.min_answer_chars);
  read(n, "prompts_dir", path, g.prompts_dir);
  g.prompts_dir = resolve(base, g.prompts_dir);
  read(n, "workers", path, g.workers);
}

void parse_training(const YAML::Node& n, TrainingSection& t) {
  const std::string path = "training";
  check_keys(n, path,
             {"batch_size", "learning_rate", "beta1", "beta2", "epsilon", "weight_decay", "epochs", "val_fraction",
              "top_k", "text_dim", "hash_seed", "hidden_units", "bootstrap_initial_answers", "answer_provider",
              "workers"});
  auto& p = t.params;
  read(n, "batch_size", path, p.batch_size);
  read(n, "learning_rate", path, p.optimizer.learning_rate);
  read(n, "beta1", path, p.optimizer.beta1);
  read(n, "beta2", path, p.optimizer.beta2);
  read(n, "epsilon", path, p.optimizer.epsilon);
  read(n, "weight_decay", path, p.optimizer.weight_decay);
  read(n, "epochs", path, p.epochs);
  read(n, "val_fraction", path, p.val_fraction);
  read(n, "top_k", path, p.top_k);
  read(n, "text_dim", path, p.features.text_dim);
  read(n, "hash_seed", path, p.features.hash_seed);
  read(n, "hidden_units", path, p.features.hidden_units);
  read(n, "workers", path, p.workers);
  read(n, "bootstrap_initial_answers", path, t.bootstrap_initial_answers);
  read(n, "answer_provider", path, t.answer_provider);
}

void parse_inference(const YAML::Node& n, InferenceSection& s) {
  const std::string path = "inference";
  check_keys(n, path,
             {"k", "max_iterations", "stop_on_stable_answer", "answerer_provider", "retriever", "served_url",
              "compare_rag_baseline", "workers"});
  read(n, "k", path, s.loop.k);
  read(n, "max_iterations", path, s.loop.max_iterations);
  read(n, "stop_on_stable_answer", path, s.loop.stop_on_stable_answer);
  read(n, "answerer_provider", path, s.loop.answerer_provider);
  read_enum(n, "retriever", path, s.loop.retriever, inference::parse_strategy);
  read(n, "served_url", path, s.loop.served_url);
  read(n, "compare_rag_baseline", path, s.compare_rag_baseline);
  read(n, "workers", path, s.workers);
}

void parse_review(const YAML::Node& n, const std::string& base, ReviewConfig& r) {
  const std::string path = "review";
  check_keys(n, path, {"auto_approve", "reviewer", "server"});
  read(n, "auto_approve", path, r.auto_approve);
  read(n, "reviewer", path, r.reviewer);
  auto s = child(n, "server");
  const std::string spath = "review.server";
  check_keys(s, spath, {"host", "port", "token_env", "static_dir"});
  read(s, "host", spath, r.server.host);
  read(s, "port", spath, r.server.port);
  read(s, "token_env", spath, r.server.token_env);
  read(s, "static_dir", spath, r.server.static_dir);
  r.server.static_dir = resolve(base, r.server.static_dir);
}

std::string default_provider(const PipelineConfig& c, const std::string& key_path) {
  if (c.providers.size() == 1) return c.providers.begin()->first;
  throw ConfigValidationError(key_path, "required when more than one provider is configured");
}

void require_provider(const PipelineConfig& c, const std::string& key_path, const std::string& name) {
  if (!c.providers.count(name)) throw ConfigValidationError(key_path, "unknown provider '" + name + "'");
}

YAML::Node to_node(const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      YAML::Node n(YAML::NodeType::Map);
      for (const auto& [k, v] : j.items()) n[k] = to_node(v);
      return n;
    }
    case json::value_t::array: {
      YAML::Node n(YAML::NodeType::Sequence);
      for (const auto& v : j) n.push_back(to_node(v));
      return n;
    }
    case json::value_t::boolean: return YAML::Node(j.get<bool>());
    case json::value_t::number_integer: return YAML::Node(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return YAML::Node(j.get<std::uint64_t>());
    case json::value_t::number_float: return YAML::Node(j.get<double>());
    case json::value_t::string: return YAML::Node(j.get<std::string>());
    default: return YAML::Node(YAML::NodeType::Null);
  }
}

}  // namespace

PipelineConfig parse_config(const std::string& yaml_text, const std::string& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ConfigParseError(e.msg + " (line " + std::to_string(e.mark.line + 1) + ", column " +
                               std::to_string(e.mark.column + 1) + ")",
                           e.mark.line + 1, e.mark.column + 1);
  }
  if (!root || root.IsNull()) throw ConfigValidationError("collection", "required");
  check_keys(root, "",
             {"collection", "providers", "generation", "training", "inference", "review", "storage", "seed"});

  auto base = fs::absolute(base_dir.empty() ? fs::path(".") : fs::path(base_dir)).lexically_normal().string();
  PipelineConfig c;
  parse_collection(root["collection"], base, c.collection);
  parse_providers(root["providers"], base, c.providers);
  parse_generation(root["generation"], base, c.generation);
  parse_training(root["training"], c.training);
  parse_inference(root["inference"], c.inference);
  parse_review(root["review"], base, c.review);
  auto storage = root["storage"];
  check_keys(storage, "storage", {"root_dir"});
  c.storage_root = "docs2synth_store";
  read(storage, "root_dir", "storage", c.storage_root);
  c.storage_root = resolve(base, c.storage_root);
  read(root, "seed", "", c.seed);

  auto& gen = c.generation.params;
  if (gen.generator_provider.empty()) gen.generator_provider = default_provider(c, "generation.generator_provider");
  if (gen.verifier_provider.empty()) gen.verifier_provider = default_provider(c, "generation.verifier_provider");
  auto& loop = c.inference.loop;
  if (loop.answerer_provider.empty()) loop.answerer_provider = default_provider(c, "inference.answerer_provider");
  if (c.training.answer_provider.empty()) c.training.answer_provider = loop.answerer_provider;
  gen.seed = c.seed;
  c.training.params.seed = static_cast<std::uint64_t>(c.seed);

  validate(c);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigValidationError("config", "file not found: " + path);
  auto dir = fs::absolute(path).parent_path().string();
  return parse_config(text::read_file(path), dir);
}

void validate(const PipelineConfig& c) {
  if (c.collection.input_dir.empty()) throw ConfigValidationError("collection.input_dir", "required");
  if (c.collection.workers < 1) throw ConfigValidationError("collection.workers", "must be >= 1");
  c.collection.xy_cut.validate();
  if (c.providers.empty()) throw ConfigValidationError("providers", "at least one provider is required");
  for (const auto& [name, p] : c.providers) {
    const std::string path = "providers." + name;
    if (p.kind == agents::ProviderKind::Mock && p.fixture_path.empty()) {
      throw ConfigValidationError(path + ".fixture", "required for mock providers");
    }
    if (p.kind != agents::ProviderKind::Mock && p.base_url.empty()) {
      throw ConfigValidationError(path + ".base_url", "required for remote providers");
    }
    if (p.max_in_flight < 1) throw ConfigValidationError(path + ".max_in_flight", "must be >= 1");
    if (p.max_retries < 0) throw ConfigValidationError(path + ".max_retries", "must be >= 0");
    if (p.timeout_s < 1) throw ConfigValidationError(path + ".timeout_s", "must be >= 1");
    if (p.requests_per_minute < 0) throw ConfigValidationError(path + ".requests_per_minute", "must be >= 0");
  }
  require_provider(c, "generation.generator_provider", c.generation.params.generator_provider);
  require_provider(c, "generation.verifier_provider", c.generation.params.verifier_provider);
  require_provider(c, "inference.answerer_provider", c.inference.loop.answerer_provider);
  require_provider(c, "training.answer_provider", c.training.answer_provider);
  if (c.generation.params.qa_per_document < 1) {
    throw ConfigValidationError("generation.qa_per_document", "must be >= 1");
  }
  if (c.generation.params.min_answer_chars < 0) {
    throw ConfigValidationError("generation.min_answer_chars", "must be >= 0");
  }
  if (c.generation.workers < 1) throw ConfigValidationError("generation.workers", "must be >= 1");
  c.training.params.validate();
  if (c.training.params.workers < 1) throw ConfigValidationError("training.workers", "must be >= 1");
  c.inference.loop.validate();
  if (c.inference.workers < 1) throw ConfigValidationError("inference.workers", "must be >= 1");
  if (c.review.server.port < 0 || c.review.server.port > 65535) {
    throw ConfigValidationError("review.server.port", "must be in [0, 65535]");
  }
  if (c.storage_root.empty()) throw ConfigValidationError("storage.root_dir", "required");
}

json to_json(const PipelineConfig& c) {
  json providers = json::object();
  for (const auto& [name, p] : c.providers) {
    json pj{{"kind", agents::to_string(p.kind)},
            {"base_url", p.base_url},
            {"api_key_env", p.api_key_env},
            {"model", p.model},
            {"max_tokens", p.max_tokens},
            {"timeout_s", p.timeout_s},
            {"max_retries", p.max_retries},
            {"fixture", p.fixture_path},
            {"requests_per_minute", p.requests_per_minute},
            {"max_in_flight", p.max_in_flight}};
    if (p.temperature) pj["temperature"] = *p.temperature;
    providers[name] = std::move(pj);
  }
  const auto& tp = c.training.params;
  const auto& loop = c.inference.loop;
  return json{
      {"collection",
       {{"id", c.collection.id},
        {"input_dir", c.collection.input_dir},
        {"ocr_format", ingest::format_name(c.collection.ocr_format)},
        {"xy_cut",
         {{"min_gap_ratio", c.collection.xy_cut.min_gap_ratio},
          {"max_depth", c.collection.xy_cut.max_depth},
          {"first_axis", c.collection.xy_cut.axis_order == ingest::AxisOrder::XFirst ? "x" : "y"}}},
        {"workers", c.collection.workers}}},
      {"providers", providers},
      {"generation",
       {{"generator_provider", c.generation.params.generator_provider},
        {"verifier_provider", c.generation.params.verifier_provider},
        {"qa_per_document", c.generation.params.qa_per_document},
        {"entity_sampling", synthgen::to_string(c.generation.params.entity_sampling)},
        {"min_answer_chars", c.generation.params.min_answer_chars},
        {"prompts_dir", c.generation.prompts_dir},
        {"workers", c.generation.workers}}},
      {"training",
       {{"batch_size", tp.batch_size},
        {"learning_rate", tp.optimizer.learning_rate},
        {"beta1", tp.optimizer.beta1},
        {"beta2", tp.optimizer.beta2},
        {"epsilon", tp.optimizer.epsilon},
        {"weight_decay", tp.optimizer.weight_decay},
        {"epochs", tp.epochs},
        {"val_fraction", tp.val_fraction},
        {"top_k", tp.top_k},
        {"text_dim", tp.features.text_dim},
        {"hash_seed", tp.features.hash_seed},
        {"hidden_units", tp.features.hidden_units},
        {"bootstrap_initial_answers", c.training.bootstrap_initial_answers},
        {"answer_provider", c.training.answer_provider},
        {"workers", tp.workers}}},
      {"inference",
       {{"k", loop.k},
        {"max_iterations", loop.max_iterations},
        {"stop_on_stable_answer", loop.stop_on_stable_answer},
        {"answerer_provider", loop.answerer_provider},
        {"retriever", inference::to_string(loop.retriever)},
        {"served_url", loop.served_url},
        {"compare_rag_baseline", c.inference.compare_rag_baseline},
        {"workers", c.inference.workers}}},
      {"review",
       {{"auto_approve", c.review.auto_approve},
        {"reviewer", c.review.reviewer},
        {"server",
         {{"host", c.review.server.host},
          {"port", c.review.server.port},
          {"token_env", c.review.server.token_env},
          {"static_dir", c.review.server.static_dir}}}}},
      {"storage", {{"root_dir", c.storage_root}}},
      {"seed", c.seed}};
}

std::string to_yaml(const PipelineConfig& config) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << to_node(to_json(config));
  return std::string(out.c_str()) + "\n";
}

}  // namespace docs2synth::config
