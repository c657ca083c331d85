#include "docs2synth/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "docs2synth/errors.hpp"
#include "docs2synth/hash.hpp"
#include "docs2synth/ingest.hpp"
#include "docs2synth/parallel.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Synth: return "synth";
    case Stage::Review: return "review";
    case Stage::Train: return "train";
    case Stage::Infer: return "infer";
    case Stage::Eval: return "eval";
  }
  return "ingest";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kStages) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

std::string_view to_string(StageStatus s) noexcept {
  switch (s) {
    case StageStatus::Pending: return "pending";
    case StageStatus::Running: return "running";
    case StageStatus::Done: return "done";
    case StageStatus::Failed: return "failed";
  }
  return "pending";
}

StageStatus parse_stage_status(std::string_view name) {
  if (name == "pending") return StageStatus::Pending;
  if (name == "running") return StageStatus::Running;
  if (name == "done") return StageStatus::Done;
  if (name == "failed") return StageStatus::Failed;
  throw std::invalid_argument("unknown stage status '" + std::string(name) + "'");
}

std::string_view to_string(StageResult r) noexcept {
  switch (r) {
    case StageResult::Ran: return "ran";
    case StageResult::Skipped: return "skipped";
    case StageResult::AwaitingReview: return "awaiting review";
  }
  return "ran";
}

StageRecord& RunManifest::at(Stage s) { return stages.at(static_cast<std::size_t>(s)); }
const StageRecord& RunManifest::at(Stage s) const { return stages.at(static_cast<std::size_t>(s)); }

RunManifest RunManifest::fresh() {
  RunManifest m;
  m.created_at = text::utc_timestamp();
  m.updated_at = m.created_at;
  for (auto s : kStages) {
    StageRecord r;
    r.stage = s;
    m.stages.push_back(std::move(r));
  }
  return m;
}

void to_json(json& j, const StageRecord& r) {
  j = json{{"stage", to_string(r.stage)},
           {"status", to_string(r.status)},
           {"input_hash", r.input_hash},
           {"artifacts", r.artifacts},
           {"started_at", r.started_at},
           {"finished_at", r.finished_at},
           {"skipped", r.skipped},
           {"detail", r.detail}};
}

void from_json(const json& j, StageRecord& r) {
  r.stage = parse_stage(j.at("stage").get<std::string>());
  r.status = parse_stage_status(j.at("status").get<std::string>());
  r.input_hash = j.value("input_hash", "");
  r.artifacts = j.value("artifacts", std::vector<std::string>{});
  r.started_at = j.value("started_at", "");
  r.finished_at = j.value("finished_at", "");
  r.skipped = j.value("skipped", false);
  r.detail = j.value("detail", "");
}

void to_json(json& j, const RunManifest& m) {
  j = json{{"run_id", m.run_id},
           {"config_hash", m.config_hash},
           {"created_at", m.created_at},
           {"updated_at", m.updated_at},
           {"stages", m.stages}};
}

void from_json(const json& j, RunManifest& m) {
  m.run_id = j.value("run_id", "");
  m.config_hash = j.value("config_hash", "");
  m.created_at = j.value("created_at", "");
  m.updated_at = j.value("updated_at", "");
  auto fresh = RunManifest::fresh();
  m.stages = fresh.stages;
  for (const auto& r : j.value("stages", json::array())) {
    auto rec = r.get<StageRecord>();
    m.at(rec.stage) = rec;
  }
}

RunManifest load_manifest(const std::string& path) {
  if (!fs::exists(path)) return RunManifest::fresh();
  auto j = json::parse(text::read_file(path), nullptr, false);
  if (j.is_discarded()) {
    spdlog::warn("{} is unreadable, starting a fresh manifest", path);
    return RunManifest::fresh();
  }
  return j.get<RunManifest>();
}

void save_manifest(const RunManifest& m, const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
  text::write_file_atomic(path, json(m).dump(2) + "\n");
}

std::string file_hash(const std::string& path) {
  if (!fs::exists(path)) return "absent";
  return hash::sha256_file(path);
}

agents::ImagePart page_image(const ParsedDocument& doc) {
  if (!doc.image_ref.empty()) return agents::image_part_from_file(doc.image_ref);
  return agents::image_part_from_bytes(image::encode_png(inference::load_page(doc)));
}

std::vector<retriever::TrainingSample> training_samples(const std::vector<synthgen::QAPair>& pairs,
                                                        const std::map<std::string, std::string>& initial_answers) {
  std::vector<retriever::TrainingSample> out;
  for (const auto& p : pairs) {
    if (p.review_status != synthgen::ReviewStatus::Approved) continue;
    retriever::TrainingSample s;
    s.qa_id = p.qa_id;
    s.question = p.question;
    s.doc_id = p.doc_id;
    s.gold_index = p.gold_entity_index;
    if (auto it = initial_answers.find(p.qa_id); it != initial_answers.end()) s.initial_answer = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<synthgen::QAPair> approved(std::vector<synthgen::QAPair> pairs) {
  std::erase_if(pairs, [](const auto& p) { return p.review_status != synthgen::ReviewStatus::Approved; });
  return pairs;
}

std::string prompts_file_hash(const std::string& dir, const char* name) {
  if (dir.empty()) return "default";
  return file_hash((fs::path(dir) / name).string());
}

void write_json_file(const std::string& path, const json& j) {
  fs::create_directories(fs::path(path).parent_path());
  text::write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace

Pipeline::Pipeline(config::PipelineConfig config, ProviderFactory factory)
    : config_(std::move(config)), factory_(std::move(factory)), layout_{config_.storage_root} {
  config::validate(config_);
}

RunManifest Pipeline::manifest() const { return load_manifest(layout_.manifest()); }

std::shared_ptr<agents::Provider> Pipeline::provider(const std::string& name) {
  std::lock_guard lock(providers_mu_);
  if (auto it = providers_.find(name); it != providers_.end()) return it->second;
  auto cfg = config_.providers.find(name);
  if (cfg == config_.providers.end()) throw ConfigValidationError("providers", "unknown provider '" + name + "'");
  auto p = factory_(cfg->second);
  providers_.emplace(name, p);
  return p;
}

std::string Pipeline::input_hash(Stage stage) {
  auto cfg = config::to_json(config_);
  auto provider_json = [&](const std::string& name) {
    json p = cfg["providers"][name];
    p["fixture_hash"] = p.value("fixture", "").empty() ? "none" : file_hash(p["fixture"].get<std::string>());
    return p;
  };
  json in;
  switch (stage) {
    case Stage::Ingest: {
      in["collection"] = cfg["collection"];
      json files = json::array();
      std::vector<fs::path> paths;
      if (fs::is_directory(config_.collection.input_dir)) {
        for (const auto& e : fs::directory_iterator(config_.collection.input_dir)) {
          if (e.is_regular_file()) paths.push_back(e.path());
        }
      }
      std::sort(paths.begin(), paths.end());
      for (const auto& p : paths) files.push_back({p.filename().string(), hash::sha256_file(p.string())});
      in["files"] = files;
      break;
    }
    case Stage::Synth: {
      const auto& g = config_.generation;
      in["generation"] = cfg["generation"];
      in["generator"] = provider_json(g.params.generator_provider);
      in["verifier"] = provider_json(g.params.verifier_provider);
      in["seed"] = config_.seed;
      for (const char* f : {"generation_system.txt", "generation.txt", "verification_system.txt", "verification.txt"}) {
        in["prompts"][f] = prompts_file_hash(g.prompts_dir, f);
      }
      in["documents"] = file_hash(layout_.documents());
      break;
    }
    case Stage::Review:
      in["auto_approve"] = config_.review.auto_approve;
      in["reviewer"] = config_.review.reviewer;
      in["qa"] = file_hash(layout_.qa());
      break;
    case Stage::Train:
      in["training"] = cfg["training"];
      in["seed"] = config_.seed;
      if (config_.training.bootstrap_initial_answers) {
        in["answerer"] = provider_json(config_.training.answer_provider);
        in["answer_prompt"] = prompts_file_hash(config_.generation.prompts_dir, "answer_system.txt");
      }
      in["qa"] = file_hash(layout_.qa());
      in["documents"] = file_hash(layout_.documents());
      break;
    case Stage::Infer:
      in["inference"] = cfg["inference"];
      in["answerer"] = provider_json(config_.inference.loop.answerer_provider);
      in["answer_prompt"] = prompts_file_hash(config_.generation.prompts_dir, "answer_system.txt");
      in["checkpoint"] = file_hash(layout_.checkpoint());
      in["qa"] = file_hash(layout_.qa());
      in["documents"] = file_hash(layout_.documents());
      break;
    case Stage::Eval:
      in["k"] = config_.inference.loop.k;
      in["max_iterations"] = config_.inference.loop.max_iterations;
      in["traces"] = file_hash(layout_.traces());
      in["baseline"] = file_hash(layout_.traces_for("rag-baseline"));
      in["qa"] = file_hash(layout_.qa());
      break;
  }
  return hash::sha256_hex(in.dump());
}

StageResult Pipeline::execute(Stage stage, RunManifest& manifest, bool force) {
  auto& rec = manifest.at(stage);
  const auto name = std::string(to_string(stage));
  auto save = [&] {
    manifest.updated_at = text::utc_timestamp();
    save_manifest(manifest, layout_.manifest());
  };

  auto h = input_hash(stage);
  bool outputs_present = std::all_of(rec.artifacts.begin(), rec.artifacts.end(),
                                     [&](const std::string& a) { return fs::exists(fs::path(layout_.root) / a); });
  if (!force && rec.status == StageStatus::Done && rec.input_hash == h && outputs_present) {
    spdlog::info("stage {}: inputs unchanged, skipped", name);
    rec.skipped = true;
    save();
    return StageResult::Skipped;
  }

  rec.status = StageStatus::Running;
  rec.skipped = false;
  rec.detail.clear();
  rec.started_at = text::utc_timestamp();
  rec.finished_at.clear();
  save();
  spdlog::info("stage {}: running", name);

  std::vector<std::string> artifacts;
  std::optional<std::string> awaiting;
  try {
    switch (stage) {
      case Stage::Ingest: artifacts = run_ingest(); break;
      case Stage::Synth: artifacts = run_synth(); break;
      case Stage::Review:
        awaiting = run_review();
        artifacts = {"qa.jsonl"};
        break;
      case Stage::Train: artifacts = run_train(); break;
      case Stage::Infer: artifacts = run_infer(); break;
      case Stage::Eval: artifacts = run_eval(); break;
    }
  } catch (const std::exception& e) {
    rec.status = StageStatus::Failed;
    rec.detail = e.what();
    rec.finished_at = text::utc_timestamp();
    save();
    spdlog::error("stage {} failed: {}", name, e.what());
    throw StageFailed(name + ": " + e.what());
  }

  rec.finished_at = text::utc_timestamp();
  if (awaiting) {
    rec.status = StageStatus::Pending;
    rec.input_hash.clear();
    rec.detail = *awaiting;
    save();
    spdlog::warn("stage {}: {}", name, *awaiting);
    return StageResult::AwaitingReview;
  }
  rec.status = StageStatus::Done;
  rec.artifacts = std::move(artifacts);
  // Review rewrites its own input, so record the hash it leaves behind.
  rec.input_hash = stage == Stage::Review ? input_hash(stage) : h;
  save();
  spdlog::info("stage {}: done", name);
  return StageResult::Ran;
}

RunOutcome Pipeline::run_all() {
  fs::create_directories(layout_.root);
  store::FileLock lock(layout_.run_lock());
  auto manifest = load_manifest(layout_.manifest());
  manifest.config_hash = hash::sha256_hex(config::to_json(config_).dump());
  manifest.run_id = hash::sha256_hex(manifest.config_hash + text::utc_timestamp()).substr(0, 12);

  RunOutcome outcome;
  for (auto stage : kStages) {
    if (execute(stage, manifest, false) == StageResult::AwaitingReview) {
      outcome.awaiting_review = true;
      break;
    }
  }
  outcome.manifest = std::move(manifest);
  return outcome;
}

StageResult Pipeline::run_stage(Stage stage, bool force) {
  fs::create_directories(layout_.root);
  store::FileLock lock(layout_.run_lock());
  auto manifest = load_manifest(layout_.manifest());
  if (manifest.config_hash.empty()) manifest.config_hash = hash::sha256_hex(config::to_json(config_).dump());
  return execute(stage, manifest, force);
}

std::vector<std::string> Pipeline::run_ingest() {
  ingest::IngestConfig ic{config_.collection.ocr_format, config_.collection.xy_cut, config_.collection.workers};
  auto result = ingest::ingest_collection(config_.collection.input_dir, ic);
  for (const auto& w : result.warnings) spdlog::warn("ingest: {}", w);
  store::write_jsonl_atomic(layout_.documents(), store::to_records(result.collection.documents));
  spdlog::info("ingest: {} documents", result.collection.documents.size());
  return {"documents.jsonl"};
}

std::vector<std::string> Pipeline::run_synth() {
  auto docs = store::load_documents(layout_.documents());
  const auto& g = config_.generation;
  auto generator = provider(g.params.generator_provider);
  auto verifier = provider(g.params.verifier_provider);
  auto prompts = g.prompts_dir.empty() ? synthgen::PromptTemplates::defaults()
                                       : synthgen::PromptTemplates::load(g.prompts_dir);
  std::vector<synthgen::GenerationResult> results(docs.documents.size());
  parallel_for(docs.documents.size(), g.workers, [&](std::size_t i) {
    const auto& doc = docs.documents[i];
    results[i] = synthgen::generate_for_document(doc, g.params, *generator, *verifier, page_image(doc), prompts);
  });

  std::vector<json> records;
  std::set<std::string> seen;
  for (const auto& r : results) {
    for (const auto& w : r.warnings) spdlog::warn("synth: {}", w);
    for (const auto& p : r.pairs) {
      if (seen.insert(p.qa_id).second) records.emplace_back(p);
    }
  }
  store::write_jsonl_atomic(layout_.qa(), records);
  spdlog::info("synth: {} verified QA pairs", records.size());
  return {"qa.jsonl"};
}

std::optional<std::string> Pipeline::run_review() {
  auto pairs = store::load_qa(layout_.qa());
  std::size_t open = 0;
  for (const auto& p : pairs) {
    if (p.review_status == synthgen::ReviewStatus::Pending || p.review_status == synthgen::ReviewStatus::Edited) ++open;
  }
  if (!config_.review.auto_approve) {
    if (open == 0) return std::nullopt;
    return std::to_string(open) + " QA pairs await review; resolve them (review-server) and re-run";
  }
  if (open == 0) return std::nullopt;
  auto docs = store::load_documents(layout_.documents());
  std::vector<json> updates;
  for (const auto& p : pairs) {
    if (p.review_status != synthgen::ReviewStatus::Pending && p.review_status != synthgen::ReviewStatus::Edited) {
      continue;
    }
    const auto* doc = docs.find(p.doc_id);
    if (!doc) throw ModelError("QA pair " + p.qa_id + " references unknown document " + p.doc_id);
    updates.emplace_back(
        synthgen::apply_review(p, synthgen::Approve{}, config_.review.reviewer, *doc, text::utc_timestamp()));
  }
  store::JsonlWriter writer(layout_.qa());
  writer.append_all(updates);
  spdlog::info("review: auto-approved {} pairs", updates.size());
  return std::nullopt;
}

std::vector<std::string> Pipeline::run_train() {
  auto docs = store::load_documents(layout_.documents());
  auto pairs = approved(store::load_qa(layout_.qa()));
  std::vector<std::string> outputs{"train.jsonl", "checkpoints/retriever.ckpt", "train_report.json"};

  std::map<std::string, std::string> initial;
  if (config_.training.bootstrap_initial_answers) {
    std::map<std::string, std::pair<std::string, std::string>> cache;  // qa_id -> (question, answer)
    for (const auto& r : store::scan_jsonl(layout_.initial_answers()).records) {
      cache[r.value("qa_id", "")] = {r.value("question", ""), r.value("answer", "")};
    }
    auto answerer = provider(config_.training.answer_provider);
    auto prompt = inference::AnswerPrompt::load(config_.generation.prompts_dir);
    std::vector<std::string> answers(pairs.size());
    parallel_for(pairs.size(), config_.inference.workers, [&](std::size_t i) {
      const auto& p = pairs[i];
      if (auto it = cache.find(p.qa_id); it != cache.end() && it->second.first == p.question) {
        answers[i] = it->second.second;
        return;
      }
      const auto* doc = docs.find(p.doc_id);
      if (!doc) throw ModelError("QA pair " + p.qa_id + " references unknown document " + p.doc_id);
      auto png = image::encode_png(inference::load_page(*doc));
      answers[i] = inference::generate_answer(*answerer, p.question, png, doc->full_text, {}, prompt);
    });
    std::vector<json> records;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      initial[pairs[i].qa_id] = answers[i];
      records.push_back({{"qa_id", pairs[i].qa_id}, {"question", pairs[i].question}, {"answer", answers[i]}});
    }
    store::write_jsonl_atomic(layout_.initial_answers(), records);
    outputs.push_back("initial_answers.jsonl");
  }

  auto samples = training_samples(pairs, initial);
  store::write_jsonl_atomic(layout_.train(), store::to_records(samples));
  auto result = retriever::train(samples, docs, config_.training.params);
  fs::create_directories(layout_.checkpoints_dir());
  retriever::save_checkpoint(retriever::RetrieverCheckpoint{result.model, result.optimizer}, layout_.checkpoint());
  write_json_file((fs::path(layout_.root) / "train_report.json").string(), json(result.report));
  spdlog::info("train: {} samples, best epoch {}, {:.2f}s", samples.size(), result.report.best_epoch,
               result.report.seconds);
  return outputs;
}

namespace {

std::vector<inference::InferenceTrace> run_questions(const std::vector<synthgen::QAPair>& pairs,
                                                     const DocumentCollection& docs,
                                                     const inference::LoopConfig& loop, agents::Provider& answerer,
                                                     retriever::EntityRanker* ranker, const std::string& root,
                                                     const inference::AnswerPrompt& prompt, int workers) {
  std::vector<inference::InferenceTrace> traces(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& p = pairs[i];
    auto& trace = traces[i];
    trace.qa_id = p.qa_id;
    const auto* doc = docs.find(p.doc_id);
    if (!doc) {
      trace.question = p.question;
      trace.doc_id = p.doc_id;
      trace.strategy = std::string(inference::to_string(loop.retriever));
      trace.stop_reason = inference::StopReason::Aborted;
      trace.error = "unknown document " + p.doc_id;
      return;
    }
    inference::LoopContext ctx{answerer, ranker, root, prompt};
    try {
      inference::run_loop(p.question, *doc, loop, ctx, trace);
    } catch (const Error& e) {
      trace.stop_reason = inference::StopReason::Aborted;
      trace.error = e.what();
    }
  });
  return traces;
}

}  // namespace

std::vector<std::string> Pipeline::run_infer() {
  auto docs = store::load_documents(layout_.documents());
  auto pairs = approved(store::load_qa(layout_.qa()));
  const auto& loop = config_.inference.loop;
  auto answerer = provider(loop.answerer_provider);
  auto prompt = inference::AnswerPrompt::load(config_.generation.prompts_dir);

  std::unique_ptr<retriever::EntityRanker> ranker;
  if (loop.retriever == inference::Strategy::Trained) {
    ranker = std::make_unique<retriever::TrainedRanker>(retriever::load_checkpoint(layout_.checkpoint()).model);
  } else if (loop.retriever == inference::Strategy::Served) {
    ranker = std::make_unique<retriever::ServedRanker>(loop.served_url);
  }

  std::vector<std::string> outputs{"traces.jsonl"};
  auto traces = run_questions(pairs, docs, loop, *answerer, ranker.get(), layout_.root, prompt,
                              config_.inference.workers);
  store::write_jsonl_atomic(layout_.traces(), store::to_records(traces));
  std::size_t aborted = std::count_if(traces.begin(), traces.end(), [](const auto& t) { return !t.error.empty(); });

  if (config_.inference.compare_rag_baseline && loop.retriever != inference::Strategy::RagBaseline) {
    auto rag = loop;
    rag.retriever = inference::Strategy::RagBaseline;
    auto baseline = run_questions(pairs, docs, rag, *answerer, nullptr, layout_.root, prompt,
                                  config_.inference.workers);
    store::write_jsonl_atomic(layout_.traces_for("rag-baseline"), store::to_records(baseline));
    aborted += std::count_if(baseline.begin(), baseline.end(), [](const auto& t) { return !t.error.empty(); });
    outputs.push_back("traces_rag-baseline.jsonl");
  } else {
    fs::remove(layout_.traces_for("rag-baseline"));
  }
  if (aborted) {
    throw StageFailed(std::to_string(aborted) + " inference traces aborted; partial traces were saved");
  }
  spdlog::info("infer: {} questions", pairs.size());
  return outputs;
}

std::vector<std::string> Pipeline::run_eval() {
  auto pairs = approved(store::load_qa(layout_.qa()));
  const auto& loop = config_.inference.loop;
  auto strategy = std::string(inference::to_string(loop.retriever));
  std::vector<eval::NamedResult> results;
  json report{{"k", loop.k}, {"strategies", json::object()}, {"accuracy_by_iteration", json::object()}};

  auto add = [&](const std::string& name, const std::string& path) {
    auto traces = store::load_traces(path);
    auto r = eval::evaluate(traces, pairs);
    report["strategies"][name] = r;
    json acc = json::array();
    for (int t = 1; t <= loop.max_iterations; ++t) acc.push_back(eval::accuracy_at_iteration(traces, pairs, t));
    report["accuracy_by_iteration"][name] = acc;
    results.push_back({name, std::move(r)});
  };
  add(strategy, layout_.traces());
  std::vector<std::string> outputs{"eval.json"};
  if (fs::exists(layout_.traces_for("rag-baseline")) && strategy != "rag-baseline") {
    add("rag-baseline", layout_.traces_for("rag-baseline"));
    auto cmp = eval::compare_strategies(results);
    report["comparison"] = cmp.to_json();
    text::write_file_atomic(layout_.comparison(), cmp.markdown());
    outputs.push_back("comparison.md");
  }
  write_json_file(layout_.eval(), report);
  const auto& main = results.front().result;
  spdlog::info("eval: em {:.4f}, anls {:.4f}, hit@{} {:.4f}", main.exact_match, main.anls, loop.k,
               main.retriever_hit_at_k);
  return outputs;
}

inference::InferenceTrace Pipeline::infer_one(const std::string& question, const std::string& doc_id,
                                              const inference::LoopConfig& loop) {
  auto docs = store::load_documents(layout_.documents());
  const auto* doc = docs.find(doc_id);
  if (!doc) throw ModelError("unknown document " + doc_id);
  auto answerer = provider(loop.answerer_provider.empty() ? config_.inference.loop.answerer_provider
                                                          : loop.answerer_provider);
  std::unique_ptr<retriever::EntityRanker> ranker;
  if (loop.retriever == inference::Strategy::Trained) {
    ranker = std::make_unique<retriever::TrainedRanker>(retriever::load_checkpoint(layout_.checkpoint()).model);
  } else if (loop.retriever == inference::Strategy::Served) {
    ranker = std::make_unique<retriever::ServedRanker>(loop.served_url);
  }
  inference::LoopContext ctx{*answerer, ranker.get(), layout_.root,
                             inference::AnswerPrompt::load(config_.generation.prompts_dir)};
  return inference::run_loop(question, *doc, loop, ctx);
}

}  // namespace docs2synth::pipeline
