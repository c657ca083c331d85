#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <iostream>

#include "docs2synth/config.hpp"
#include "docs2synth/errors.hpp"
#include "docs2synth/evalharness.hpp"
#include "docs2synth/pipeline.hpp"
#include "docs2synth/review_server.hpp"
#include "docs2synth/review_service.hpp"
#include "docs2synth/store.hpp"
#include "docs2synth/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace docs2synth;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Options {
  std::string config_path = "config.yml";
  std::string storage_root;
  bool verbose = false;
  bool force = false;

  std::string input_dir;
  std::string ocr_format;

  std::string question;
  std::string doc_id;
  int k = 0;
  int iterations = 0;
  std::string strategy;

  std::string traces_path;
  std::string qa_path;
  std::string out_path;
  std::vector<std::string> compare_files;

  std::string host;
  int port = -1;
};

config::PipelineConfig load(const Options& o) {
  auto cfg = config::load_config(o.config_path);
  if (!o.storage_root.empty()) cfg.storage_root = fs::absolute(o.storage_root).string();
  return cfg;
}

void print_manifest(const pipeline::RunManifest& m) {
  for (const auto& r : m.stages) {
    std::cout << std::string(pipeline::to_string(r.stage)) << ": " << pipeline::to_string(r.status)
              << (r.skipped ? " (skipped)" : "") << (r.detail.empty() ? "" : " - " + r.detail) << "\n";
  }
}

int run_all(const Options& o) {
  pipeline::Pipeline p(load(o));
  auto outcome = p.run_all();
  print_manifest(outcome.manifest);
  if (outcome.awaiting_review) {
    std::cout << "run paused at review; approve or reject pending pairs, then run again\n";
  }
  return kExitOk;
}

int run_stage(const Options& o, pipeline::Stage stage) {
  auto cfg = load(o);
  if (stage == pipeline::Stage::Ingest) {
    if (!o.input_dir.empty()) cfg.collection.input_dir = fs::absolute(o.input_dir).string();
    if (!o.ocr_format.empty()) {
      try {
        cfg.collection.ocr_format = ingest::parse_format(o.ocr_format);
      } catch (const std::exception& e) {
        throw ConfigValidationError("collection.ocr_format", e.what());
      }
    }
  }
  pipeline::Pipeline p(std::move(cfg));
  auto r = p.run_stage(stage, o.force);
  std::cout << pipeline::to_string(stage) << ": " << pipeline::to_string(r) << "\n";
  return kExitOk;
}

int infer(const Options& o) {
  if (o.question.empty() && o.doc_id.empty()) return run_stage(o, pipeline::Stage::Infer);
  if (o.question.empty() || o.doc_id.empty()) {
    throw ConfigValidationError("infer", "--question and --doc go together");
  }
  pipeline::Pipeline p(load(o));
  auto loop = p.config().inference.loop;
  if (o.k > 0) loop.k = o.k;
  if (o.iterations > 0) loop.max_iterations = o.iterations;
  if (!o.strategy.empty()) {
    try {
      loop.retriever = inference::parse_strategy(o.strategy);
    } catch (const std::exception& e) {
      throw ConfigValidationError("inference.retriever", e.what());
    }
  }
  loop.validate();
  auto trace = p.infer_one(o.question, o.doc_id, loop);
  store::JsonlWriter(p.layout().adhoc_traces()).append(json(trace));
  std::cout << json(trace).dump(2) << "\n";
  return trace.error.empty() ? kExitOk : kExitStage;
}

int evaluate(const Options& o) {
  std::string traces = o.traces_path;
  std::string qa = o.qa_path;
  if (traces.empty() || qa.empty()) {
    auto cfg = load(o);
    store::Layout layout{cfg.storage_root};
    if (traces.empty()) traces = layout.traces();
    if (qa.empty()) qa = layout.qa();
  }
  for (const auto& path : {traces, qa}) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("no such file: " + path);
  }
  auto pairs = store::load_qa(qa);
  std::erase_if(pairs, [](const auto& p) { return p.review_status != synthgen::ReviewStatus::Approved; });
  auto result = eval::evaluate(store::load_traces(traces), pairs);
  auto body = json(result).dump(2) + "\n";
  if (o.out_path.empty()) {
    std::cout << body;
  } else {
    text::write_file_atomic(o.out_path, body);
    std::cout << "em " << result.exact_match << ", anls " << result.anls << ", hit@k " << result.retriever_hit_at_k
              << " -> " << o.out_path << "\n";
  }
  return kExitOk;
}

// Accepts bare EvalResult files (from `eval`) and eval.json reports, whose
// strategies each become a column.
std::vector<eval::NamedResult> load_results(const std::string& path) {
  auto j = json::parse(text::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError(path + " is not a JSON object");
  auto stem = fs::path(path).stem().string();
  std::vector<eval::NamedResult> out;
  if (j.contains("strategies")) {
    for (const auto& [name, r] : j["strategies"].items()) out.push_back({stem + "/" + name, r.get<eval::EvalResult>()});
  } else {
    out.push_back({stem, j.get<eval::EvalResult>()});
  }
  return out;
}

int compare(const Options& o) {
  std::vector<eval::NamedResult> results;
  for (const auto& f : o.compare_files) {
    auto loaded = load_results(f);
    results.insert(results.end(), loaded.begin(), loaded.end());
  }
  auto cmp = eval::compare_strategies(results);
  std::cout << cmp.markdown();
  if (!o.out_path.empty()) text::write_file_atomic(o.out_path, cmp.to_json().dump(2) + "\n");
  return kExitOk;
}

review::ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const Options& o) {
  auto cfg = load(o);
  auto server_cfg = cfg.review.server;
  if (!o.host.empty()) server_cfg.host = o.host;
  if (o.port >= 0) server_cfg.port = o.port;
  pipeline::Pipeline p(std::move(cfg));
  review::ReviewService service(p);
  review::ReviewServer server(service, server_cfg);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  bool ok = server.listen();
  g_server = nullptr;
  if (!ok) {
    spdlog::error("could not bind {}:{}", server_cfg.host, server_cfg.port);
    return kExitStage;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"docs2synth: synthetic document QA and retriever training"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "pipeline config (YAML)");
  app.add_option("--storage-root", o.storage_root, "override storage.root_dir");
  app.add_flag("-v,--verbose", o.verbose, "debug logging");

  auto* run = app.add_subcommand("run", "run every stage in order, skipping unchanged ones");
  auto* ing = app.add_subcommand("ingest", "OCR files + page images -> documents.jsonl");
  ing->add_option("--input", o.input_dir, "input directory");
  ing->add_option("--format", o.ocr_format, "paddleocr | docling | generic-jsonl");
  auto* synth = app.add_subcommand("synth", "generate and verify QA pairs");
  auto* train = app.add_subcommand("train", "train the retriever on approved pairs");
  auto* inf = app.add_subcommand("infer", "iterative inference over approved pairs, or one --question");
  inf->add_option("--question", o.question);
  inf->add_option("--doc", o.doc_id);
  inf->add_option("--k", o.k)->check(CLI::PositiveNumber);
  inf->add_option("--iterations", o.iterations)->check(CLI::PositiveNumber);
  inf->add_option("--strategy", o.strategy, "trained | served | rag-baseline");
  auto* ev = app.add_subcommand("eval", "score traces against QA pairs");
  ev->add_option("--traces", o.traces_path);
  ev->add_option("--qa", o.qa_path);
  ev->add_option("--out", o.out_path);
  auto* cmp = app.add_subcommand("compare", "side-by-side table of two or more eval results");
  cmp->add_option("files", o.compare_files)->required()->expected(2, -1)->check(CLI::ExistingFile);
  cmp->add_option("--out", o.out_path, "also write the comparison as JSON");
  auto* srv = app.add_subcommand("review-server", "HTTP API for review and comparison");
  srv->add_option("--host", o.host);
  srv->add_option("--port", o.port);

  for (auto* sub : {run, ing, synth, train, inf, ev, cmp, srv}) {
    sub->add_option("--config", o.config_path, "pipeline config (YAML)");
    sub->add_option("--storage-root", o.storage_root, "override storage.root_dir");
  }
  for (auto* sub : {ing, synth, train, inf}) sub->add_flag("--force", o.force, "re-run even if inputs are unchanged");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run) return run_all(o);
    if (*ing) return run_stage(o, pipeline::Stage::Ingest);
    if (*synth) return run_stage(o, pipeline::Stage::Synth);
    if (*train) return run_stage(o, pipeline::Stage::Train);
    if (*inf) return infer(o);
    if (*ev) return evaluate(o);
    if (*cmp) return compare(o);
    if (*srv) return serve(o);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    auto k = e.kind();
    return k == ErrorKind::ConfigParseError || k == ErrorKind::ConfigValidationError ? kExitConfig : kExitStage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  }
  return kExitOk;
}
