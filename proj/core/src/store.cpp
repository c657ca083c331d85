#include "docs2synth/store.hpp"

#include <fcntl.h>
#include <spdlog/spdlog.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view file_name(Kind kind) noexcept {
  switch (kind) {
    case Kind::Documents: return "documents.jsonl";
    case Kind::Qa: return "qa.jsonl";
    case Kind::Traces: return "traces.jsonl";
  }
  return "documents.jsonl";
}

namespace {
std::string join(const std::string& root, std::string_view rel) { return (fs::path(root) / rel).string(); }
}  // namespace

std::string Layout::documents() const { return join(root, "documents.jsonl"); }
std::string Layout::qa() const { return join(root, "qa.jsonl"); }
std::string Layout::train() const { return join(root, "train.jsonl"); }
std::string Layout::initial_answers() const { return join(root, "initial_answers.jsonl"); }
std::string Layout::traces() const { return join(root, "traces.jsonl"); }
std::string Layout::traces_for(std::string_view strategy) const {
  return join(root, "traces_" + std::string(strategy) + ".jsonl");
}
std::string Layout::eval() const { return join(root, "eval.json"); }
std::string Layout::comparison() const { return join(root, "comparison.md"); }
std::string Layout::manifest() const { return join(root, "manifest.json"); }
std::string Layout::checkpoints_dir() const { return join(root, "checkpoints"); }
std::string Layout::checkpoint() const { return join(root, "checkpoints/retriever.ckpt"); }
std::string Layout::artifacts_dir() const { return join(root, "artifacts"); }
std::string Layout::compare_traces() const { return join(root, "compare/traces.jsonl"); }
std::string Layout::adhoc_traces() const { return join(root, "adhoc/traces.jsonl"); }
std::string Layout::run_lock() const { return join(root, ".run.lock"); }
std::string Layout::path(Kind kind) const { return join(root, file_name(kind)); }

FileLock::FileLock(const std::string& path) {
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file " + path + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    int err = errno;
    ::close(fd_);
    fd_ = -1;
    if (err == EWOULDBLOCK) throw LockHeld("another writer holds " + path);
    throw IoError("cannot lock " + path + ": " + std::strerror(err));
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

FileLock::FileLock(FileLock&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

FileLock& FileLock::operator=(FileLock&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

JsonlWriter::JsonlWriter(const std::string& path) : lock_(path + ".lock"), path_(path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open " + path + ": " + std::strerror(errno));
}

JsonlWriter::~JsonlWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void JsonlWriter::append(const json& record) {
  auto line = record.dump();
  line.push_back('\n');
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    auto n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write to " + path_ + " failed: " + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

void JsonlWriter::append_all(std::span<const json> records) {
  for (const auto& r : records) append(r);
}

ScanResult scan_jsonl(const std::string& path) {
  ScanResult result;
  std::ifstream in(path, std::ios::binary);
  if (!in) return result;
  in.seekg(0, std::ios::end);
  auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::string data(size, '\0');
  in.read(data.data(), static_cast<std::streamsize>(size));
  data.resize(static_cast<std::size_t>(in.gcount()));

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    auto nl = data.find('\n', pos);
    bool terminated = nl != std::string::npos;
    auto line = std::string_view(data).substr(pos, terminated ? nl - pos : std::string::npos);
    pos = terminated ? nl + 1 : data.size();
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto parsed = terminated ? json::parse(line, nullptr, false) : json(json::value_t::discarded);
    if (parsed.is_discarded()) {
      ++result.corrupt_lines;
      spdlog::warn("{}: skipping {} line {}", path, terminated ? "corrupt" : "truncated", line_no);
      continue;
    }
    result.records.push_back(std::move(parsed));
  }
  return result;
}

void write_jsonl_atomic(const std::string& path, std::span<const json> records) {
  std::string body;
  for (const auto& r : records) {
    body += r.dump();
    body.push_back('\n');
  }
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  text::write_file_atomic(path, body);
}

void append(const Layout& layout, Kind kind, std::span<const json> records) {
  fs::create_directories(layout.root);
  JsonlWriter writer(layout.path(kind));
  writer.append_all(records);
}

ScanResult scan(const Layout& layout, Kind kind) { return scan_jsonl(layout.path(kind)); }

DocumentCollection load_documents(const std::string& path, std::string collection_id) {
  DocumentCollection c;
  c.collection_id = std::move(collection_id);
  for (auto& r : scan_jsonl(path).records) c.documents.push_back(r.get<ParsedDocument>());
  return c;
}

std::vector<synthgen::QAPair> load_qa(const std::string& path, std::size_t* corrupt_lines) {
  auto scanned = scan_jsonl(path);
  if (corrupt_lines) *corrupt_lines = scanned.corrupt_lines;
  std::vector<synthgen::QAPair> out;
  std::map<std::string, std::size_t> slot;
  for (auto& r : scanned.records) {
    auto pair = r.get<synthgen::QAPair>();
    auto [it, fresh] = slot.emplace(pair.qa_id, out.size());
    if (fresh) {
      out.push_back(std::move(pair));
    } else {
      out[it->second] = std::move(pair);
    }
  }
  return out;
}

std::vector<inference::InferenceTrace> load_traces(const std::string& path) {
  std::vector<inference::InferenceTrace> out;
  for (auto& r : scan_jsonl(path).records) out.push_back(r.get<inference::InferenceTrace>());
  return out;
}

std::vector<retriever::TrainingSample> load_training_samples(const std::string& path) {
  std::vector<retriever::TrainingSample> out;
  for (auto& r : scan_jsonl(path).records) out.push_back(r.get<retriever::TrainingSample>());
  return out;
}

}  // namespace docs2synth::store
