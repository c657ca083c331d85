#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

#include "docs2synth/docmodel.hpp"
#include "docs2synth/inference.hpp"
#include "docs2synth/retriever.hpp"
#include "docs2synth/synthgen.hpp"

namespace docs2synth::store {

enum class Kind { Documents, Qa, Traces };
std::string_view file_name(Kind kind) noexcept;

// Fixed file tree under a storage root.
struct Layout {
  std::string root;

  std::string documents() const;
  std::string qa() const;
  std::string train() const;
  std::string initial_answers() const;
  std::string traces() const;
  std::string traces_for(std::string_view strategy) const;
  std::string eval() const;
  std::string comparison() const;
  std::string manifest() const;
  std::string checkpoints_dir() const;
  std::string checkpoint() const;
  std::string artifacts_dir() const;
  std::string compare_traces() const;
  std::string adhoc_traces() const;
  std::string run_lock() const;
  std::string path(Kind kind) const;
};

// Exclusive advisory lock (flock) on a lock file; released on destruction.
// Throws LockHeld when another holder exists, even within this process.
class FileLock {
 public:
  explicit FileLock(const std::string& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  FileLock(FileLock&& other) noexcept;
  FileLock& operator=(FileLock&& other) noexcept;

 private:
  int fd_ = -1;
};

// Append-only JSONL file with one writer at a time (lock on path + ".lock").
// Each record is written with a single write(2) on an O_APPEND descriptor.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  ~JsonlWriter();
  JsonlWriter(const JsonlWriter&) = delete;
  JsonlWriter& operator=(const JsonlWriter&) = delete;

  void append(const nlohmann::json& record);
  void append_all(std::span<const nlohmann::json> records);

 private:
  FileLock lock_;
  std::string path_;
  int fd_ = -1;
};

struct ScanResult {
  std::vector<nlohmann::json> records;
  std::size_t corrupt_lines = 0;
};

// Reads the bytes present when the file is opened; lines that fail to parse
// (including an unterminated final line) are skipped and counted. A missing
// file scans as empty.
ScanResult scan_jsonl(const std::string& path);

// Replaces path with the given records in one rename.
void write_jsonl_atomic(const std::string& path, std::span<const nlohmann::json> records);

void append(const Layout& layout, Kind kind, std::span<const nlohmann::json> records);
ScanResult scan(const Layout& layout, Kind kind);

DocumentCollection load_documents(const std::string& path, std::string collection_id = {});

// Latest record per qa_id wins; order is that of each id's first appearance.
std::vector<synthgen::QAPair> load_qa(const std::string& path, std::size_t* corrupt_lines = nullptr);

std::vector<inference::InferenceTrace> load_traces(const std::string& path);
std::vector<retriever::TrainingSample> load_training_samples(const std::string& path);

template <typename T>
std::vector<nlohmann::json> to_records(const std::vector<T>& items) {
  std::vector<nlohmann::json> out;
  out.reserve(items.size());
  for (const auto& item : items) out.emplace_back(item);
  return out;
}

}  // namespace docs2synth::store
