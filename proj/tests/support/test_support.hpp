#pragma once

#include <functional>
#include <string>
#include <vector>

#include "docs2synth/agents.hpp"
#include "docs2synth/docmodel.hpp"
#include "docs2synth/retriever.hpp"

namespace docs2synth::testkit {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const noexcept { return path_; }
  std::string file(const std::string& name) const;

 private:
  std::string path_;
};

void write_file(const std::string& path, const std::string& content);

// Entities stacked top to bottom on a 1000x1000 page, 40px rows.
ParsedDocument stacked_doc(const std::string& doc_id, const std::vector<std::string>& contents,
                           double width = 1000, double height = 1000);

using ReplyFn = std::function<std::string(const std::vector<agents::ChatMessage>&)>;

// Provider whose replies come from a callback; counts calls.
class ScriptedProvider : public agents::Provider {
 public:
  explicit ScriptedProvider(ReplyFn fn, std::string name = "scripted");
  int calls() const noexcept { return calls_; }

 protected:
  agents::AgentReply do_complete(const std::vector<agents::ChatMessage>& messages, double temperature) override;

 private:
  ReplyFn fn_;
  int calls_ = 0;
};

// Text of the last user text part.
std::string last_user_text(const std::vector<agents::ChatMessage>& messages);

// Runs a shell command, returning its exit status.
int run_command(const std::string& cmd);

// Path of the bundled toy corpus config.
std::string toy_config_path();

// Every regular file under root (relative path -> bytes), skipping names in
// `exclude`.
std::vector<std::pair<std::string, std::string>> snapshot_tree(const std::string& root,
                                                               const std::vector<std::string>& exclude = {});

// Cross-entropy of the model's logits, recomputed in long double from the
// weight layout alone.
long double reference_loss(const retriever::ScoringModel& model, const std::vector<retriever::PairFeatures>& phis,
                           std::size_t gold);

// Worst |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over all
// weights; numeric is the central difference of reference_loss with step h.
double gradient_check(retriever::ScoringModel model, const std::vector<retriever::PairFeatures>& phis,
                      std::size_t gold, double h = 1e-5);

}  // namespace docs2synth::testkit
