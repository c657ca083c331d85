#include "test_support.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "docs2synth/text.hpp"

namespace docs2synth::testkit {

namespace fs = std::filesystem;

TempDir::TempDir() {
  auto tmpl = (fs::temp_directory_path() / "d2s-test-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string TempDir::file(const std::string& name) const { return (fs::path(path_) / name).string(); }

void write_file(const std::string& path, const std::string& content) {
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  out << content;
}

ParsedDocument stacked_doc(const std::string& doc_id, const std::vector<std::string>& contents, double width,
                           double height) {
  ParsedDocument d;
  d.doc_id = doc_id;
  d.width = width;
  d.height = height;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    Entity e;
    e.index = static_cast<int>(i);
    e.content = contents[i];
    double y = 20.0 + 40.0 * static_cast<double>(i);
    e.bbox = {50, y, 50 + 20.0 * static_cast<double>(1 + contents[i].size() % 10), y + 20};
    d.entities.push_back(e);
  }
  auto agg = aggregate_text(d.entities);
  d.full_text = agg.full_text;
  d.bbox_list = agg.bbox_list;
  return d;
}

ScriptedProvider::ScriptedProvider(ReplyFn fn, std::string name)
    : agents::Provider([&] {
        agents::ProviderConfig c;
        c.name = std::move(name);
        c.kind = agents::ProviderKind::Mock;
        c.fixture_path = "<scripted>";
        return c;
      }()),
      fn_(std::move(fn)) {}

agents::AgentReply ScriptedProvider::do_complete(const std::vector<agents::ChatMessage>& messages, double) {
  ++calls_;
  agents::AgentReply r;
  r.text = fn_(messages);
  return r;
}

std::string last_user_text(const std::vector<agents::ChatMessage>& messages) {
  for (auto m = messages.rbegin(); m != messages.rend(); ++m) {
    if (m->role != agents::Role::User) continue;
    for (auto p = m->parts.rbegin(); p != m->parts.rend(); ++p) {
      if (const auto* t = std::get_if<agents::TextPart>(&*p)) return t->text;
    }
  }
  return {};
}

int run_command(const std::string& cmd) {
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string toy_config_path() { return std::string(DOCS2SYNTH_SOURCE_DIR) + "/data/toy_corpus/config.yml"; }

std::vector<std::pair<std::string, std::string>> snapshot_tree(const std::string& root,
                                                               const std::vector<std::string>& exclude) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), root).string();
    if (std::find(exclude.begin(), exclude.end(), e.path().filename().string()) != exclude.end()) continue;
    out.emplace_back(rel, text::read_file(e.path().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

long double reference_loss(const retriever::ScoringModel& model, const std::vector<retriever::PairFeatures>& phis,
                           std::size_t gold) {
  const auto d = retriever::kPairDim;
  const auto h = static_cast<std::size_t>(std::max(0, model.feature_config.hidden_units));
  std::vector<long double> z;
  for (const auto& phi : phis) {
    long double s = 0;
    if (h == 0) {
      for (std::size_t k = 0; k < d; ++k) s += static_cast<long double>(model.weights[k]) * phi[k];
    } else {
      for (std::size_t j = 0; j < h; ++j) {
        long double a = 0;
        for (std::size_t k = 0; k < d; ++k) a += static_cast<long double>(model.weights[j * d + k]) * phi[k];
        s += static_cast<long double>(model.weights[h * d + j]) * std::tanh(a);
      }
    }
    z.push_back(s);
  }
  long double top = *std::max_element(z.begin(), z.end());
  long double sum = 0;
  for (auto v : z) sum += std::exp(v - top);
  return top + std::log(sum) - z[gold];
}

double gradient_check(retriever::ScoringModel model, const std::vector<retriever::PairFeatures>& phis,
                      std::size_t gold, double h) {
  std::vector<double> grad(model.weights.size(), 0.0);
  retriever::loss_and_gradient(model, phis, gold, grad);
  double worst = 0;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    const double w = model.weights[i];
    model.weights[i] = w + h;
    long double up = reference_loss(model, phis, gold);
    model.weights[i] = w - h;
    long double down = reference_loss(model, phis, gold);
    model.weights[i] = w;
    // The perturbed weights are exact doubles, so the true step is their
    // difference rather than 2h.
    long double step = static_cast<long double>(w + h) - static_cast<long double>(w - h);
    double numeric = static_cast<double>((up - down) / step);
    double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - grad[i]) / denom);
  }
  return worst;
}

}  // namespace docs2synth::testkit
