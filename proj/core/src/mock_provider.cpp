#include <filesystem>
#include <fstream>

#include "docs2synth/agents.hpp"
#include "docs2synth/errors.hpp"
#include "docs2synth/text.hpp"

namespace docs2synth::agents {

namespace {

std::string response_text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string last_user_text(const std::vector<ChatMessage>& messages) {
  for (auto m = messages.rbegin(); m != messages.rend(); ++m) {
    if (m->role != Role::User) continue;
    for (auto p = m->parts.rbegin(); p != m->parts.rend(); ++p) {
      if (const auto* t = std::get_if<TextPart>(&*p)) return t->text;
    }
  }
  return {};
}

}  // namespace

MockProvider::MockProvider(ProviderConfig config, std::vector<MockRule> rules, std::string default_response)
    : Provider(std::move(config)), rules_(std::move(rules)), default_response_(std::move(default_response)) {
  compiled_.reserve(rules_.size());
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (!rules_[i].regex) {
      compiled_.emplace_back();
      continue;
    }
    try {
      compiled_.emplace_back(std::regex(rules_[i].match, std::regex::ECMAScript));
    } catch (const std::regex_error& e) {
      throw FixtureError("rule " + std::to_string(i + 1) + ": invalid regex: " + e.what());
    }
  }
}

AgentReply MockProvider::do_complete(const std::vector<ChatMessage>& messages, double /*temperature*/) {
  auto haystack = concatenated_user_text(messages);
  std::map<std::string, std::string> vars{{"echo", last_user_text(messages)}};
  AgentReply reply;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& rule = rules_[i];
    bool hit = false;
    if (compiled_[i]) {
      std::smatch m;
      hit = std::regex_search(haystack, m, *compiled_[i]);
      for (std::size_t g = 0; hit && g < m.size() && g < 10; ++g) vars[std::to_string(g)] = m[g].str();
    } else {
      hit = haystack.find(rule.match) != std::string::npos;
    }
    if (hit) {
      reply.text = text::render_template(rule.response, vars);
      reply.raw = {{"provider", config().name}, {"rule", i + 1}};
      return reply;
    }
  }
  reply.text = text::render_template(default_response_, vars);
  reply.raw = {{"provider", config().name}, {"rule", "default"}};
  return reply;
}

std::unique_ptr<MockProvider> mock_provider_from_fixture(const std::string& path, std::string name) {
  if (path.empty()) throw FixtureError("mock provider '" + name + "' has no fixture path");
  std::ifstream in(path);
  if (!in) throw FixtureError("cannot open fixture " + path);

  std::vector<MockRule> rules;
  std::optional<std::string> fallback;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto where = path + ":" + std::to_string(line_no);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FixtureError(where + ": not a JSON object");
    if (j.contains("default")) {
      fallback = response_text(j["default"]);
      continue;
    }
    if (!j.contains("match") || !j["match"].is_string() || !j.contains("response")) {
      throw FixtureError(where + ": rule needs \"match\" and \"response\"");
    }
    MockRule rule{j["match"].get<std::string>(), j.value("regex", false), response_text(j["response"])};
    rules.push_back(std::move(rule));
  }
  if (!fallback) throw FixtureError(path + ": missing {\"default\": ...} line");

  ProviderConfig config;
  config.name = std::move(name);
  config.kind = ProviderKind::Mock;
  config.fixture_path = path;
  return std::make_unique<MockProvider>(std::move(config), std::move(rules), std::move(*fallback));
}

}  // namespace docs2synth::agents
