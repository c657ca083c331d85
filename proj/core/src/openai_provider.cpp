#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "docs2synth/agents.hpp"
#include "docs2synth/errors.hpp"

namespace docs2synth::agents {

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw RequestRejected("base_url must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  parts.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) parts.path = url.substr(path_start);
  while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  return parts;
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, std::chrono::seconds timeout) override {
    auto parts = split_url(url);
    httplib::Client client(parts.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(parts.path.empty() ? "/" : parts.path, h, body, "application/json");
    if (!res) return HttpResponse{0, {}, httplib::to_string(res.error())};
    return HttpResponse{res->status, res->body, {}};
  }
};

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nlohmann::json message_content(const ChatMessage& m) {
  if (m.parts.size() == 1) {
    if (const auto* t = std::get_if<TextPart>(&m.parts.front())) return t->text;
  }
  auto content = nlohmann::json::array();
  for (const auto& part : m.parts) {
    if (const auto* t = std::get_if<TextPart>(&part)) {
      content.push_back({{"type", "text"}, {"text", t->text}});
    } else {
      const auto& img = std::get<ImagePart>(part);
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64_data}}}});
    }
  }
  return content;
}

std::string reply_text(const nlohmann::json& content) {
  if (content.is_null()) return {};
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& p : content) {
      if (p.is_object() && p.value("type", "") == "text" && p.contains("text") && p["text"].is_string()) {
        out += p["text"].get<std::string>();
      }
    }
    return out;
  }
  throw MalformedResponse("message.content has unexpected type");
}

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

OpenAiCompatibleProvider::OpenAiCompatibleProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
                                                   Sleeper sleeper, BackoffPolicy backoff, std::uint64_t jitter_seed)
    : Provider(std::move(config)),
      transport_(transport ? std::move(transport) : make_http_transport()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      backoff_(backoff),
      rng_state_(jitter_seed) {
  if (this->config().base_url.empty()) {
    if (this->config().kind == ProviderKind::Ollama) {
      throw ConfigValidationError("providers." + this->config().name + ".base_url",
                                  "required (Ollama exposes http://localhost:11434/v1)");
    }
    throw ConfigValidationError("providers." + this->config().name + ".base_url", "required for remote providers");
  }
}

std::string OpenAiCompatibleProvider::endpoint_url() const {
  auto url = config().base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url + "/chat/completions";
}

nlohmann::json OpenAiCompatibleProvider::build_request_body(const std::vector<ChatMessage>& messages,
                                                            double temperature) const {
  auto msgs = nlohmann::json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", message_content(m)}});
  }
  return {{"model", config().model},
          {"messages", std::move(msgs)},
          {"temperature", temperature},
          {"max_tokens", config().max_tokens},
          {"stream", false}};
}

std::chrono::milliseconds OpenAiCompatibleProvider::backoff_delay(int retry_index) {
  double cap = static_cast<double>(backoff_.base.count()) * std::pow(backoff_.factor, retry_index);
  std::uint64_t r;
  {
    std::lock_guard lock(rng_mu_);
    r = splitmix64(rng_state_);
  }
  double unit = static_cast<double>(r >> 11) * 0x1.0p-53;
  return std::chrono::milliseconds(static_cast<std::int64_t>(unit * cap));
}

AgentReply OpenAiCompatibleProvider::do_complete(const std::vector<ChatMessage>& messages, double temperature) {
  const auto& cfg = config();
  std::vector<std::pair<std::string, std::string>> headers;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }
  }
  auto body = build_request_body(messages, temperature).dump();
  auto url = endpoint_url();
  const int max_attempts = 1 + std::max(0, cfg.max_retries);

  HttpResponse last;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    last = transport_->post(url, headers, body, std::chrono::seconds(cfg.timeout_s));
    if (last.status >= 200 && last.status < 300) {
      auto raw = nlohmann::json::parse(last.body, nullptr, false);
      if (raw.is_discarded() || !raw.is_object()) throw MalformedResponse("response body is not a JSON object");
      if (!raw.contains("choices") || !raw["choices"].is_array() || raw["choices"].empty()) {
        throw MalformedResponse("response has no choices");
      }
      const auto& choice = raw["choices"][0];
      if (!choice.contains("message") || !choice["message"].is_object()) {
        throw MalformedResponse("choices[0] has no message");
      }
      AgentReply reply;
      reply.text = reply_text(choice["message"].value("content", nlohmann::json()));
      if (raw.contains("usage") && raw["usage"].is_object()) {
        const auto& u = raw["usage"];
        reply.usage = TokenUsage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0),
                                 u.value("total_tokens", 0)};
      }
      reply.raw = std::move(raw);
      reply.attempts = attempt;
      return reply;
    }
    if (last.status == 401 || last.status == 403) {
      throw AuthError("provider '" + cfg.name + "' rejected credentials (HTTP " + std::to_string(last.status) + ")");
    }
    bool retryable = last.status == 0 || last.status == 429 || last.status >= 500;
    if (!retryable) {
      throw RequestRejected("provider '" + cfg.name + "' returned HTTP " + std::to_string(last.status) + ": " +
                            last.body.substr(0, 512));
    }
    if (attempt < max_attempts) {
      auto delay = backoff_delay(attempt - 1);
      spdlog::debug("provider {}: attempt {} failed (status {}), retrying in {} ms", cfg.name, attempt, last.status,
                    delay.count());
      sleeper_(delay);
    }
  }
  if (last.status == 429) {
    throw BudgetExceeded("provider '" + cfg.name + "' still rate limited after " + std::to_string(max_attempts) +
                         " attempts");
  }
  auto detail = last.status == 0 ? last.error : "HTTP " + std::to_string(last.status);
  throw ProviderUnreachable("provider '" + cfg.name + "' failed after " + std::to_string(max_attempts) +
                            " attempts: " + detail);
}

}  // namespace docs2synth::agents
