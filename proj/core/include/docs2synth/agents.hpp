#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace docs2synth::agents {

enum class Role { System, User, Assistant };
std::string_view to_string(Role role) noexcept;

struct TextPart {
  std::string text;
};

struct ImagePart {
  std::string media_type;
  std::string base64_data;
};

using Part = std::variant<TextPart, ImagePart>;

struct ChatMessage {
  Role role = Role::User;
  std::vector<Part> parts;

  static ChatMessage text(Role role, std::string body);
};

// Throws UndecodableImage if the bytes are not PNG/JPEG.
ImagePart image_part_from_bytes(std::string_view bytes);
ImagePart image_part_from_file(const std::string& path);

enum class ProviderKind { OpenAiCompatible, Ollama, Mock };
ProviderKind parse_provider_kind(std::string_view name);
std::string_view to_string(ProviderKind kind) noexcept;

struct ProviderConfig {
  std::string name;
  ProviderKind kind = ProviderKind::Mock;
  std::string base_url;
  std::string api_key_env;
  std::string model;
  // Unset means the caller's role default applies (see CallOptions).
  std::optional<double> temperature;
  int max_tokens = 1024;
  int timeout_s = 60;
  int max_retries = 3;
  std::string fixture_path;
  // 0 disables the limiter.
  int requests_per_minute = 0;
  int max_in_flight = 4;

  friend bool operator==(const ProviderConfig&, const ProviderConfig&) = default;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct AgentReply {
  std::string text;
  nlohmann::json raw;
  std::optional<TokenUsage> usage;
  std::int64_t latency_ms = 0;
  int attempts = 1;
};

struct CallOptions {
  double default_temperature = 0.0;
};

inline constexpr double kVerifierTemperature = 0.0;
inline constexpr double kAnswerTemperature = 0.0;
inline constexpr double kGenerationTemperature = 0.7;

// Spaces request starts at least 60/rpm seconds apart across threads.
class RateLimiter {
 public:
  explicit RateLimiter(int requests_per_minute);
  void acquire();

 private:
  std::chrono::nanoseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_;
};

// Every pipeline stage talks to a model only through Provider::complete and
// complete_json, so swapping ProviderConfig::kind changes no call sites.
class Provider {
 public:
  explicit Provider(ProviderConfig config);
  virtual ~Provider() = default;
  Provider(const Provider&) = delete;
  Provider& operator=(const Provider&) = delete;

  const ProviderConfig& config() const noexcept { return config_; }

  // Validates messages, applies the in-flight cap and rate limit, then calls
  // the backend. Thread-safe.
  AgentReply complete(const std::vector<ChatMessage>& messages, const CallOptions& options = {});

 protected:
  virtual AgentReply do_complete(const std::vector<ChatMessage>& messages, double temperature) = 0;

 private:
  ProviderConfig config_;
  std::counting_semaphore<1024> in_flight_;
  RateLimiter limiter_;
};

struct HttpResponse {
  // 0 means the request never produced an HTTP status (connect/read failure).
  int status = 0;
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, std::chrono::seconds timeout) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct BackoffPolicy {
  std::chrono::milliseconds base{1000};
  double factor = 2.0;
};

// Chat-completions client for any OpenAI-compatible endpoint (OpenAI, vLLM,
// Ollama's /v1, gateways). Retries transport errors, 5xx and 429 with full
// jitter backoff; other 4xx fail immediately.
class OpenAiCompatibleProvider : public Provider {
 public:
  explicit OpenAiCompatibleProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport = nullptr,
                                    Sleeper sleeper = nullptr, BackoffPolicy backoff = {},
                                    std::uint64_t jitter_seed = 0x5EED);

  nlohmann::json build_request_body(const std::vector<ChatMessage>& messages, double temperature) const;
  std::string endpoint_url() const;

 protected:
  AgentReply do_complete(const std::vector<ChatMessage>& messages, double temperature) override;

 private:
  std::chrono::milliseconds backoff_delay(int retry_index);

  std::shared_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
  BackoffPolicy backoff_;
  std::mutex rng_mu_;
  std::uint64_t rng_state_;
};

struct MockRule {
  std::string match;
  bool regex = false;
  std::string response;
};

// Deterministic scripted provider. Rules are tried in order against the
// concatenated text of every user message; the first hit answers. Responses
// may use {{echo}} (last user text part) and {{0}}..{{9}} (regex groups).
class MockProvider : public Provider {
 public:
  MockProvider(ProviderConfig config, std::vector<MockRule> rules, std::string default_response);

  const std::vector<MockRule>& rules() const noexcept { return rules_; }
  const std::string& default_response() const noexcept { return default_response_; }

 protected:
  AgentReply do_complete(const std::vector<ChatMessage>& messages, double temperature) override;

 private:
  std::vector<MockRule> rules_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string default_response_;
};

// Loads a JSONL fixture: {"match":..., "regex":bool, "response":...} lines
// plus one {"default":...}. Throws FixtureError.
std::unique_ptr<MockProvider> mock_provider_from_fixture(const std::string& path, std::string name = "mock");

std::shared_ptr<Provider> make_provider(const ProviderConfig& config);

std::string concatenated_user_text(const std::vector<ChatMessage>& messages);

// First syntactically valid top-level JSON object inside the reply (code
// fences and surrounding prose are ignored).
std::optional<nlohmann::json> extract_json_object(std::string_view reply);

struct JsonReply {
  nlohmann::json value;
  int retries_used = 0;
  std::vector<std::string> raw_replies;
};

inline constexpr std::string_view kJsonRepairPrompt = "Return only valid JSON.";

// Asks for a JSON object; re-prompts once on a parse failure. Throws
// MalformedResponse carrying both raw replies after the second failure.
JsonReply complete_json(Provider& provider, std::vector<ChatMessage> messages, std::string_view schema_hint,
                        const CallOptions& options = {});

}  // namespace docs2synth::agents
